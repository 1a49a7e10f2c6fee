"""Experiment configuration: INI text, presets and validation.

A configuration is kept in two forms.  ``raw`` is the nested mapping of
strings exactly as read (after presets and overrides are merged); it is
echoed into every report so that a run can be repeated from its own output.
:class:`ExperimentConfig` is the validated, typed view.
"""
from __future__ import annotations

import configparser
import copy
import math
from dataclasses import dataclass

import numpy as np

from .apriori import AprioriSpace, make_circle, make_finite_alphabet
from .funcspace import (
    GridFunction,
    compose_shift,
    from_index_evaluator,
    indicator,
    read_csv,
)
from .markovbasis import MarkovSpec, markov_spec

MAX_TABLE = 1 << 22
SPACE_KINDS = ("finite", "circle", "markov")
FUNC_PRESETS = ("zero", "constant", "markov-logj", "spin", "indicator", "coboundary", "cos", "table")
FORMATS = ("json", "csv")

DEFAULTS = {
    "run": {
        "tol": "1e-13",
        "n": "2000",
        "m": "50000",
        "seed": "7",
        "fd_step": "1e-2",
        "z_grid": ",".join(repr(float(z)) for z in np.linspace(-1.0, 1.0, 9)),
        "t_min": "-1.0",
        "t_max": "1.0",
        "t_points": "11",
        "max_word_len": "2",
        "direction_seed": "11",
    },
    "output": {"directory": "ruelle-out", "formats": "json,csv"},
}

_MARKOV = {"p00": "0.7", "p01": "0.3", "p10": "0.4", "p11": "0.6"}

PRESETS = {
    "iid": {
        "space": {"kind": "finite", "d": "2"},
        "potential": {"preset": "zero", "depth": "0"},
        "observable": {"preset": "spin"},
    },
    "markov": {
        "space": {"kind": "markov"},
        "markov": dict(_MARKOV),
        "potential": {"preset": "markov-logj"},
        "observable": {"preset": "indicator", "word": "1"},
    },
    "circle-cos": {
        "space": {"kind": "circle", "n_nodes": "256"},
        "potential": {"preset": "cos", "depth": "2", "value": "1.0"},
        "observable": {"preset": "cos", "depth": "1", "value": "1.0"},
        "run": {"n": "500", "m": "5000"},
    },
    "coboundary": {
        "space": {"kind": "markov"},
        "markov": dict(_MARKOV),
        "potential": {"preset": "markov-logj"},
        "observable": {"preset": "coboundary", "word": "1", "value": "0.25"},
    },
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class RunConfig:
    tol: float
    n: int
    m: int
    seed: int
    fd_step: float
    z_grid: tuple
    t_min: float
    t_max: float
    t_points: int
    max_word_len: int
    direction_seed: int
    depth: int | None


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    raw: dict
    space: AprioriSpace
    markov: MarkovSpec | None
    potential: GridFunction
    observable: GridFunction
    run: RunConfig
    directory: str
    formats: tuple


def _merge(base, extra):
    out = copy.deepcopy(base)
    for sec, items in extra.items():
        out.setdefault(sec, {}).update(items)
    return out


def parse_ini(text: str, source="<config>") -> dict:
    """Sections and keys as nested dicts of strings."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: line outside any [section]") from None
    except configparser.ParsingError as exc:
        lines = "; ".join(f"{source}:{no}: cannot parse {line.strip()!r}" for no, line in exc.errors)
        raise ConfigError(lines) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(f"{source}:{exc.lineno}: {exc.message.splitlines()[-1]}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return {sec: dict(parser[sec]) for sec in parser.sections()}


def to_ini(raw: dict) -> str:
    lines = []
    for sec in sorted(raw):
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {v}" for k, v in sorted(raw[sec].items()))
        lines.append("")
    return "\n".join(lines)


def parse_override(text: str):
    """``section.key=value`` into ``(section, key, value)``."""
    head, sep, value = text.partition("=")
    sec, dot, key = head.strip().partition(".")
    if not sep or not dot or not sec or not key:
        raise ConfigError(f"override {text!r}: expected section.key=value")
    return sec, key.strip(), value.strip()


def assemble(preset=None, ini_text=None, source="<config>", overrides=()) -> dict:
    """Defaults, then preset, then INI text, then ``section.key=value`` overrides."""
    raw = copy.deepcopy(DEFAULTS)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        raw = _merge(raw, PRESETS[preset])
    if ini_text is not None:
        raw = _merge(raw, parse_ini(ini_text, source))
    for item in overrides:
        sec, key, value = parse_override(item)
        raw.setdefault(sec, {})[key] = value
    return raw


# typed field readers; every error names section.key


def _get(raw, sec, key, default=None):
    val = raw.get(sec, {}).get(key, default)
    if val is None:
        raise ConfigError(f"{sec}.{key}: missing")
    return val


def _int(raw, sec, key, lo=None, hi=None, default=None):
    text = _get(raw, sec, key, default)
    try:
        val = int(text)
    except (TypeError, ValueError):
        raise ConfigError(f"{sec}.{key}: expected an integer, got {text!r}") from None
    if lo is not None and val < lo:
        raise ConfigError(f"{sec}.{key}: must be >= {lo}, got {val}")
    if hi is not None and val > hi:
        raise ConfigError(f"{sec}.{key}: must be <= {hi}, got {val}")
    return val


def _float(raw, sec, key, lo=None, hi=None, positive=False, default=None):
    text = _get(raw, sec, key, default)
    try:
        val = float(text)
    except (TypeError, ValueError):
        raise ConfigError(f"{sec}.{key}: expected a number, got {text!r}") from None
    if not math.isfinite(val):
        raise ConfigError(f"{sec}.{key}: must be finite, got {text!r}")
    if positive and val <= 0:
        raise ConfigError(f"{sec}.{key}: must be > 0, got {val}")
    if lo is not None and val < lo:
        raise ConfigError(f"{sec}.{key}: must be >= {lo}, got {val}")
    if hi is not None and val > hi:
        raise ConfigError(f"{sec}.{key}: must be <= {hi}, got {val}")
    return val


def _floats(raw, sec, key, default=None):
    text = _get(raw, sec, key, default)
    try:
        vals = tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"{sec}.{key}: expected comma separated numbers, got {text!r}") from None
    if not vals:
        raise ConfigError(f"{sec}.{key}: empty list")
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"{sec}.{key}: values must be finite")
    return vals


def _choice(raw, sec, key, choices, default=None):
    val = _get(raw, sec, key, default)
    if val not in choices:
        raise ConfigError(f"{sec}.{key}: must be one of {', '.join(choices)}, got {val!r}")
    return val


def _space(raw):
    kind = _choice(raw, "space", "kind", SPACE_KINDS)
    if kind == "markov":
        p = [[_float(raw, "markov", f"p{i}{j}") for j in range(2)] for i in range(2)]
        try:
            spec = markov_spec(p)
        except ValueError as exc:
            raise ConfigError(f"markov: {exc}") from None
        return spec.space, spec
    if kind == "circle":
        return make_circle(_int(raw, "space", "n_nodes", lo=4, hi=1 << 14)), None
    d = _int(raw, "space", "d", lo=2, hi=1 << 14)
    weights = raw.get("space", {}).get("weights")
    if weights is None:
        return make_finite_alphabet(d), None
    w = _floats(raw, "space", "weights")
    if len(w) != d:
        raise ConfigError(f"space.weights: expected {d} values, got {len(w)}")
    if min(w) <= 0:
        raise ConfigError("space.weights: values must be > 0")
    return make_finite_alphabet(d, w), None


def _word(raw, sec, space):
    text = _get(raw, sec, "word", "1")
    try:
        word = tuple(int(ch) for ch in text)
    except ValueError:
        raise ConfigError(f"{sec}.word: expected a string of symbol digits, got {text!r}") from None
    if not word or max(word) >= space.size or space.size > 10:
        raise ConfigError(f"{sec}.word: {text!r} is not a word over {space.size} symbols")
    return word


def _function(raw, sec, space, spec, base_dir):
    preset = _choice(raw, sec, "preset", FUNC_PRESETS)
    depth = _int(raw, sec, "depth", lo=0, hi=12, default="1")
    if space.size ** depth > MAX_TABLE:
        raise ConfigError(f"{sec}.depth: table of {space.size}**{depth} entries is too large")
    value = _float(raw, sec, "value", default="1.0")
    if preset == "zero":
        return GridFunction(space, depth, np.zeros(space.size ** depth))
    if preset == "constant":
        return GridFunction(space, depth, np.full(space.size ** depth, value))
    if preset == "markov-logj":
        if spec is None:
            raise ConfigError(f"{sec}.preset: markov-logj needs space.kind = markov")
        return spec.log_j
    if preset == "spin":
        if space.size != 2:
            raise ConfigError(f"{sec}.preset: spin needs a two-symbol space")
        return GridFunction(space, 1, [value, -value])
    if preset == "indicator":
        return indicator(space, _word(raw, sec, space)) * value
    if preset == "coboundary":
        v = indicator(space, _word(raw, sec, space))
        return v - compose_shift(v, 1) + value
    if preset == "cos":
        if depth < 1:
            raise ConfigError(f"{sec}.depth: cos needs depth >= 1")
        nodes = space.nodes
        return from_index_evaluator(space, depth, lambda w: value * math.cos(nodes[w[0]]))
    path = _get(raw, sec, "file")
    full = path if base_dir is None or path.startswith("/") else f"{base_dir}/{path}"
    try:
        return read_csv(space, full)
    except OSError as exc:
        raise ConfigError(f"{sec}.file: cannot read {path!r} ({exc.strerror})") from None
    except ValueError as exc:
        raise ConfigError(f"{sec}.file: {exc}") from None


def build(raw: dict, base_dir=None) -> ExperimentConfig:
    """Validate ``raw`` and construct every object the commands need."""
    for sec in ("space", "potential", "observable"):
        if sec not in raw:
            raise ConfigError(f"{sec}: section missing")
    space, spec = _space(raw)
    potential = _function(raw, "potential", space, spec, base_dir)
    observable = _function(raw, "observable", space, spec, base_dir)
    depth = raw.get("run", {}).get("depth")
    run = RunConfig(
        tol=_float(raw, "run", "tol", positive=True, hi=1e-6),
        n=_int(raw, "run", "n", lo=1, hi=10 ** 6),
        m=_int(raw, "run", "m", lo=1000, hi=10 ** 7),
        seed=_int(raw, "run", "seed", lo=0, hi=2 ** 64 - 1),
        fd_step=_float(raw, "run", "fd_step", positive=True, hi=0.1),
        z_grid=_floats(raw, "run", "z_grid"),
        t_min=_float(raw, "run", "t_min"),
        t_max=_float(raw, "run", "t_max"),
        t_points=_int(raw, "run", "t_points", lo=3, hi=10001),
        max_word_len=_int(raw, "run", "max_word_len", lo=1, hi=3),
        direction_seed=_int(raw, "run", "direction_seed", lo=0, hi=2 ** 64 - 1),
        depth=None if depth is None else _int(raw, "run", "depth", lo=0, hi=12),
    )
    if any(abs(z) > 1.0 for z in run.z_grid):
        raise ConfigError("run.z_grid: values must lie in [-1, 1]")
    if run.t_max <= run.t_min:
        raise ConfigError(f"run.t_max: must exceed run.t_min ({run.t_min})")
    formats = tuple(s.strip() for s in _get(raw, "output", "formats").split(",") if s.strip())
    bad = [s for s in formats if s not in FORMATS]
    if bad or not formats:
        raise ConfigError(f"output.formats: choose from {', '.join(FORMATS)}, got {formats}")
    return ExperimentConfig(
        raw=raw,
        space=space,
        markov=spec,
        potential=potential,
        observable=observable,
        run=run,
        directory=_get(raw, "output", "directory"),
        formats=formats,
    )
