"""Command line runner: ``ruelle <command> [--preset NAME] [--config FILE] ...``.

Every command writes ``<directory>/<command>/report.json`` and, when CSV
output is enabled, its tables next to it.  Exit status is 0 on success, 1
when ``selftest`` or a ``--from-report`` replay finds a discrepancy, 2 on
invalid input and 3 when a numerical routine does not converge.

The output directory comes from ``--out``, else the ``RUELLE_OUTPUT_DIR``
environment variable, else ``output.directory``; nothing else is read from
the environment.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import clt, config as cfgmod, markovbasis as mb, selftest, thermo
from .funcspace import GridFunction, inner_product, iter_words
from .transfer import (
    ConvergenceError,
    apply_transfer,
    gibbs_measure,
    kernel_project,
    normalization_defect,
    normalize_potential,
    solve_rpf,
)

SCHEMA_VERSION = 1
OUTPUT_ENV = "RUELLE_OUTPUT_DIR"
EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_NONCONVERGED = 0, 1, 2, 3
COMMANDS = (
    "rpf",
    "normalize",
    "pressure-curve",
    "variance",
    "clt",
    "entropy-derivatives",
    "basis",
    "selftest",
)


def jsonable(obj):
    """Plain Python types for JSON; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _table(header, rows):
    return {"header": list(header), "rows": [list(r) for r in rows]}


def _function_table(g: GridFunction):
    rows = [list(w) + [float(v)] for w, v in zip(iter_words(g.space, g.depth), g.values)]
    return _table([f"s{i + 1}" for i in range(g.depth)] + ["value"], rows)


def _normalized(cfg):
    fn, log_lam = normalize_potential(cfg.space, cfg.potential, tol=cfg.run.tol)
    return fn, log_lam


def _kernel_direction(cfg, fn):
    rng = np.random.default_rng(cfg.run.direction_seed)
    if cfg.markov is not None:
        return selftest.random_kernel_direction(cfg.markov, rng, cfg.run.max_word_len)
    depth = max(fn.depth, 2)
    raw = GridFunction(cfg.space, depth, rng.normal(size=cfg.space.size ** depth))
    eta, _, _ = kernel_project(cfg.space, fn, raw)
    mu = gibbs_measure(cfg.space, fn, max(eta.depth, 1))
    return eta * (1.0 / math.sqrt(inner_product(eta, eta, mu)))


# commands: each returns (results, tables)


def cmd_rpf(cfg):
    sol = solve_rpf(cfg.space, cfg.potential, tol=cfg.run.tol)
    depth = cfg.run.depth if cfg.run.depth is not None else max(cfg.potential.depth, 1)
    fn, _ = _normalized(cfg)
    mu = gibbs_measure(cfg.space, fn, depth)
    results = sol.to_dict()
    results["eigfun_min"] = float(sol.eigfun.values.min())
    results["eigfun_max"] = float(sol.eigfun.values.max())
    results["gibbs_depth"] = depth
    results["gibbs_shift_defect"] = mu.shift_defect()
    gib = _table(
        [f"s{i + 1}" for i in range(depth)] + ["value"],
        [list(w) + [float(v)] for w, v in zip(iter_words(cfg.space, depth), mu.weights)],
    )
    return results, {"eigfun": _function_table(sol.eigfun), "gibbs": gib}


def cmd_normalize(cfg):
    fn, log_lam = _normalized(cfg)
    results = {"log_lambda": log_lam, "normalization_defect": normalization_defect(cfg.space, fn)}
    return results, {"normalized": _function_table(fn)}


def pressure_curve(cfg):
    """Rows ``(t, P(f + t g), p', p'', int g dmu_{f+tg})``."""
    space, f, g = cfg.space, cfg.potential, cfg.observable
    ts = np.linspace(cfg.run.t_min, cfg.run.t_max, cfg.run.t_points)
    rows = []
    for t in ts:
        t = float(t)
        p = thermo.pressure(space, f + t * g, tol=cfg.run.tol)
        dp = thermo.fd_first(lambda s: thermo.pressure(space, f + s * g, tol=cfg.run.tol), t0=t)
        fn, _ = normalize_potential(space, f + t * g, tol=cfg.run.tol)
        integral = thermo.pressure_derivative(space, fn, g)
        ddp = thermo.pressure_second_derivative(space, fn, g, method="resolvent")
        rows.append([t, p, dp, ddp, integral])
    arr = np.array(rows)
    second = arr[2:, 1] - 2 * arr[1:-1, 1] + arr[:-2, 1]
    results = {
        "points": len(rows),
        "max_p_prime_gap": float(np.max(np.abs(arr[:, 2] - arr[:, 4]))),
        "min_second_difference": float(second.min()),
        "max_p_double_prime": float(arr[:, 3].max()),
        "min_p_double_prime": float(arr[:, 3].min()),
    }
    header = ("t", "pressure", "p_prime", "p_double_prime", "p_prime_integral")
    return results, {"pressure_curve": _table(header, rows)}


def cmd_variance(cfg):
    fn, _ = _normalized(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = thermo.variance_report(cfg.space, fn, cfg.observable, fd_step=cfg.run.fd_step)
    results = rep.to_dict()
    results["warnings"] = [str(w.message) for w in caught]
    obs = cfg.raw.get("observable", {})
    if cfg.markov is not None and obs.get("preset") == "indicator" and len(obs.get("word", "1")) == 1:
        scale = float(obs.get("value", "1.0"))
        results["oracle_c"] = scale * scale * selftest.oracle_c(cfg.markov)
    return results, {}


def cmd_clt(cfg):
    fn, _ = _normalized(cfg)
    r = cfg.run
    rep = clt.clt_report(cfg.space, fn, cfg.observable, r.n, r.m, r.seed, z_grid=r.z_grid)
    results = rep.to_dict()
    hist = results.pop("histogram")
    cols = ("bin_left", "bin_right", "count", "gaussian_density")
    return results, {"histogram": _table(cols, zip(*(hist[c] for c in cols)))}


def cmd_entropy(cfg):
    space, phi = cfg.space, cfg.observable
    fn, _ = _normalized(cfg)
    eta = _kernel_direction(cfg, fn)

    def h(t):
        return thermo.entropy_along(space, fn, eta, t)

    fd1 = thermo.fd_first(h)
    fd2 = thermo.fd_second(h)
    lit1 = thermo.entropy_derivative(space, fn, eta)
    lit2 = thermo.entropy_second_derivative(space, fn, eta)
    gen = thermo.entropy_derivative_general(space, fn, eta)
    lr = thermo.linear_response_report(space, fn, phi, eta)
    lr_fd = thermo.fd_first(lambda t: thermo.observable_mean_along(space, fn, eta, phi, t))
    results = {
        "entropy": thermo.entropy(space, fn),
        "first_fd": fd1,
        "first_literal": lit1,
        "first_general": gen,
        "first_literal_rel_err": abs(lit1 - fd1) / abs(fd1),
        "first_general_rel_err": abs(gen - fd1) / abs(fd1),
        "second_fd": fd2,
        "second_literal": lit2,
        "second_literal_rel_err": abs(lit2 - fd2) / abs(fd2),
        "linear_response_series": lr["series"],
        "linear_response_inner": lr["inner"],
        "linear_response_fd": lr_fd,
    }
    comparisons = [
        ("entropy_first_literal", lit1, fd1),
        ("entropy_first_general", gen, fd1),
        ("entropy_second_literal", lit2, fd2),
        ("linear_response_series", lr["series"], lr_fd),
        ("linear_response_inner", lr["inner"], lr_fd),
    ]
    derivs = _table(
        ("quantity", "analytic", "fd", "abs_gap"),
        [(name, a, b, abs(a - b)) for name, a, b in comparisons],
    )
    return results, {"direction": _function_table(eta), "derivatives": derivs}


def cmd_basis(cfg):
    spec = cfg.markov
    if spec is None:
        raise cfgmod.ConfigError("space.kind: basis needs space.kind = markov")
    f, space = spec.log_j, spec.space
    max_len = cfg.run.max_word_len
    items = mb.kernel_basis(spec, max_len)
    depth = max(b.depth for _, b in items)
    mu = mb.markov_gibbs(spec, depth)
    fs = [b for _, b in items]
    gram = np.array([[inner_product(a, b, mu) for b in fs] for a in fs])
    haar = [mb.haar_e(spec, ())] + [mb.haar_e(spec, w) for w in mb.words(max_len + 1)]
    hgram = np.array([[inner_product(a, b, mu) for b in haar] for a in haar])
    ann = max(float(np.max(np.abs(apply_transfer(space, f, b).values))) for b in fs)
    completion_vs_a = float(np.max(np.abs(gram[:2, 2:]))) if len(fs) > 2 else 0.0
    eta = _kernel_direction(cfg, f)
    words = mb.words(max_len)
    xi, _, _ = kernel_project(space, f, cfg.observable)
    coeffs = mb.expansion_coefficients(spec, xi, words)
    resid = xi - mb.reconstruct(spec, coeffs)
    rdepth = max(resid.depth, depth)
    rmu = mb.markov_gibbs(spec, rdepth)
    coeff_sum = mb.coeff_directional_derivative(spec, cfg.observable, f, eta, words, tol=math.inf)
    direct = thermo.functional_directional_derivative(space, f, eta, cfg.observable)
    results = {
        "pi": spec.pi.tolist(),
        "haar_gram_max_err": float(np.max(np.abs(hgram - np.eye(len(haar))))),
        "kernel_gram_max_err": float(np.max(np.abs(gram - np.eye(len(fs))))),
        "max_transfer_of_basis": ann,
        "completion_vs_a_max_inner": completion_vs_a,
        "observable_kernel_coefficients": coeffs,
        "reconstruction_residual": math.sqrt(max(inner_product(resid, resid, rmu), 0.0)),
        "coefficient_sum": coeff_sum,
        "direct_integral": direct,
    }
    cyl = ["".join(map(str, w)) for w in iter_words(space, depth)]
    rows = []
    for key, b in items:
        vals = np.repeat(b.values, space.size ** (depth - b.depth))
        rows.append([key] + vals.tolist())
    return results, {"basis": _table(["element"] + cyl, rows)}


def cmd_selftest(cfg):
    checks, failed = selftest.run_suite()
    results = {"checks": [c.to_dict() for c in checks], "failed": failed, "passed": not failed}
    return results, {}


HANDLERS = {
    "rpf": cmd_rpf,
    "normalize": cmd_normalize,
    "pressure-curve": pressure_curve,
    "variance": cmd_variance,
    "clt": cmd_clt,
    "entropy-derivatives": cmd_entropy,
    "basis": cmd_basis,
    "selftest": cmd_selftest,
}


def execute(command, raw, base_dir=None):
    """Run one command on a raw configuration; returns the report dict."""
    if command not in HANDLERS:
        raise cfgmod.ConfigError(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    cfg = cfgmod.build(raw, base_dir)
    start = time.perf_counter()
    results, tables = HANDLERS[command](cfg)
    elapsed = time.perf_counter() - start
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": raw,
        "results": jsonable(results),
        "timings": {"wall_seconds": elapsed},
    }
    return report, tables, cfg


def write_outputs(report, tables, cfg, directory):
    out = Path(directory) / report["command"]
    out.mkdir(parents=True, exist_ok=True)
    if "json" in cfg.formats:
        with open(out / "report.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")
    if "csv" in cfg.formats:
        for name, tab in tables.items():
            with open(out / f"{name}.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(tab["header"])
                for row in tab["rows"]:
                    writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return out


def same_results(a, b) -> bool:
    """Reports agree on everything except timings."""
    keys = ("schema_version", "command", "config", "results")
    return all(a.get(k) == b.get(k) for k in keys)


def build_parser():
    p = argparse.ArgumentParser(prog="ruelle", description="Transfer operator experiments.")
    p.add_argument("command", help=f"one of: {', '.join(COMMANDS)}")
    p.add_argument("--preset", choices=sorted(cfgmod.PRESETS), help="built-in configuration")
    p.add_argument("--config", help="INI configuration file (applied after the preset)")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one configuration field; may be repeated")
    p.add_argument("--out", help="output directory (overrides output.directory)")
    p.add_argument("--from-report", help="replay the configuration embedded in a report.json")
    p.add_argument("--print-config", action="store_true", help="print the merged INI and exit")
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    if args.command not in COMMANDS:
        print(f"error: unknown command {args.command!r}; choose from {', '.join(COMMANDS)}",
              file=sys.stderr)
        return EXIT_INVALID
    previous = None
    base_dir = None
    try:
        if args.from_report:
            with open(args.from_report) as fh:
                previous = json.load(fh)
            raw = previous["config"]
            if previous.get("command") != args.command:
                raise cfgmod.ConfigError(
                    f"--from-report: report is for {previous.get('command')!r}, not {args.command!r}"
                )
        else:
            text = None
            if args.config:
                text = Path(args.config).read_text()
                base_dir = str(Path(args.config).resolve().parent)
            preset = args.preset
            if preset is None and text is None and args.command == "selftest":
                preset = "iid"
            raw = cfgmod.assemble(preset, text, args.config or "<config>", args.set)
        if args.print_config:
            print(cfgmod.to_ini(raw), end="")
            return EXIT_OK
        report, tables, cfg = execute(args.command, raw, base_dir)
    except (cfgmod.ConfigError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConvergenceError as exc:
        print(f"error: no convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    directory = args.out or os.environ.get(OUTPUT_ENV) or cfg.directory
    out = write_outputs(report, tables, cfg, directory)
    print(json.dumps({"command": args.command, "output": str(out), "results": report["results"]},
                     sort_keys=True, allow_nan=False))
    if previous is not None:
        if not same_results(previous, report):
            print("error: replay differs from the stored report", file=sys.stderr)
            return EXIT_FAIL
        print("replay identical", file=sys.stderr)
    if args.command == "selftest" and not report["results"]["passed"]:
        print(f"selftest failed: {', '.join(report['results']['failed'])}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
