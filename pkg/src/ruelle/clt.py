"""Monte Carlo check of the central limit theorem for Gibbs measures.

For a normalized potential ``f`` of depth ``k`` the conditional law of the
first symbol given the next ``k - 1`` is ``nu_a exp(f(a u))``.  Sequences are
therefore grown by prepending symbols to an initial word drawn from the exact
``(k-1)``-marginal of the Gibbs measure; every finite window of the result has
the stationary law, so no burn-in is needed.

Random numbers come from numpy's counter-based Philox generator.  Stream
block ``b`` uses ``Philox(seed).jumped(b)``, so samples do not depend on the
total number of blocks requested.
"""
from __future__ import annotations

import csv
import math
from bisect import bisect_right
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import ndtr

from .funcspace import GridFunction
from .thermo import pressure_derivative, pressure_second_derivative
from .transfer import NORMALIZATION_TOL, NotNormalizedError, gibbs_measure

STREAM_BLOCK = 4096
DEFAULT_Z_GRID = tuple(np.linspace(-1.0, 1.0, 9))
DEGENERATE_SIGMA2 = 1e-10
MIN_SAMPLES = 1000


@dataclass(frozen=True)
class CltReport:
    """Empirical law of normalized Birkhoff sums against its Gaussian limit.

    ``ks_distance`` and ``mgf_max_abs_err`` are ``None`` when the variance is
    degenerate (``g`` cohomologous to a constant).
    """

    n: int
    m: int
    sigma2_used: float
    beta_prime: float
    ks_distance: float | None
    mgf_max_abs_err: float | None
    seed: int
    histogram: dict
    degenerate: bool = False
    sigma2_mc: float = float("nan")
    sigma2_mc_stderr: float = float("nan")
    z_grid: tuple = field(default=DEFAULT_Z_GRID)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["z_grid"] = [float(z) for z in self.z_grid]
        return d


class _Sampler:
    """Cumulative conditional tables ``P(x1 = a | x2..xk = ctx)``."""

    def __init__(self, space, f_norm: GridFunction):
        self.space = space
        self.k = max(f_norm.depth, 1)
        n = space.size
        self.n_ctx = n ** (self.k - 1)
        vals = np.repeat(f_norm.values, n ** (self.k - f_norm.depth))
        probs = space.weights[:, None] * np.exp(vals.reshape(n, self.n_ctx))
        defect = float(np.max(np.abs(probs.sum(axis=0) - 1.0)))
        if defect > NORMALIZATION_TOL:
            raise NotNormalizedError(
                f"transition weights sum to 1 only within {defect:.3e}; normalize f first"
            )
        cdf = np.cumsum(probs, axis=0).T
        cdf[:, -1] = 1.0
        self.cdf = cdf  # (n_ctx, N)
        if self.k > 1:
            marg = gibbs_measure(space, f_norm, self.k - 1).weights
            init = np.cumsum(marg)
            init[-1] = 1.0
        else:
            init = np.ones(1)
        self.init_cdf = init

    def initial(self, u):
        return np.minimum(np.searchsorted(self.init_cdf, u, side="right"), self.n_ctx - 1)

    def streams(self, length, u):
        """Grow ``u.shape[0]`` sequences of ``length`` symbols from uniforms ``u``.

        ``u`` has ``length - k + 2`` columns: one for the initial word and one
        per prepended symbol.
        """
        n, k = self.space.size, self.k
        rows = u.shape[0]
        ctx = self.initial(u[:, 0])
        out = np.empty((rows, length), dtype=np.int64)
        tail = ctx.copy()
        for pos in range(k - 2, -1, -1):
            out[:, length - (k - 1) + pos] = tail % n
            tail //= n
        col = 1
        for pos in range(length - k, -1, -1):
            a = (u[:, col:col + 1] >= self.cdf[ctx]).sum(axis=1)
            np.minimum(a, n - 1, out=a)
            out[:, pos] = a
            ctx = (a * self.n_ctx + ctx) // n
            col += 1
        return out


def sample_gibbs(space, f_norm: GridFunction, length: int, seed: int) -> np.ndarray:
    """One sequence of ``length`` symbol indices distributed by the Gibbs measure."""
    sampler = _Sampler(space, f_norm)
    n, k = space.size, sampler.k
    length = int(length)
    if length < k:
        raise ValueError(f"length must be at least {k}")
    rng = np.random.Generator(np.random.Philox(int(seed)))
    u = rng.random(length - k + 2).tolist()
    cdf = sampler.cdf.tolist()
    ctx = int(sampler.initial(u[0]))
    seq = []
    for pos in range(k - 1):
        seq.append((ctx // n ** (k - 2 - pos)) % n)
    seq.reverse()
    n_ctx = sampler.n_ctx
    for x in u[1:]:
        a = min(bisect_right(cdf[ctx], x), n - 1)
        seq.append(a)
        ctx = (a * n_ctx + ctx) // n
    seq.reverse()
    return np.array(seq[:length], dtype=np.int64)


def sample_streams(space, f_norm: GridFunction, length: int, m: int, seed: int,
                   block: int = STREAM_BLOCK) -> np.ndarray:
    """``m`` independent stationary sequences, shape ``(m, length)``."""
    return np.concatenate(list(_stream_blocks(_Sampler(space, f_norm), length, m, seed, block)))


def _stream_blocks(sampler, length, m, seed, block):
    length = int(length)
    if length < sampler.k:
        raise ValueError(f"length must be at least {sampler.k}")
    for b, start in enumerate(range(0, int(m), block)):
        rows = min(block, m - start)
        rng = np.random.Generator(np.random.Philox(int(seed)).jumped(b))
        u = rng.random((block, length - sampler.k + 2))[:rows]
        yield sampler.streams(length, u)


def _word_index(seq, depth, n):
    """Index of the depth-``depth`` word starting at each position (last axis)."""
    count = seq.shape[-1] - depth + 1
    idx = np.zeros(seq.shape[:-1] + (count,), dtype=np.int64)
    for i in range(depth):
        idx = idx * n + seq[..., i:i + count]
    return idx


def birkhoff_samples(g: GridFunction, sequence, n: int, m: int, beta_prime: float) -> np.ndarray:
    """Normalized Birkhoff sums ``sum_{j<n} (g(sigma^j x) - beta') / sqrt(n)``.

    ``sequence`` is either one long 1-D sequence, cut into ``m`` non-overlapping
    windows with stride ``n``, or a 2-D array holding one stream per row.
    """
    n, m = int(n), int(m)
    if n < 1 or m < 1:
        raise ValueError("n and m must be positive")
    seq = np.asarray(sequence, dtype=np.int64)
    span = n + g.depth - 1 if g.depth else n
    if seq.ndim == 1:
        need = n + g.depth + m * n
        if seq.size < need:
            raise ValueError(f"sequence has {seq.size} symbols, need at least {need}")
        windows = sliding_window_view(seq, span)[: m * n: n]
    elif seq.ndim == 2:
        if seq.shape[0] < m or seq.shape[1] < span:
            raise ValueError(f"streams have shape {seq.shape}, need at least ({m}, {span})")
        windows = seq[:m, :span]
    else:
        raise ValueError("sequence must be 1-D or 2-D")
    centered = g.values - float(beta_prime)
    if g.depth == 0:
        terms = np.broadcast_to(centered[0], (m, n))
    else:
        terms = centered[_word_index(windows, g.depth, g.space.size)]
    return terms.sum(axis=1) / math.sqrt(n)


def clt_samples(space, f_norm, g, n, m, seed, beta_prime=None, block=STREAM_BLOCK) -> np.ndarray:
    """Birkhoff samples from ``m`` independent streams, generated block by block."""
    if beta_prime is None:
        beta_prime = pressure_derivative(space, f_norm, g)
    sampler = _Sampler(space, f_norm)
    length = max(n + max(g.depth, 1) - 1, sampler.k)
    parts = [
        birkhoff_samples(g, streams, n, streams.shape[0], beta_prime)
        for streams in _stream_blocks(sampler, length, m, seed, block)
    ]
    return np.concatenate(parts)


def asymptotic_variance_mc(space, f_norm, g, n, m, seed, return_stderr=False):
    """Monte Carlo estimate of ``(1/n) E[(S_n g - n int g dmu)^2]``."""
    s2 = clt_samples(space, f_norm, g, n, m, seed) ** 2
    est = float(s2.mean())
    if return_stderr:
        return est, float(s2.std(ddof=1) / math.sqrt(s2.size))
    return est


def ks_distance(samples, sigma2) -> float:
    """One-sample Kolmogorov-Smirnov statistic against ``N(0, sigma2)``."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    x = np.sort(np.asarray(samples, dtype=float))
    m = x.size
    if m == 0:
        raise ValueError("no samples")
    cdf = ndtr(x / math.sqrt(sigma2))
    upper = np.arange(1, m + 1) / m - cdf
    lower = cdf - np.arange(m) / m
    return float(max(upper.max(), lower.max()))


def mgf_compare(samples, sigma2, z_grid=DEFAULT_Z_GRID) -> float:
    """Largest gap between the empirical MGF and ``exp(z^2 sigma2 / 2)`` on the grid."""
    z = np.asarray(z_grid, dtype=float).reshape(-1)
    if z.size == 0:
        raise ValueError("empty z grid")
    if np.any(np.abs(z) > 1.0):
        raise ValueError("z grid must lie in [-1, 1]")
    x = np.asarray(samples, dtype=float)
    emp = np.exp(np.outer(z, x)).mean(axis=1)
    return float(np.max(np.abs(emp - np.exp(0.5 * z * z * sigma2))))


def histogram(samples, sigma2, bins=60) -> dict:
    """Counts over ``[min, max]`` of the samples with the Gaussian density at bin centres."""
    x = np.asarray(samples, dtype=float)
    counts, edges = np.histogram(x, bins=bins)
    mid = 0.5 * (edges[:-1] + edges[1:])
    if sigma2 > 0:
        dens = np.exp(-0.5 * mid ** 2 / sigma2) / math.sqrt(2 * math.pi * sigma2)
    else:
        dens = np.zeros_like(mid)
    return {
        "bin_left": edges[:-1].tolist(),
        "bin_right": edges[1:].tolist(),
        "count": counts.tolist(),
        "gaussian_density": dens.tolist(),
    }


def write_histogram_csv(hist: dict, path):
    cols = ("bin_left", "bin_right", "count", "gaussian_density")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in zip(*(hist[c] for c in cols)):
            writer.writerow([repr(v) for v in row])


def clt_report(space, f_norm, g, n, m, seed, z_grid=DEFAULT_Z_GRID, bins=60) -> CltReport:
    """Sample, center with ``int g dmu`` and compare with ``N(0, sigma^2)``.

    The variance is the resolvent value of the second pressure derivative.
    """
    n, m = int(n), int(m)
    if n < 1:
        raise ValueError("n must be positive")
    if m < MIN_SAMPLES:
        raise ValueError(f"m must be at least {MIN_SAMPLES}")
    beta = pressure_derivative(space, f_norm, g)
    sigma2 = pressure_second_derivative(space, f_norm, g, method="resolvent")
    samples = clt_samples(space, f_norm, g, n, m, seed, beta_prime=beta)
    s2 = samples ** 2
    degenerate = sigma2 < DEGENERATE_SIGMA2
    return CltReport(
        n=n,
        m=m,
        sigma2_used=float(sigma2),
        beta_prime=float(beta),
        ks_distance=None if degenerate else ks_distance(samples, sigma2),
        mgf_max_abs_err=None if degenerate else mgf_compare(samples, sigma2, z_grid),
        seed=int(seed),
        histogram=histogram(samples, sigma2, bins),
        degenerate=bool(degenerate),
        sigma2_mc=float(s2.mean()),
        sigma2_mc_stderr=float(s2.std(ddof=1) / math.sqrt(m)),
        z_grid=tuple(float(z) for z in z_grid),
    )
