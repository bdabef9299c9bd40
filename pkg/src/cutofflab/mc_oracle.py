"""Monte Carlo cross-checks, independent of the closed forms and the grid solver.

Randomness comes from counter-based Philox streams keyed by (seed, block):
paths are simulated in fixed blocks of ``PATH_BLOCK`` so that path p always
sees the same increments, whatever the worker count or total number of paths.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import SolverError
from .gaussian_ou import GaussianLaw

PATH_BLOCK = 8192
_MASK64 = (1 << 64) - 1


def stream(seed: int, index: int) -> np.random.Generator:
    """Independent Philox generator for substream ``index`` of master ``seed``."""
    return np.random.Generator(np.random.Philox(key=[seed & _MASK64, index & _MASK64]))


@dataclass(frozen=True)
class SdeConfig:
    """Euler-Maruyama setup for dX = drift(X) dt + sqrt(2) dB; horizon = dt * steps."""

    drift: Callable
    dimension: int
    x0: np.ndarray
    dt: float
    steps: int
    paths: int
    seed: int = 0

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float)
        if x0.ndim == 0:
            x0 = np.full(self.dimension, float(x0))
        if x0.shape != (self.dimension,):
            raise ValueError(f"x0 must have {self.dimension} coordinates")
        if self.dimension < 1 or self.steps < 1 or self.paths < 1:
            raise ValueError("dimension, steps and paths must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "x0", x0)

    @property
    def horizon(self) -> float:
        return self.dt * self.steps


def ou_drift(theta: float) -> Callable:
    return lambda x: -theta * x


@dataclass(frozen=True)
class EstimateWithError:
    value: float
    std_error: float
    samples: int

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be nonnegative")
        if self.samples < 2:
            raise ValueError("need at least two samples")


def _simulate_block(config: SdeConfig, block: int) -> np.ndarray:
    start = block * PATH_BLOCK
    m = min(PATH_BLOCK, config.paths - start)
    rng = stream(config.seed, block)
    x = np.tile(config.x0, (m, 1))
    noise_scale = math.sqrt(2.0 * config.dt)
    for k in range(config.steps):
        # full-block draws keep path p's noise independent of the total path count
        noise = rng.standard_normal((PATH_BLOCK, config.dimension))[:m]
        x = x + config.drift(x) * config.dt + noise_scale * noise
        if not np.all(np.isfinite(x)):
            raise SolverError(f"nonfinite Euler-Maruyama state at step {k + 1}")
    return x


def euler_maruyama(config: SdeConfig, workers: int | None = None) -> np.ndarray:
    """Terminal states, shape (paths, dimension); bit-identical for a given config."""
    blocks = range(-(-config.paths // PATH_BLOCK))
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda b: _simulate_block(config, b), blocks))
    else:
        parts = [_simulate_block(config, b) for b in blocks]
    return np.concatenate(parts, axis=0)


def export_samples_csv(samples, path):
    """Debug dump in long format ``path_id,coord_index,value``."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["path_id", "coord_index", "value"])
        for i, row in enumerate(samples):
            for j, v in enumerate(row):
                out.writerow([i, j, repr(float(v))])
    os.replace(tmp, path)


def _log_density_ratio(x, p: GaussianLaw, q: GaussianLaw):
    d = p.dimension
    return (-0.5 * d * math.log(p.variance / q.variance)
            - np.sum((x - p.mean) ** 2, axis=1) / (2 * p.variance)
            + np.sum((x - q.mean) ** 2, axis=1) / (2 * q.variance))


def _information_moments(p, q, samples, seed, groups=100):
    """Per-group sums of I and I^2 (I = log dp/dq at X ~ p), shifted by a pilot mean."""
    if p.dimension != q.dimension:
        raise ValueError(f"dimension mismatch: {p.dimension} vs {q.dimension}")
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    rng = stream(seed, 0)
    sizes = np.full(groups, samples // groups)
    sizes[: samples % groups] += 1
    s1, s2 = np.empty(groups), np.empty(groups)
    shift = None
    sd = math.sqrt(p.variance)
    for g, m in enumerate(sizes):
        x = p.mean + sd * rng.standard_normal((m, p.dimension))
        info = _log_density_ratio(x, p, q)
        if shift is None:
            shift = float(info.mean())
        info -= shift
        s1[g], s2[g] = info.sum(), (info * info).sum()
    return sizes, s1, s2, shift


def _jackknife(stat, sizes, s1, s2):
    n, t1, t2 = sizes.sum(), s1.sum(), s2.sum()
    full = stat(n, t1, t2)
    loo = np.array([stat(n - sizes[g], t1 - s1[g], t2 - s2[g]) for g in range(len(sizes))])
    G = len(sizes)
    se = math.sqrt((G - 1) / G * np.sum((loo - loo.mean()) ** 2))
    return full, se


def _var(n, t1, t2):
    return (t2 - t1 * t1 / n) / (n - 1)


def mc_varentropy(p: GaussianLaw, stationary: GaussianLaw, samples: int, seed: int) -> EstimateWithError:
    """Sample variance of log(dp/dstationary)(X), X ~ p, with a grouped jackknife error."""
    sizes, s1, s2, _ = _information_moments(p, stationary, samples, seed)
    value, se = _jackknife(_var, sizes, s1, s2)
    return EstimateWithError(float(value), float(se), int(samples))


def mc_entropy(p: GaussianLaw, stationary: GaussianLaw, samples: int, seed: int) -> EstimateWithError:
    """Sample mean of log(dp/dstationary)(X), X ~ p, with a grouped jackknife error."""
    sizes, s1, s2, shift = _information_moments(p, stationary, samples, seed)
    value, se = _jackknife(lambda n, t1, t2: t1 / n, sizes, s1, s2)
    return EstimateWithError(float(value + shift), float(se), int(samples))


def histogram_tv(samples, grid, f, bin_width: float | None = None, bootstrap: int = 200,
                 seed: int = 0) -> EstimateWithError:
    """Half L1 distance between the empirical law of 1-D samples and the grid law w_i f_i.

    Grid cells (node i owns [x_i - dx/2, x_i + dx/2], clipped to [-R, R]) are
    merged into bins of about ``bin_width`` (default: Freedman-Diaconis width
    of the sample). Samples outside [-R, R] count fully toward the distance.
    The estimate is biased upward by roughly sum_b sqrt(2 p_b / (pi N)) from
    sampling noise and downward by binning (coarsening can only lower TV).
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise ValueError("histogram_tv needs 1-D samples")
        x = x[:, 0]
    N = x.size
    if N == 0:
        raise ValueError("empty sample set")
    model_mass = grid.weights * np.asarray(f, dtype=float)
    if bin_width is None:
        q75, q25 = np.percentile(x, [75, 25])
        bin_width = 2.0 * (q75 - q25) * N ** (-1.0 / 3.0) if q75 > q25 else grid.dx
    merge = max(1, int(round(bin_width / grid.dx)))
    n = grid.n
    edges = np.concatenate([[-grid.R], grid.nodes[:-1] + 0.5 * grid.dx, [grid.R]])
    bin_of_cell = np.arange(n) // merge
    nbins = bin_of_cell[-1] + 1
    model_bins = np.bincount(bin_of_cell, weights=model_mass, minlength=nbins)
    inside = (x >= -grid.R) & (x <= grid.R)
    cell = np.clip(np.searchsorted(edges, x[inside], side="right") - 1, 0, n - 1)
    counts = np.bincount(bin_of_cell[cell], minlength=nbins).astype(float)
    outside = N - counts.sum()

    def tv_of(c, out):
        return 0.5 * (np.abs(c / N - model_bins).sum() + out / N)

    value = tv_of(counts, outside)
    probs = np.append(counts, outside) / N
    rng = stream(seed, 1)
    boot = rng.multinomial(N, probs, size=bootstrap)
    reps = np.array([tv_of(b[:-1].astype(float), b[-1]) for b in boot])
    return EstimateWithError(float(value), float(reps.std(ddof=1)), int(N))
