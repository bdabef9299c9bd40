"""Finite-volume Fokker-Planck solver for 1-D Langevin diffusions.

The unknown is the density f_t of X_t with respect to the invariant measure
mu(dx) proportional to exp(-U(x)) dx, which evolves by df/dt = L f with
L f = f'' - U' f'. On a uniform grid the generator becomes the symmetric
(in the mu-weighted inner product) tridiagonal operator

    (L f)_i = [a_{i+1/2} (f_{i+1} - f_i) - a_{i-1/2} (f_i - f_{i-1})] / (w_i dx^2)

with no-flux ends, so mass sum_i w_i f_i is conserved exactly.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, linalg

from .errors import ConvexityError, SolverError, TruncationError
from .profile import DistanceTriple, MixingProfile

TRUNCATION_WARN = 1e-10
TRUNCATION_FAIL = 1e-6
CLIP_TOL = 1e-12
MASS_TOL = 1e-8
LOG_FLOOR = np.finfo(float).tiny


@dataclass(frozen=True)
class Potential1D:
    """Smooth convex potential with a claimed curvature lower bound ``kappa``.

    The callables must accept numpy arrays. ``spec`` is a JSON-able
    description used in export sidecars and manifests.
    """

    value: Callable
    derivative: Callable
    second_derivative: Callable
    kappa: float
    name: str = "custom"
    kappa_source: str = "analytic"
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValueError("kappa must be nonnegative")


def polynomial_potential(even_coefficients, name="polynomial", kappa=None, kappa_source=None):
    """U(x) = sum_j c_j x^(2j) for j = 1, 2, ... (``even_coefficients[j-1] = c_j``).

    When ``kappa`` is omitted it is filled in later from the grid minimum of
    U'' (see :func:`build_grid`) and flagged as numerical.
    """
    coeffs = [float(c) for c in even_coefficients]
    if not coeffs:
        raise ValueError("need at least one coefficient")
    full = np.zeros(2 * len(coeffs) + 1)
    full[2::2] = coeffs
    poly = np.polynomial.Polynomial(full)
    d1, d2 = poly.deriv(1), poly.deriv(2)
    numeric = kappa is None
    return Potential1D(
        value=poly, derivative=d1, second_derivative=d2,
        kappa=0.0 if numeric else float(kappa),
        name=name,
        kappa_source=kappa_source or ("numerical" if numeric else "analytic"),
        spec={"kind": "even-polynomial", "coefficients": coeffs},
    )


def named_potential(name: str) -> Potential1D:
    """``ou``: x^2/2 (kappa 1); ``quartic``: x^4/4 (kappa 0); ``ou+quartic``: x^2/2 + x^4/4 (kappa 1)."""
    table = {"ou": ([0.5], 1.0), "quartic": ([0.0, 0.25], 0.0), "ou+quartic": ([0.5, 0.25], 1.0)}
    if name not in table:
        raise ValueError(f"unknown potential {name!r}; expected one of {sorted(table)}")
    coeffs, kappa = table[name]
    pot = polynomial_potential(coeffs, name=name, kappa=kappa, kappa_source="analytic")
    pot.spec["named"] = name
    return pot


def tail_mass(potential: Potential1D, R: float) -> float:
    """mu-mass outside [-R, R], by adaptive quadrature of exp(-U) on the two tails."""
    u_r = max(float(potential.value(R)), float(potential.value(-R)))
    core, _ = integrate.quad(lambda x: math.exp(u_r - potential.value(x)), -R, R, limit=200)
    right, _ = integrate.quad(lambda x: math.exp(u_r - potential.value(x)), R, math.inf)
    left, _ = integrate.quad(lambda x: math.exp(u_r - potential.value(x)), -math.inf, -R)
    return (left + right) / (left + right + core)


def default_radius(potential: Potential1D, max_tail=1e-12, step=0.5) -> float:
    """Smallest multiple of ``step`` whose truncated mu-mass is below ``max_tail``."""
    R = step
    while R < 1e3:
        with np.errstate(over="ignore", under="ignore"):
            if tail_mass(potential, R) < max_tail:
                return R
        R += step
    raise TruncationError("could not find a truncation radius below 1000")


@dataclass(frozen=True)
class WeightedGrid:
    """Uniform grid on [-R, R] carrying the discretized invariant measure.

    ``conductances`` has n + 1 entries: index j is the edge between nodes
    j - 1 and j, and the two outer (no-flux) edges are exactly zero.
    """

    potential: Potential1D
    R: float
    nodes: np.ndarray
    weights: np.ndarray
    conductances: np.ndarray
    dx: float
    truncated_mass: float
    warnings: tuple = ()

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def kappa(self) -> float:
        return self.potential.kappa

    def describe(self) -> dict:
        return {"R": self.R, "n": self.n, "dx": self.dx,
                "truncated_mass": self.truncated_mass, "kappa": self.kappa,
                "kappa_source": self.potential.kappa_source,
                "potential": self.potential.spec, "warnings": list(self.warnings)}


def build_grid(potential: Potential1D, R: float, n: int) -> WeightedGrid:
    if n < 16:
        raise ValueError("need n >= 16 nodes")
    if not R > 0:
        raise ValueError("R must be positive")
    x = np.linspace(-R, R, n)
    dx = 2.0 * R / (n - 1)
    u2 = np.asarray(potential.second_derivative(x), dtype=float)
    if potential.kappa_source == "numerical":
        kappa = max(float(u2.min()), 0.0)
        if u2.min() < -1e-12:
            i = int(np.argmin(u2))
            raise ConvexityError(f"U'' = {u2[i]:.6g} < 0 at node {i} (x = {x[i]:.6g})")
        potential = Potential1D(potential.value, potential.derivative, potential.second_derivative,
                                kappa, potential.name, "numerical", dict(potential.spec))
    slack = 1e-12 * max(1.0, potential.kappa)
    bad = np.flatnonzero(u2 < potential.kappa - slack)
    if bad.size:
        i = int(bad[0])
        raise ConvexityError(
            f"curvature certificate kappa={potential.kappa} fails at node {i} "
            f"(x = {x[i]:.6g}, U'' = {u2[i]:.6g})")

    u = np.asarray(potential.value(x), dtype=float)
    u_mid = np.asarray(potential.value(x[:-1] + 0.5 * dx), dtype=float)
    u_min = min(u.min(), u_mid.min())
    rho = np.exp(-(u - u_min))
    trap = np.ones(n)
    trap[[0, -1]] = 0.5
    Z = float(np.sum(trap * rho) * dx)
    weights = trap * rho * dx / Z
    cond = np.zeros(n + 1)
    cond[1:-1] = np.exp(-(u_mid - u_min)) * dx / Z

    with np.errstate(over="ignore", under="ignore"):
        lost = tail_mass(potential, R)
    notes = []
    if lost > TRUNCATION_FAIL:
        raise TruncationError(f"mu places mass {lost:.3e} outside [-{R}, {R}]")
    if lost > TRUNCATION_WARN:
        notes.append(f"truncated mass {lost:.3e} exceeds {TRUNCATION_WARN:g}")
    for arr in (x, weights, cond):
        arr.setflags(write=False)
    return WeightedGrid(potential, float(R), x, weights, cond, dx, float(lost), tuple(notes))


@dataclass(frozen=True)
class GeneratorOperator:
    """Tridiagonal generator; ``lower[i]`` couples node i+1 to node i, ``upper[i]`` node i to i+1."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    weights: np.ndarray

    def apply(self, f):
        f = np.asarray(f, dtype=float)
        out = self.diag * f
        out[:-1] += self.upper * f[1:]
        out[1:] += self.lower * f[:-1]
        return out

    def symmetrized(self):
        """Diagonal and off-diagonal of W^{1/2} L W^{-1/2} (a symmetric matrix)."""
        off = np.sqrt(self.upper * self.lower)
        return self.diag.copy(), off

    def banded(self, scale):
        """Banded storage of I + scale * L for :func:`scipy.linalg.solve_banded`."""
        ab = np.zeros((3, self.diag.size))
        ab[0, 1:] = scale * self.upper
        ab[1] = 1.0 + scale * self.diag
        ab[2, :-1] = scale * self.lower
        return ab


def discretize_generator(grid: WeightedGrid) -> GeneratorOperator:
    a, w, h2 = grid.conductances, grid.weights, grid.dx**2
    diag = -(a[:-1] + a[1:]) / (w * h2)
    upper = a[1:-1] / (w[:-1] * h2)
    lower = a[1:-1] / (w[1:] * h2)
    return GeneratorOperator(lower, diag, upper, grid.weights)


@dataclass(frozen=True)
class SpectralReport:
    lam: float
    eigen_residual: float
    ground_eigenvalue: float = 0.0


def spectral_gap_numeric(grid: WeightedGrid) -> SpectralReport:
    """Smallest nonzero eigenvalue of -L, via the symmetrized tridiagonal form."""
    diag, off = discretize_generator(grid).symmetrized()
    try:
        vals, vecs = linalg.eigh_tridiagonal(-diag, -off, select="i", select_range=(0, 1))
    except (linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"tridiagonal eigensolver failed: {exc}") from exc
    lam, v = float(vals[1]), vecs[:, 1]
    Sv = -diag * v
    Sv[:-1] -= off * v[1:]
    Sv[1:] -= off * v[:-1]
    resid = float(np.linalg.norm(Sv - lam * v))
    if not lam > 0:
        raise SolverError(f"nonpositive spectral gap {lam}")
    return SpectralReport(lam, resid, float(vals[0]))


def dirac_approx(grid: WeightedGrid, x0: float, delta: float) -> np.ndarray:
    """Gaussian bump N(x0, delta^2) written as a density with respect to mu."""
    if delta < 2 * grid.dx:
        raise ValueError(f"delta={delta} under-resolved: needs >= 2 dx = {2 * grid.dx:.3g}")
    if not (-grid.R + 4 * delta < x0 < grid.R - 4 * delta):
        raise ValueError(f"bump at {x0} with width {delta} too close to the boundary +-{grid.R}")
    u = np.asarray(grid.potential.value(grid.nodes), dtype=float)
    log_f = -0.5 * ((grid.nodes - x0) / delta) ** 2 + u
    f = np.exp(log_f - log_f.max())
    return f / np.dot(grid.weights, f)


@dataclass(frozen=True)
class DensityCurve:
    """Densities f_t (rows) at ``times`` on ``grid``; ``solver`` records the stepping parameters."""

    grid: WeightedGrid
    times: np.ndarray
    values: np.ndarray
    solver: dict = field(default_factory=dict)

    def mass(self):
        return self.values @ self.grid.weights

    def to_csv(self, path):
        """Long format with header ``t,x,f``."""
        tmp = f"{path}.tmp"
        with open(tmp, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["t", "x", "f"])
            for t, row in zip(self.times, self.values):
                for x, f in zip(self.grid.nodes, row):
                    out.writerow([repr(float(t)), repr(float(x)), repr(float(f))])
        os.replace(tmp, path)

    def to_binary(self, stem):
        """Write ``stem.bin`` (float64 little-endian, row-major, times x nodes) and ``stem.json``."""
        data = np.ascontiguousarray(self.values, dtype="<f8")
        sidecar = {
            "format": "cutofflab-density-v1",
            "dtype": "<f8",
            "order": "row-major",
            "shape": list(data.shape),
            "times": [float(t) for t in self.times],
            "grid": self.grid.describe(),
            "solver": self.solver,
            "tolerances": {"mass": MASS_TOL, "clip": CLIP_TOL},
        }
        with open(f"{stem}.bin.tmp", "wb") as fh:
            fh.write(data.tobytes())
        os.replace(f"{stem}.bin.tmp", f"{stem}.bin")
        with open(f"{stem}.json.tmp", "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(f"{stem}.json.tmp", f"{stem}.json")


def load_density_binary(stem):
    """Read back ``(times, values, sidecar)`` written by :meth:`DensityCurve.to_binary`."""
    with open(f"{stem}.json") as fh:
        meta = json.load(fh)
    values = np.fromfile(f"{stem}.bin", dtype=meta["dtype"]).reshape(meta["shape"])
    return np.array(meta["times"]), values, meta


def _clip(f, where=""):
    low = float(f.min())
    if low < -CLIP_TOL:
        raise SolverError(f"density undershoots to {low:.3e}{where}")
    return np.maximum(f, 0.0) if low < 0 else f


def evolve(grid: WeightedGrid, f0, t_end: float, dt_init: float = 1e-5, times=None,
           growth: float = 1.05, dt_max: float = 1e-2) -> DensityCurve:
    """Crank-Nicolson integration of df/dt = L f up to ``t_end``.

    The step starts at ``dt_init`` and grows geometrically by ``growth`` up to
    ``dt_max``; steps are shortened to land exactly on each requested output
    time (default: ``t_end`` only).
    """
    f = np.array(f0, dtype=float)
    w = grid.weights
    if f.shape != w.shape:
        raise ValueError("f0 does not match the grid")
    f = _clip(f, " in the initial condition")
    if abs(np.dot(w, f) - 1.0) > MASS_TOL:
        raise ValueError("initial density must have unit mass")
    outs = np.asarray([t_end] if times is None else times, dtype=float)
    if np.any(np.diff(outs) <= 0) or outs[0] < 0 or outs[-1] > t_end * (1 + 1e-12):
        raise ValueError("output times must be increasing and lie in [0, t_end]")
    if not (dt_init > 0 and dt_max >= dt_init and growth >= 1):
        raise ValueError("invalid step-size schedule")

    L = discretize_generator(grid)
    rows = []
    t, dt, steps = 0.0, dt_init, 0
    for target in outs:
        while t < target:
            h = min(dt, target - t)
            rhs = f + 0.5 * h * L.apply(f)
            try:
                f_new = linalg.solve_banded((1, 1), L.banded(-0.5 * h), rhs, check_finite=False)
            except (linalg.LinAlgError, ValueError) as exc:
                raise SolverError(f"linear solve failed at t={t}: {exc}") from exc
            if not np.all(np.isfinite(f_new)):
                raise SolverError(f"nonfinite density at t={t + h}")
            drift = abs(np.dot(w, f_new) - np.dot(w, f))
            if drift > MASS_TOL:
                raise SolverError(f"mass drift {drift:.3e} in one step at t={t + h}")
            if f_new.min() < 0:
                f_new = _clip(f_new, f" at t={t + h}")
                f_new /= np.dot(w, f_new)
            f = f_new
            steps += 1
            if h == dt:
                t += h
                dt = min(dt * growth, dt_max)
            else:
                t = float(target)
        rows.append(f.copy())
    values = np.array(rows)
    values.setflags(write=False)
    outs.setflags(write=False)
    solver = {"scheme": "crank-nicolson", "dt_init": dt_init, "growth": growth,
              "dt_max": dt_max, "steps": steps, "t_end": t_end}
    return DensityCurve(grid, outs, values, solver)


def functionals(grid: WeightedGrid, f) -> DistanceTriple:
    """(TV, Ent, Varent) of the density f with respect to the grid measure."""
    f = _clip(np.asarray(f, dtype=float))
    w = grid.weights
    mass = float(np.dot(w, f))
    if abs(mass - 1.0) > 1e-6:
        raise ValueError(f"density has mass {mass}, expected 1")
    pos = f > 0
    logf = np.zeros_like(f)
    logf[pos] = np.log(f[pos])
    ent = float(np.dot(w, f * logf))
    varent = float(np.dot(w[pos], f[pos] * (logf[pos] - ent) ** 2))
    tv = 0.5 * float(np.dot(w, np.abs(f - 1.0)))
    return DistanceTriple(min(tv, 1.0), max(ent, 0.0), max(varent, 0.0))


def entropy_dissipation(grid: WeightedGrid, f) -> float:
    """Discrete Dirichlet form sum_edges a (f_{i+1} - f_i)(log f_{i+1} - log f_i) / dx^2.

    Zero entries (CN round-off clipped to 0 in the far tails) are floored at
    the smallest normal float before taking logs.
    """
    f = _clip(np.asarray(f, dtype=float))
    logf = np.log(np.maximum(f, LOG_FLOOR))
    a = grid.conductances[1:-1]
    return float(np.sum(a * np.diff(f) * np.diff(logf)) / grid.dx**2)


def fp_profile(grid: WeightedGrid, f0, times, dt_init=1e-5, growth=1.05, dt_max=1e-2,
               spectral: SpectralReport | None = None):
    """Evolve ``f0`` and assemble a :class:`MixingProfile` plus the raw :class:`DensityCurve`.

    dEnt/dt is taken as minus the discrete entropy dissipation of each slice.
    """
    times = np.asarray(times, dtype=float)
    curve = evolve(grid, f0, float(times[-1]), dt_init, times, growth, dt_max)
    spectral = spectral or spectral_gap_numeric(grid)
    triples = [functionals(grid, f) for f in curve.values]
    dent = np.array([-entropy_dissipation(grid, f) for f in curve.values])
    meta = {"resolution": {"R": grid.R, "n": grid.n, "dx": grid.dx},
            "solver": curve.solver, "potential": grid.potential.spec,
            "kappa_source": grid.potential.kappa_source,
            "eigen_residual": spectral.eigen_residual}
    profile = MixingProfile(times, tuple(triples), dent, spectral.lam, grid.kappa,
                            "fokker-planck", meta)
    return profile, curve
