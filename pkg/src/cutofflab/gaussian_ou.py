"""Closed-form analytics for Ornstein-Uhlenbeck diffusions with U(x) = theta |x|^2 / 2.

Started from a point (or from an isotropic Gaussian), the law at time t > 0
is an isotropic Gaussian, so entropy, varentropy and total variation against
the stationary law N(0, I/theta) reduce to a handful of scalar formulas.
Coordinates are independent, which is how every quantity tensorizes over the
dimension.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from . import quadrature
from .errors import BracketError, DegenerateStartError, MonotonicityError
from .profile import DistanceTriple, MixingProfile

TV_ABS_TOL = 1e-9
_TAIL = 1e-17


@dataclass(frozen=True)
class GaussianLaw:
    """Isotropic Gaussian N(mean, variance * I)."""

    mean: np.ndarray
    variance: float

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.ndim != 1 or mean.size < 1:
            raise ValueError("mean must be a non-empty vector")
        if not np.all(np.isfinite(mean)):
            raise ValueError("mean must be finite")
        if not (self.variance > 0 and math.isfinite(self.variance)):
            raise ValueError(f"variance must be positive and finite, got {self.variance!r}")
        mean.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", float(self.variance))

    @property
    def dimension(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class OUModel:
    """dX = -theta X dt + sqrt(2) dB in R^d, started at ``start``.

    ``start_variance`` > 0 replaces the point start by N(start, start_variance I);
    the grid solver uses this to compare against its mollified initial bump.
    """

    theta: float
    dimension: int
    start: np.ndarray
    start_variance: float = 0.0

    def __post_init__(self):
        if not (self.theta > 0 and math.isfinite(self.theta)):
            raise ValueError("theta must be positive")
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ValueError("dimension must be an integer >= 1")
        start = np.asarray(self.start, dtype=float)
        if start.ndim == 0:
            start = np.full(int(self.dimension), float(start))
        if start.shape != (self.dimension,):
            raise ValueError(f"start must have {self.dimension} coordinates")
        if self.start_variance < 0:
            raise ValueError("start_variance must be nonnegative")
        start.setflags(write=False)
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "dimension", int(self.dimension))

    @property
    def stationary(self) -> GaussianLaw:
        return GaussianLaw(np.zeros(self.dimension), 1.0 / self.theta)

    @property
    def spectral_gap(self) -> float:
        return self.theta

    @property
    def curvature(self) -> float:
        return self.theta


def _check_time(t):
    if not math.isfinite(t):
        raise ValueError(f"time must be finite, got {t!r}")
    if t <= 0:
        raise DegenerateStartError(
            f"degenerate-start: the law at t={t!r} is not absolutely continuous")


def ou_law_at(model: OUModel, t: float) -> GaussianLaw:
    """Law of X_t: mean x0 e^{-theta t}, variance v0 e^{-2 theta t} + (1 - e^{-2 theta t}) / theta."""
    _check_time(t)
    decay = math.exp(-model.theta * t)
    variance = model.start_variance * decay**2 - math.expm1(-2 * model.theta * t) / model.theta
    return GaussianLaw(model.start * decay, variance)


def _check_pair(p, stationary):
    if p.dimension != stationary.dimension:
        raise ValueError(f"dimension mismatch: {p.dimension} vs {stationary.dimension}")


def gaussian_ent(p: GaussianLaw, stationary: GaussianLaw) -> float:
    """Relative entropy of p with respect to ``stationary``, in nats."""
    _check_pair(p, stationary)
    d = p.dimension
    rm1 = (p.variance - stationary.variance) / stationary.variance
    offset2 = float(np.sum((p.mean - stationary.mean) ** 2))
    ent = 0.5 * d * (rm1 - math.log1p(rm1)) + offset2 / (2 * stationary.variance)
    return max(ent, 0.0)


def gaussian_varent(p: GaussianLaw, stationary: GaussianLaw) -> float:
    """Variance of log(dp/dstationary)(X) for X ~ p.

    Per coordinate log f is a quadratic in a standard normal Z,
    ((r - 1)/2) Z^2 + (offset s / sigma^2) Z + const with r = s^2/sigma^2,
    whose variance is (r - 1)^2 / 2 + offset^2 s^2 / sigma^4.
    """
    _check_pair(p, stationary)
    d = p.dimension
    rm1 = (p.variance - stationary.variance) / stationary.variance
    offset2 = float(np.sum((p.mean - stationary.mean) ** 2))
    return 0.5 * d * rm1**2 + offset2 * p.variance / stationary.variance**2


def _prob_quadratic_positive(a, b, c0, mean, sd):
    """P(a Y^2 + b Y + c0 > 0) for Y ~ N(mean, sd^2); vectorized over c0."""
    c0 = np.asarray(c0, dtype=float)
    ndtr = special.ndtr
    if a == 0.0:
        if b == 0.0:
            return (c0 > 0).astype(float)
        root = -c0 / b
        return ndtr((mean - root) / sd) if b > 0 else ndtr((root - mean) / sd)
    disc = b * b - 4.0 * a * c0
    pos = disc > 0
    sq = np.sqrt(np.where(pos, disc, 0.0))
    q = -0.5 * (b + math.copysign(1.0, b) * sq)
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = q / a
        r2 = np.where(q != 0, c0 / q, r1)
    zlo = (np.minimum(r1, r2) - mean) / sd
    zhi = (np.maximum(r1, r2) - mean) / sd
    # Inside mass, evaluated in whichever tail keeps the difference well conditioned.
    inside = np.where(zlo > 0, ndtr(-zlo) - ndtr(-zhi), ndtr(zhi) - ndtr(zlo))
    if a > 0:
        return np.where(pos, 1.0 - inside, 1.0)
    return np.where(pos, inside, 0.0)


def _chi_logpdf(v, k):
    with np.errstate(divide="ignore"):
        return ((k - 1) * np.log(v) - 0.5 * v * v
                - (0.5 * k - 1) * math.log(2.0) - special.gammaln(0.5 * k))


def gaussian_tv(p: GaussianLaw, stationary: GaussianLaw, abs_tol: float = TV_ABS_TOL) -> float:
    """Total variation distance between two isotropic Gaussians.

    TV = P_p(A) - P_q(A) with A = {dp/dq > 1}. Along the mean-offset axis y
    and the squared orthogonal radius rho, A is {a y^2 + b y + a rho - K > 0}:
    for d = 1 that is a quadratic inequality solved exactly; for d >= 2 the
    rho direction (a scaled chi law with d - 1 degrees of freedom) is
    integrated out by adaptive quadrature.
    """
    _check_pair(p, stationary)
    d = p.dimension
    s2, sig2 = p.variance, stationary.variance
    delta = float(np.linalg.norm(p.mean - stationary.mean))
    if s2 == sig2:
        if delta == 0.0:
            return 0.0
        h = delta / (2.0 * math.sqrt(sig2))
        return float(special.ndtr(h) - special.ndtr(-h))

    a = 0.5 / sig2 - 0.5 / s2
    b = delta / s2
    log_r = math.log1p((s2 - sig2) / sig2)
    K = delta * delta / (2.0 * s2) + 0.5 * d * log_r
    s, sig = math.sqrt(s2), math.sqrt(sig2)

    if d == 1:
        c0 = -K
        tv = (_prob_quadratic_positive(a, b, c0, delta, s)
              - _prob_quadratic_positive(a, b, c0, 0.0, sig))
        return float(min(max(tv, 0.0), 1.0))

    k = d - 1
    v_lo = math.sqrt(stats.chi2.ppf(_TAIL, k))
    v_hi = math.sqrt(stats.chi2.isf(_TAIL, k))
    # The discriminant is linear in rho and vanishes at rho_star; the integrand has a kink there.
    rho_star = (b * b + 4.0 * a * K) / (4.0 * a * a)

    def mass_of_A(mean, sd, scale):
        def integrand(v):
            c0 = a * scale * v * v - K
            return np.exp(_chi_logpdf(v, k)) * _prob_quadratic_positive(a, b, c0, mean, sd)

        pts = [v_lo, v_hi]
        if rho_star > 0:
            v_star = math.sqrt(rho_star / scale)
            if v_lo < v_star < v_hi:
                pts.insert(1, v_star)
        val, _ = quadrature.integrate(integrand, pts, abs_tol=abs_tol / 4)
        return val

    tv = mass_of_A(delta, s, s2) - mass_of_A(0.0, sig, sig2)
    return float(min(max(tv, 0.0), 1.0))


def ou_dent_dt(model: OUModel, t: float) -> float:
    """Exact time derivative of Ent(X_t) for the OU model."""
    _check_time(t)
    theta, d = model.theta, model.dimension
    q = math.exp(-2 * theta * t)
    c = 1.0 - theta * model.start_variance
    r = theta * model.start_variance * q - math.expm1(-2 * theta * t)
    m2 = float(np.sum(model.start**2)) * q
    return -d * theta * q * q * c * c / r - theta**2 * m2


def ou_triple(model: OUModel, t: float) -> DistanceTriple:
    law = ou_law_at(model, t)
    stat = model.stationary
    return DistanceTriple(gaussian_tv(law, stat), gaussian_ent(law, stat), gaussian_varent(law, stat))


def ou_profile(model: OUModel, time_grid, workers: int | None = None) -> MixingProfile:
    """Closed-form mixing profile on ``time_grid`` (strictly increasing, positive)."""
    times = np.asarray(time_grid, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("time grid must be a non-empty 1-D sequence")
    if times[0] <= 0:
        _check_time(float(times[0]))
    if np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be strictly increasing")
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            triples = list(pool.map(lambda t: ou_triple(model, t), times))
    else:
        triples = [ou_triple(model, t) for t in times]
    dent = np.array([ou_dent_dt(model, t) for t in times])
    return MixingProfile(
        times=times, triples=tuple(triples), dent_dt=dent,
        lam=model.spectral_gap, kappa=model.curvature, source="analytic-ou",
        metadata={"theta": model.theta, "dimension": model.dimension,
                  "start_norm": float(np.linalg.norm(model.start)),
                  "start_variance": model.start_variance},
    )


MONOTONE_SAMPLES = 64


def ou_mixing_time(model: OUModel, epsilon: float, bracket_hint: float | None = None,
                   tv_tol: float = 1e-9) -> float:
    """inf{t > 0 : TV(X_t) <= epsilon}, by bracket expansion and bisection.

    The TV curve is sampled at 64 points across the final bracket and must be
    nonincreasing there; otherwise :class:`MonotonicityError` is raised.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    stat = model.stationary

    def tv(t):
        return gaussian_tv(ou_law_at(model, t), stat)

    hi = bracket_hint if bracket_hint and bracket_hint > 0 else 1.0 / model.theta
    for _ in range(200):
        if tv(hi) <= epsilon:
            break
        hi *= 2.0
    else:
        raise BracketError(f"TV stays above {epsilon} up to t={hi}")
    lo = hi
    while True:
        lo *= 0.5
        if tv(lo) > epsilon:
            break
        hi = lo
        if lo < 1e-14:
            raise BracketError(f"TV already below {epsilon} at t={lo}")

    samples = np.array([tv(t) for t in np.linspace(lo, hi, MONOTONE_SAMPLES)])
    if np.any(np.diff(samples) > 1e-12):
        i = int(np.argmax(np.diff(samples)))
        raise MonotonicityError(f"TV increases on [{lo}, {hi}] near sample {i}")

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        val = tv(mid)
        if val <= epsilon:
            hi = mid
            if epsilon - val <= tv_tol:
                break
        else:
            lo = mid
        if hi - lo <= 1e-13 * hi:
            break
    return hi
