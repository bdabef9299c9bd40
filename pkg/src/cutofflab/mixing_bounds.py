"""Mixing-time bounds for non-negatively curved diffusions, and checks against profiles.

Scalar bound formulas live next to ``check_*`` helpers that evaluate them
along a :class:`~cutofflab.profile.MixingProfile` and return
:class:`BoundReport` objects (one per check, keeping the worst sampled point).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import BracketError, MonotonicityError
from .profile import MixingProfile

ANALYTIC_TOL = 1e-6
GRID_TOL = 1e-3
STANDARD_EPSILONS = (0.05, 0.1, 0.25, 0.4)


@dataclass(frozen=True)
class MixingTimesReport:
    epsilon: float
    t_early: float
    t_late: float
    method: str
    start: object = None

    def __post_init__(self):
        if self.t_early > self.t_late:
            raise ValueError(f"t_early={self.t_early} exceeds t_late={self.t_late}")

    @property
    def window(self) -> float:
        return self.t_late - self.t_early


@dataclass(frozen=True)
class BoundReport:
    label: str
    measured: float
    bound: float
    tolerance: float
    metadata: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.bound - self.measured

    @property
    def passed(self) -> bool:
        return bool(self.margin >= -self.tolerance)

    def to_json(self) -> dict:
        return {"label": self.label, "measured": self.measured, "bound": self.bound,
                "margin": self.margin, "tolerance": self.tolerance, "passed": self.passed,
                "metadata": self.metadata}


def _check_epsilon(epsilon, upper=0.5):
    if not 0.0 < epsilon < upper:
        raise ValueError(f"epsilon must lie in (0, {upper}), got {epsilon!r}")


def reverse_pinsker(varent: float, tv: float) -> float:
    """Entropy upper bound (1 + sqrt(varent)) / (1 - tv)."""
    if tv >= 1.0:
        raise ValueError("reverse Pinsker bound is vacuous at tv = 1")
    if varent < 0:
        raise ValueError("varentropy must be nonnegative")
    return (1.0 + math.sqrt(varent)) / (1.0 - tv)


def gap_mixing_bound(ent_at_t: float, t: float, lam: float, epsilon: float) -> float:
    """t_mix(epsilon) <= t + (1 + Ent(X_t)) / (lam * epsilon)."""
    if not lam > 0:
        raise ValueError("spectral gap must be positive")
    _check_epsilon(epsilon, 1.0)
    return t + (1.0 + ent_at_t) / (lam * epsilon)


def _require_derivative(profile):
    if profile.dent_dt is None:
        raise ValueError("profile has no dEnt/dt data")


def lemma3_margins(profile: MixingProfile, t_offset: float = 0.0) -> np.ndarray:
    """dEnt/dt + Varent / (2 (t + t_offset)); nonpositive for curved diffusions from a point."""
    _require_derivative(profile)
    return profile.dent_dt + profile.varent / (2.0 * (profile.times + t_offset))


def lemma3_positive_margins(profile: MixingProfile) -> np.ndarray:
    """dEnt/dt + kappa * Varent; nonpositive under CD(kappa, inf) with kappa > 0."""
    _require_derivative(profile)
    if not profile.kappa > 0:
        raise ValueError("positive-curvature margins need kappa > 0")
    return profile.dent_dt + profile.kappa * profile.varent


def integrated_entropy_bound(epsilon: float, t0: float, t: float, flavor: str = "nonnegative",
                             kappa: float | None = None) -> float:
    """Entropy bound after the mixing-window start t0 = t_mix(1 - epsilon).

    ``nonnegative``: 1/eps + 2 / (eps^2 log(t/t0)).
    ``positive``:    1/eps + 1 / (eps^2 kappa (t - t0)).
    """
    _check_epsilon(epsilon)
    if not t > t0 > 0:
        raise ValueError(f"need t > t0 > 0, got t={t}, t0={t0}")
    if flavor == "nonnegative":
        return 1.0 / epsilon + 2.0 / (epsilon**2 * math.log(t / t0))
    if flavor == "positive":
        if not kappa or kappa <= 0:
            raise ValueError("positive flavor needs kappa > 0")
        return 1.0 / epsilon + 1.0 / (epsilon**2 * kappa * (t - t0))
    raise ValueError(f"unknown flavor {flavor!r}")


def theorem1_window_bound(lam: float, epsilon: float, t_early: float) -> float:
    _check_epsilon(epsilon)
    if not lam > 0 or t_early < 0:
        raise ValueError("need lam > 0 and t_early >= 0")
    scale = lam * epsilon**3
    return 3.0 / scale + 3.0 * math.sqrt(t_early / scale)


def theorem2_window_bound(kappa: float, epsilon: float) -> float:
    _check_epsilon(epsilon)
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    return 3.0 / (kappa * epsilon**2)


def _first_crossing(times, tv, level):
    below = np.flatnonzero(tv <= level)
    if below.size == 0 or tv[0] <= level:
        raise BracketError(
            f"TV samples do not cross {level:g} inside [{times[0]:g}, {times[-1]:g}]; "
            "widen the time grid")
    j = int(below[0])
    t0, t1, v0, v1 = times[j - 1], times[j], tv[j - 1], tv[j]
    return float(t1 if v0 == v1 else t0 + (v0 - level) * (t1 - t0) / (v0 - v1))


def mixing_times_from_profile(profile: MixingProfile, epsilon: float,
                              monotone_tol: float = 1e-10) -> MixingTimesReport:
    """First crossings of 1 - epsilon and epsilon by linear interpolation of sampled TV."""
    _check_epsilon(epsilon)
    tv = profile.tv
    rise = np.diff(tv)
    if np.any(rise > monotone_tol):
        i = int(np.argmax(rise))
        raise MonotonicityError(f"TV increases by {rise[i]:.3e} after t={profile.times[i]:g}")
    early = _first_crossing(profile.times, tv, 1.0 - epsilon)
    late = _first_crossing(profile.times, tv, epsilon)
    return MixingTimesReport(epsilon, early, max(late, early), "profile interpolation")


def product_condition_stat(lam: float, t_mix_value: float) -> float:
    return lam * t_mix_value


def cutoff_ratio(reports) -> list[float]:
    """t_mix(1 - eps) / t_mix(eps) per report."""
    reports = list(reports)
    if not reports:
        raise ValueError("need at least one report")
    return [r.t_early / r.t_late for r in reports]


def worst_case_over_starts(reports) -> MixingTimesReport:
    """Entrywise maximum of t_early and t_late over a set of start points."""
    reports = list(reports)
    if not reports:
        raise ValueError("need at least one report")
    eps = {r.epsilon for r in reports}
    if len(eps) != 1:
        raise ValueError(f"reports mix epsilon values {sorted(eps)}")
    return MixingTimesReport(
        reports[0].epsilon,
        max(r.t_early for r in reports),
        max(r.t_late for r in reports),
        "worst-case over starts",
        start=[r.start for r in reports],
    )


# -- profile-level checks ----------------------------------------------------

def default_tolerance(profile: MixingProfile) -> float:
    return ANALYTIC_TOL if profile.source == "analytic-ou" else GRID_TOL


def _worst(label, measured, bound, times, tol, extra=None):
    measured, bound = np.asarray(measured, float), np.asarray(bound, float)
    i = int(np.argmin(bound - measured))
    meta = {"t": float(times[i]), "points": int(len(times))}
    meta.update(extra or {})
    return BoundReport(label, float(measured[i]), float(bound[i]), tol, meta)


def check_reverse_pinsker(profile, tol=1e-10):
    tv, ent, var = profile.tv, profile.ent, profile.varent
    keep = tv < 1.0
    bound = [reverse_pinsker(v, x) for v, x in zip(var[keep], tv[keep])]
    return _worst("lemma1_reverse_pinsker", ent[keep], bound, profile.times[keep], tol)


def check_lemma3(profile, tol=None, offsets=(0.0,)):
    """dEnt/dt <= -Varent / (2t); extra offsets are reported, not checked."""
    tol = default_tolerance(profile) if tol is None else tol
    sensitivity = {f"max_margin_offset_{o:g}": float(lemma3_margins(profile, o).max())
                   for o in offsets}
    bound = -profile.varent / (2.0 * profile.times)
    return _worst("lemma3_entropy_varentropy", profile.dent_dt, bound, profile.times, tol,
                  sensitivity)


def check_lemma3_positive(profile, tol=None):
    tol = default_tolerance(profile) if tol is None else tol
    bound = -profile.kappa * profile.varent
    return _worst("lemma3_positive_curvature", profile.dent_dt, bound, profile.times, tol,
                  {"kappa": profile.kappa})


def check_gap_mixing(profile, report: MixingTimesReport, tol=None):
    tol = default_tolerance(profile) if tol is None else tol
    bound = [gap_mixing_bound(e, t, profile.lam, report.epsilon)
             for e, t in zip(profile.ent, profile.times)]
    return _worst("lemma2_propagated", np.full(len(bound), report.t_late), bound,
                  profile.times, tol, {"epsilon": report.epsilon, "lambda": profile.lam})


def check_integrated_entropy(profile, report: MixingTimesReport, flavor="nonnegative", tol=None):
    tol = default_tolerance(profile) if tol is None else tol
    t0 = report.t_early
    keep = profile.times > t0
    if not keep.any():
        raise BracketError(f"no sampled time after t0={t0:g}")
    times = profile.times[keep]
    kappa = profile.kappa if flavor == "positive" else None
    bound = [integrated_entropy_bound(report.epsilon, t0, t, flavor, kappa) for t in times]
    return _worst(f"integrated_entropy_{flavor}", profile.ent[keep], bound, times, tol,
                  {"epsilon": report.epsilon, "t0": t0})


def check_theorem1(lam, report: MixingTimesReport, tol=ANALYTIC_TOL):
    bound = theorem1_window_bound(lam, report.epsilon, report.t_early)
    return BoundReport("theorem1_window", report.window, bound, tol,
                       {"epsilon": report.epsilon, "lambda": lam, "t_early": report.t_early,
                        "t_late": report.t_late, "slack_ratio": bound / report.window
                        if report.window > 0 else None})


def check_theorem2(kappa, report: MixingTimesReport, tol=ANALYTIC_TOL):
    bound = theorem2_window_bound(kappa, report.epsilon)
    return BoundReport("theorem2_window", report.window, bound, tol,
                       {"epsilon": report.epsilon, "kappa": kappa, "t_early": report.t_early,
                        "t_late": report.t_late})


def write_reports(reports, path):
    """JSON list, one object per check; written atomically."""
    payload = [r.to_json() for r in reports]
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    os.replace(tmp, path)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def read_reports(path) -> list[dict]:
    with open(path) as fh:
        return json.load(fh)
