import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cutofflab import mixing_bounds as mb
from cutofflab.errors import BracketError, MonotonicityError
from cutofflab.gaussian_ou import OUModel, ou_mixing_time, ou_profile
from cutofflab.profile import DistanceTriple, MixingProfile


def toy_profile(tv, ent=None, varent=None, dent=None, lam=1.0, kappa=1.0, source="analytic-ou"):
    tv = np.asarray(tv, float)
    n = len(tv)
    ent = np.zeros(n) if ent is None else ent
    varent = np.zeros(n) if varent is None else varent
    times = np.arange(1.0, n + 1.0)
    triples = [DistanceTriple(a, b, c) for a, b, c in zip(tv, ent, varent)]
    return MixingProfile(times, triples, None if dent is None else np.asarray(dent, float),
                         lam, kappa, source)


@pytest.fixture(scope="module")
def ou():
    model = OUModel(1.0, 4, 1.0)
    return model, ou_profile(model, np.geomspace(0.005, 20, 300))


# -- value types -------------------------------------------------------------------

def test_distance_triple_validation():
    with pytest.raises(ValueError):
        DistanceTriple(1.5, 0.0, 0.0)
    with pytest.raises(ValueError):
        DistanceTriple(0.5, -1.0, 0.0)
    with pytest.raises(ValueError):
        DistanceTriple(0.5, 0.0, math.nan)
    assert DistanceTriple(1.0, 1.0, 1.0).pinsker_bound == math.inf
    assert DistanceTriple(0.5, 0.1, 4.0).pinsker_bound == 6.0


def test_profile_validation():
    t = DistanceTriple(0.1, 0.1, 0.1)
    with pytest.raises(ValueError, match="increasing"):
        MixingProfile([2.0, 1.0], [t, t], None, 1.0, 1.0, "x")
    with pytest.raises(ValueError, match="curvature certificate"):
        MixingProfile([1.0], [t], None, 0.5, 1.0, "x")
    with pytest.raises(ValueError, match="dent_dt"):
        MixingProfile([1.0, 2.0], [t, t], [0.0], 1.0, 1.0, "x")


def test_report_margin_and_json():
    r = mb.BoundReport("x", measured=1.0, bound=0.9999995, tolerance=1e-6, metadata={"a": 1})
    assert r.margin == pytest.approx(-5e-7)
    assert r.passed
    assert not mb.BoundReport("x", 1.0, 0.99, 1e-6).passed
    d = r.to_json()
    assert set(d) == {"label", "measured", "bound", "margin", "tolerance", "passed", "metadata"}


def test_mixing_times_report_window():
    r = mb.MixingTimesReport(0.1, 1.0, 3.5, "m")
    assert r.window == 2.5
    with pytest.raises(ValueError):
        mb.MixingTimesReport(0.1, 4.0, 3.5, "m")


# -- scalar formulas -------------------------------------------------------------

def test_reverse_pinsker_value():
    assert mb.reverse_pinsker(0.25, 0.5) == 3.0
    with pytest.raises(ValueError):
        mb.reverse_pinsker(0.25, 1.0)


def test_gap_mixing_bound_value():
    assert mb.gap_mixing_bound(1.0, 2.0, 4.0, 0.25) == 4.0
    with pytest.raises(ValueError):
        mb.gap_mixing_bound(1.0, 2.0, 0.0, 0.25)


def test_integrated_entropy_bounds():
    assert mb.integrated_entropy_bound(0.25, 1.0, math.e) == pytest.approx(4 + 32)
    assert mb.integrated_entropy_bound(0.25, 1.0, 3.0, "positive", kappa=2.0) == pytest.approx(4 + 4)
    with pytest.raises(ValueError):
        mb.integrated_entropy_bound(0.5, 2.0, 1.0)
    with pytest.raises(ValueError):
        mb.integrated_entropy_bound(0.5, 1.0, 2.0, "positive")
    with pytest.raises(ValueError):
        mb.integrated_entropy_bound(0.5, 1.0, 2.0, "other")


def test_window_bounds():
    # lam eps^3 = 1/64: 3 * 64 + 3 sqrt(4 * 64)
    assert mb.theorem1_window_bound(1.0, 0.25, 4.0) == pytest.approx(192 + 48)
    assert mb.theorem2_window_bound(2.0, 0.25) == pytest.approx(24.0)
    for bad in (0.0, 0.5, 0.7):
        with pytest.raises(ValueError):
            mb.theorem2_window_bound(1.0, bad)


def test_product_and_ratio():
    reps = [mb.MixingTimesReport(0.1, 1.0, 2.0, "m"), mb.MixingTimesReport(0.2, 1.5, 2.0, "m")]
    assert mb.cutoff_ratio(reps) == [0.5, 0.75]
    assert mb.product_condition_stat(2.0, 3.0) == 6.0
    with pytest.raises(ValueError):
        mb.cutoff_ratio([])


def test_worst_case_over_starts():
    reps = [mb.MixingTimesReport(0.1, 1.0, 4.0, "m", start=1),
            mb.MixingTimesReport(0.1, 2.0, 3.0, "m", start=2)]
    w = mb.worst_case_over_starts(reps)
    assert (w.t_early, w.t_late, w.start) == (2.0, 4.0, [1, 2])
    with pytest.raises(ValueError, match="mix epsilon"):
        mb.worst_case_over_starts(reps + [mb.MixingTimesReport(0.2, 1.0, 2.0, "m")])


# -- profile-based mixing times ----------------------------------------------------

def test_first_crossing_interpolates():
    p = toy_profile([0.95, 0.85, 0.3, 0.05])
    r = mb.mixing_times_from_profile(p, 0.1)
    assert r.t_early == pytest.approx(1.5)
    assert r.t_late == pytest.approx(3.8)


def test_mixing_times_bracket_error():
    with pytest.raises(BracketError, match="widen"):
        mb.mixing_times_from_profile(toy_profile([0.8, 0.5, 0.2]), 0.1)
    with pytest.raises(BracketError):
        mb.mixing_times_from_profile(toy_profile([0.95, 0.5, 0.2]), 0.1)


def test_mixing_times_monotonicity_error():
    with pytest.raises(MonotonicityError):
        mb.mixing_times_from_profile(toy_profile([0.95, 0.5, 0.6, 0.01]), 0.1)


def test_profile_mixing_times_match_bisection(ou):
    model, prof = ou
    r = mb.mixing_times_from_profile(prof, 0.25)
    assert r.t_late == pytest.approx(ou_mixing_time(model, 0.25), rel=1e-3)
    assert r.t_early == pytest.approx(ou_mixing_time(model, 0.75), rel=1e-3)


# -- checks ----------------------------------------------------------------------------

def test_checks_pass_on_ou(ou):
    model, prof = ou
    eps = 0.1
    r = mb.MixingTimesReport(eps, ou_mixing_time(model, 1 - eps), ou_mixing_time(model, eps), "b")
    reports = [mb.check_reverse_pinsker(prof), mb.check_lemma3(prof, offsets=(0.0, 0.01)),
               mb.check_lemma3_positive(prof), mb.check_gap_mixing(prof, r),
               mb.check_integrated_entropy(prof, r), mb.check_integrated_entropy(prof, r, "positive"),
               mb.check_theorem1(prof.lam, r), mb.check_theorem2(prof.kappa, r)]
    assert all(x.passed for x in reports), [x.to_json() for x in reports if not x.passed]
    l3 = reports[1]
    assert l3.metadata["max_margin_offset_0"] <= 1e-10
    assert "max_margin_offset_0.01" in l3.metadata
    assert reports[6].metadata["slack_ratio"] > 1


def test_lemma3_reports_worst_point():
    p = toy_profile([0.9, 0.5, 0.1], varent=[1.0, 1.0, 1.0], dent=[-1.0, -0.1, -1.0])
    r = mb.check_lemma3(p)
    # margins: -1 + 1/2, -0.1 + 1/4, -1 + 1/6 -> worst at t = 2
    assert r.metadata["t"] == 2.0
    assert r.margin == pytest.approx(-0.15)
    assert not r.passed


def test_check_needs_derivative():
    with pytest.raises(ValueError, match="dEnt/dt"):
        mb.check_lemma3(toy_profile([0.9, 0.5]))


def test_default_tolerance():
    assert mb.default_tolerance(toy_profile([0.5])) == mb.ANALYTIC_TOL
    assert mb.default_tolerance(toy_profile([0.5], source="fokker-planck")) == mb.GRID_TOL


def test_write_read_reports(tmp_path):
    reps = [mb.BoundReport("a", 1.0, 2.0, 1e-6, {"x": np.float64(0.5), "arr": np.arange(2)}),
            mb.check_theorem1(1.0, mb.MixingTimesReport(0.1, 1.0, 1.0, "m"))]
    path = tmp_path / "bounds.json"
    mb.write_reports(reps, path)
    back = mb.read_reports(path)
    assert back[0]["metadata"] == {"x": 0.5, "arr": [0, 1]}
    assert back[1]["metadata"]["slack_ratio"] is None
    json.loads(path.read_text())  # strict JSON, no Infinity
    assert "Infinity" not in path.read_text()


# -- properties -----------------------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(0.2, 6.0), st.sampled_from([1, 4, 32]),
       st.sampled_from([0.05, 0.1, 0.25]))
def test_windows_dominated_property(theta, x0, d, eps):
    model = OUModel(theta, d, x0 / math.sqrt(d))
    early, late = ou_mixing_time(model, 1 - eps), ou_mixing_time(model, eps)
    r = mb.MixingTimesReport(eps, early, late, "b")
    assert mb.check_theorem1(theta, r).passed
    assert mb.check_theorem2(theta, r).passed
