"""Acceptance suite: twelve criteria, each run at its stated tolerance and runtime budget.

Every criterion prints one ``[PASS]``/``[FAIL]`` line (collected into the
pytest terminal summary, or printed directly when run as a script)::

    python3 tests/test_acceptance.py
"""

import csv
import filecmp
import math
import os
import sys
import tempfile
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import oracles  # noqa: E402
from cutofflab import experiments, fokker_planck as fp, mixing_bounds as mb  # noqa: E402
from cutofflab.config import load_config  # noqa: E402
from cutofflab.gaussian_ou import (  # noqa: E402
    GaussianLaw, OUModel, gaussian_ent, gaussian_tv, gaussian_varent, ou_mixing_time, ou_profile,
)
from cutofflab.mc_oracle import SdeConfig, euler_maruyama, histogram_tv, mc_entropy, mc_varentropy, ou_drift  # noqa: E402

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")

# t_mix(0.9) / t_mix(0.1) for d = 4096, theta = 1, all-ones start, from
# oracles.ou_mixing_time (offset-axis quadrature + brentq); frozen afterwards.
FINAL_RATIO_D4096 = 0.5360022082169443
FINAL_RATIO_TOL = 1e-8

RESULTS = {}

# -- shared batteries ---------------------------------------------------------------

OU_THETAS = (0.5, 1.0, 2.0)
OU_STARTS = (0.5, 1.0, 5.0)
OU_TIMES = np.geomspace(1e-3, 30.0, 300)
QUARTIC = dict(R=6.0, x0=2.0, delta=0.05, times=np.geomspace(0.005, 10.0, 300))
QUARTIC_NS = (512, 1024, 2048, 4096)
CACHE = {}


def ou_battery():
    if "ou" not in CACHE:
        CACHE["ou"] = {(th, x0): (OUModel(th, 1, x0), ou_profile(OUModel(th, 1, x0), OU_TIMES / th))
                       for th in OU_THETAS for x0 in OU_STARTS}
    return CACHE["ou"]


def refined(n, level):
    """Resolution ``level`` doubles n and halves dt_init, dt_max and growth - 1 once per level."""
    s = 2.0**-level
    return dict(n=n * 2**level, dt_init=1e-5 * s, dt_max=1e-2 * s, growth=1.0 + 0.05 * s)


def quartic_profiles():
    if "quartic" not in CACHE:
        out = {}
        for level, _ in enumerate(QUARTIC_NS):
            r = refined(QUARTIC_NS[0], level)
            grid = fp.build_grid(fp.named_potential("ou+quartic"), QUARTIC["R"], r["n"])
            f0 = fp.dirac_approx(grid, QUARTIC["x0"], QUARTIC["delta"])
            out[r["n"]], _ = fp.fp_profile(grid, f0, QUARTIC["times"], r["dt_init"], r["growth"],
                                           r["dt_max"])
        CACHE["quartic"] = out
    return CACHE["quartic"]


def record(num, title, passed, detail, seconds=None, budget=None):
    if budget is not None and seconds is not None and seconds >= budget:
        passed = False
        detail += f"; runtime {seconds:.1f}s exceeds {budget:g}s"
    elif seconds is not None:
        detail += f"; {seconds:.1f}s"
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {num:>2}: {title}: {detail}"
    RESULTS[num] = line
    print(line)
    return passed


# -- criteria -------------------------------------------------------------------------

def criterion_1():
    start = time.perf_counter()
    rng = np.random.default_rng(20240101)
    q = GaussianLaw([0.0], 1.0)
    worst_ent = worst_var = worst_tv = 0.0
    worst_z = 0.0
    for i in range(20):
        m, r = rng.uniform(-3, 3), rng.uniform(0.2, 5)
        p = GaussianLaw([m], r)
        ent, var, tv = gaussian_ent(p, q), gaussian_varent(p, q), gaussian_tv(p, q)
        worst_ent = max(worst_ent, abs(ent - oracles.quad_ent_1d(m, r, 0, 1)))
        worst_var = max(worst_var, abs(var - oracles.quad_varent_1d(m, r, 0, 1)))
        worst_tv = max(worst_tv, abs(tv - oracles.quad_tv_1d(m, r, 0, 1)))
        for est, exact in ((mc_entropy(p, q, 100_000, seed=i), ent),
                           (mc_varentropy(p, q, 100_000, seed=i), var)):
            worst_z = max(worst_z, abs(est.value - exact) / est.std_error)
    secs = time.perf_counter() - start
    ok = worst_ent <= 1e-6 and worst_var <= 1e-6 and worst_tv <= 1e-8 and worst_z <= 3
    return record(1, "Gaussian functional oracles (20 pairs)", ok,
                  f"|dEnt|={worst_ent:.1e} |dVarent|={worst_var:.1e} (<=1e-6), "
                  f"|dTV|={worst_tv:.1e} (<=1e-8), MC max |z|={worst_z:.2f} (<=3)", secs, 5)


def _solver_errors(level, times):
    r = refined(2048, level)
    grid = fp.build_grid(fp.named_potential("ou"), 8.0, r["n"])
    prof, _ = fp.fp_profile(grid, fp.dirac_approx(grid, 1.0, 0.05), times, r["dt_init"],
                            r["growth"], r["dt_max"])
    # the solver starts from N(1, 0.05^2), so compare with the OU law from that start
    ref = ou_profile(OUModel(1.0, 1, 1.0, start_variance=0.05**2), times)
    return np.array([np.abs(prof.tv - ref.tv).max(), np.abs(prof.ent - ref.ent).max(),
                     np.abs(prof.varent - ref.varent).max()])


def criterion_2():
    start = time.perf_counter()
    times = np.geomspace(0.05, 5.0, 60)
    base, fine = _solver_errors(0, times), _solver_errors(1, times)
    ratios = base / fine
    secs = time.perf_counter() - start
    ok = bool(np.all(base <= 5e-3) and np.all(ratios >= 1.7))
    return record(2, "solver vs closed form on U = x^2/2", ok,
                  "sup err TV/Ent/Varent = " + "/".join(f"{e:.1e}" for e in base)
                  + " (<=5e-3), refinement ratios " + "/".join(f"{x:.2f}" for x in ratios)
                  + " (>=1.7)", secs, 60)


def _quartic_refinement(margin_fn):
    profs = quartic_profiles()
    ns = sorted(profs)
    margins = [margin_fn(profs[n]) for n in ns]
    maxes = [float(m.max()) for m in margins]
    positive = [max(x, 0.0) for x in maxes]
    diffs = [float(np.abs(b - a).max()) for a, b in zip(margins, margins[1:])]
    ok = (max(maxes) <= 1e-3
          and all(b <= a for a, b in zip(positive, positive[1:]))
          and all(b < a for a, b in zip(diffs, diffs[1:])))
    return ok, maxes, diffs


def criterion_3():
    start = time.perf_counter()
    worst = max(float(mb.lemma3_margins(p).max()) for _, p in ou_battery().values())
    ok_grid, maxes, diffs = _quartic_refinement(mb.lemma3_margins)
    secs = time.perf_counter() - start
    ok = worst <= 1e-10 and ok_grid
    return record(3, "entropy-varentropy inequality margins", ok,
                  f"OU max margin {worst:.1e} (<=1e-10); quartic max margin by n="
                  f"{'/'.join(map(str, sorted(quartic_profiles())))}: "
                  + "/".join(f"{x:.1e}" for x in maxes)
                  + " (<=1e-3), successive sup changes " + "/".join(f"{x:.1e}" for x in diffs),
                  secs, 60)


def criterion_4():
    start = time.perf_counter()
    worst = max(float(mb.lemma3_positive_margins(p).max()) for _, p in ou_battery().values())
    ok_grid, maxes, diffs = _quartic_refinement(mb.lemma3_positive_margins)
    secs = time.perf_counter() - start
    ok = worst <= 1e-10 and ok_grid
    return record(4, "positive-curvature margins", ok,
                  f"OU max margin {worst:.1e} (<=1e-10); quartic max margin "
                  + "/".join(f"{x:.1e}" for x in maxes) + " (<=1e-3), successive sup changes "
                  + "/".join(f"{x:.1e}" for x in diffs), secs)


def criterion_5():
    profiles = [p for _, p in ou_battery().values()] + list(quartic_profiles().values())
    worst = min(mb.check_reverse_pinsker(p).margin for p in profiles)
    return record(5, "reverse Pinsker on every profile", worst >= -1e-10,
                  f"{len(profiles)} profiles, min margin {worst:.3e} (>=-1e-10)")


def criterion_6():
    worst = math.inf
    for model, prof in ou_battery().values():
        for eps in (0.05, 0.1, 0.25):
            t_mix = ou_mixing_time(model, eps)
            bound = np.array([mb.gap_mixing_bound(e, t, model.spectral_gap, eps)
                              for e, t in zip(prof.ent, prof.times)])
            worst = min(worst, float((bound - t_mix).min()))
    return record(6, "spectral-gap mixing bound propagated in time", worst >= -mb.ANALYTIC_TOL,
                  f"min margin {worst:.3e} over 9 models x 3 eps x {len(OU_TIMES)} times")


def criterion_7():
    worst = {"nonnegative": math.inf, "positive": math.inf}
    for model, prof in ou_battery().values():
        for eps in (0.05, 0.1, 0.25):
            r = mb.MixingTimesReport(eps, ou_mixing_time(model, 1 - eps), ou_mixing_time(model, eps),
                                     "bisection")
            for flavor in worst:
                rep = mb.check_integrated_entropy(prof, r, flavor, mb.ANALYTIC_TOL)
                worst[flavor] = min(worst[flavor], rep.margin)
    ok = min(worst.values()) >= -mb.ANALYTIC_TOL
    return record(7, "integrated entropy bounds after t_mix(1-eps)", ok,
                  f"min margin log-flavor {worst['nonnegative']:.3e}, "
                  f"kappa-flavor {worst['positive']:.3e}")


def criterion_8():
    start = time.perf_counter()
    worst1 = worst2 = math.inf
    for d in (1, 16, 256, 4096):
        model = OUModel(1.0, d, 1.0)
        for eps in (0.05, 0.1, 0.25):
            early = ou_mixing_time(model, 1 - eps)
            late = ou_mixing_time(model, eps, bracket_hint=early)
            r = mb.MixingTimesReport(eps, early, late, "bisection")
            worst1 = min(worst1, mb.check_theorem1(1.0, r).margin)
            worst2 = min(worst2, mb.check_theorem2(1.0, r).margin)
    secs = time.perf_counter() - start
    ok = worst1 >= -1e-6 and worst2 >= -1e-6
    return record(8, "mixing windows dominated by both window bounds", ok,
                  f"min margin gap-bound {worst1:.3e}, curvature-bound {worst2:.3e}", secs, 30)


def criterion_9():
    start = time.perf_counter()
    base = load_config(os.path.join(CONFIGS, "ou_dimension_sweep.yaml"))
    dims = [4**k for k in range(7)]
    with tempfile.TemporaryDirectory() as tmp:
        manifests, verdict = experiments.sweep(base, "dimension", dims, tmp)
        with open(os.path.join(tmp, "sweep_cutoff.csv")) as fh:
            rows = list(csv.DictReader(fh))
    ratios = [float(r["ratio"]) for r in rows]
    prods = [float(r["product_stat"]) for r in rows]
    slope = float(np.polyfit(np.log(dims), prods, 1)[0])
    secs = time.perf_counter() - start
    ok = (all(m is not None and m.ok for m in manifests)
          and all(b > a for a, b in zip(ratios, ratios[1:]))
          and all(b > a for a, b in zip(prods, prods[1:]))
          and abs(slope - 0.5) <= 0.1
          and abs(ratios[-1] - FINAL_RATIO_D4096) <= FINAL_RATIO_TOL)
    return record(9, "cutoff over d = 4^k, k = 0..6", ok,
                  "ratios " + " < ".join(f"{x:.4f}" for x in ratios)
                  + f"; lambda*t_mix log-d slope {slope:.4f} (0.4..0.6); final ratio "
                  f"{ratios[-1]:.10f} vs frozen {FINAL_RATIO_D4096:.10f}", secs, 60)


def criterion_10():
    ou = fp.spectral_gap_numeric(fp.build_grid(fp.named_potential("ou"), 8.0, 2048))
    lams = {}
    for name in ("ou+quartic", "quartic"):
        pot = fp.named_potential(name)
        grid = fp.build_grid(pot, fp.default_radius(pot), 2048)
        lams[name] = (fp.spectral_gap_numeric(grid).lam, grid.kappa)
    ok = abs(ou.lam - 1.0) <= 1e-3 and all(lam >= k - 1e-3 for lam, k in lams.values())
    return record(10, "numerical spectral gap", ok,
                  f"OU lambda={ou.lam:.8f} (1+-1e-3); "
                  + ", ".join(f"{n} lambda={lam:.4f} >= kappa={k:g}" for n, (lam, k) in lams.items()))


def criterion_11():
    names = ("ou_reference.yaml", "ou_grid_mc.yaml")
    mismatches, compared = [], 0
    with tempfile.TemporaryDirectory() as tmp:
        for name in names:
            cfg = load_config(os.path.join(CONFIGS, name))
            a, b = os.path.join(tmp, name, "a"), os.path.join(tmp, name, "b")
            experiments.run(cfg, a)
            experiments.run(cfg, b)
            for sub in ("curves", "reports"):
                for fname in sorted(os.listdir(os.path.join(a, sub))):
                    compared += 1
                    if not filecmp.cmp(os.path.join(a, sub, fname), os.path.join(b, sub, fname),
                                       shallow=False):
                        mismatches.append(f"{name}:{sub}/{fname}")
    return record(11, "byte-identical reruns", not mismatches and compared > 0,
                  f"{compared} files compared across {len(names)} configs, "
                  f"mismatches: {mismatches or 'none'}")


def criterion_12():
    start = time.perf_counter()
    dt, paths, seed = 1e-3, 200_000, 20240607
    steps = int(round(math.log(2) / dt))
    samples = euler_maruyama(SdeConfig(ou_drift(1.0), 1, [1.0], dt, steps, paths, seed))
    grid = fp.build_grid(fp.named_potential("ou"), 8.0, 2048)
    t = dt * steps
    curve = fp.evolve(grid, fp.dirac_approx(grid, 1.0, 0.05), t, times=[t])
    est = histogram_tv(samples, grid, curve.values[0], seed=seed)
    secs = time.perf_counter() - start
    return record(12, "Euler-Maruyama histogram vs grid density at t = ln 2", est.value <= 0.03,
                  f"TV={est.value:.4f} +- {est.std_error:.4f} (<=0.03), {paths} paths, dt={dt:g}",
                  secs, 120)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11, criterion_12]


@pytest.mark.parametrize("criterion", CRITERIA, ids=lambda f: f.__name__)
def test_criterion(criterion):
    assert criterion(), RESULTS.get(int(criterion.__name__.split("_")[1]))


if __name__ == "__main__":
    outcomes = [c() for c in CRITERIA]
    print(f"{sum(outcomes)}/{len(outcomes)} criteria passed")
    sys.exit(0 if all(outcomes) else 1)
