"""Experiment runner: config -> profiles -> bound checks -> files on disk.

Layout of one run directory::

    curves/profile.csv        t,tv,ent,varent,dent_dt
    curves/density.bin/.json  grid densities (potential models only)
    reports/bounds.json       one object per check
    reports/mixing_times.json
    reports/cutoff.csv        epsilon,t_early,t_late,window,ratio,product_stat
    manifest.json             hashes, artifact paths, timings, summary

Everything except ``manifest.json`` is a pure function of the config.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__
from . import fokker_planck as fp
from . import mixing_bounds as mb
from .config import ExperimentConfig
from .gaussian_ou import OUModel, ou_mixing_time, ou_profile
from .mc_oracle import SdeConfig, euler_maruyama, histogram_tv

SWEEP_AXES = {
    "dimension": "model.dimension",
    "theta": "model.theta",
    "x0": None,  # model.start for OU, model.x0 for potentials
    "n": "model.n",
    "delta": "model.delta",
}


@dataclass
class RunManifest:
    config_hash: str
    out_dir: str
    artifacts: dict = field(default_factory=dict)
    stages: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    tool_version: str = __version__
    started_at: str = ""

    @property
    def ok(self) -> bool:
        return (all(s["status"] == "ok" for s in self.stages)
                and self.summary.get("failed", 0) == 0)

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 1

    def to_json(self) -> dict:
        return {"config_hash": self.config_hash, "tool_version": self.tool_version,
                "started_at": self.started_at, "artifacts": self.artifacts,
                "stages": self.stages, "summary": self.summary, "ok": self.ok}


def _atomic_write(path, text):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv_text(header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(x)) if isinstance(x, (float, np.floating))
                              else str(x) for x in row))
    return "\n".join(lines) + "\n"


def _json_text(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=mb._json_default) + "\n"


def time_grid(config: ExperimentConfig) -> np.ndarray:
    g = config.time_grid
    return np.geomspace(g["t_min"], g["t_max"], g["points"])


class _Stages:
    def __init__(self, manifest):
        self.manifest = manifest

    def __call__(self, name, fn, *args, **kwargs):
        start = time.perf_counter()
        entry = {"name": name, "status": "ok"}
        try:
            return fn(*args, **kwargs)
        except Exception as exc:  # recorded in the manifest, run continues to the write stage
            entry["status"] = "error"
            entry["error"] = f"{type(exc).__name__}: {exc}"
            entry["traceback"] = traceback.format_exc(limit=4)
            return None
        finally:
            entry["seconds"] = round(time.perf_counter() - start, 6)
            self.manifest.stages.append(entry)


def _ou_route(config, stage):
    m = config.model
    model = OUModel(m["theta"], m["dimension"], np.asarray(m["start"], dtype=float))
    times = time_grid(config)
    profile = stage("profile", ou_profile, model, times)

    def mixing():
        reports = []
        for eps in config.epsilons:
            early = ou_mixing_time(model, 1.0 - eps)
            late = ou_mixing_time(model, eps, bracket_hint=early)
            reports.append(mb.MixingTimesReport(eps, early, late, "closed-form bisection"))
        return reports

    mixing_reports = stage("mixing_times", mixing)
    extras = {"mixing_times": [_mt_json(r) for r in mixing_reports or []]}
    return profile, mixing_reports, extras, None, {}


def _build_potential(m):
    if "named" in m:
        return fp.named_potential(m["named"])
    return fp.polynomial_potential(m["coefficients"])


def _grid_profile(m, times, delta):
    potential = _build_potential(m)
    R = m["R"] if m["R"] is not None else fp.default_radius(potential)
    grid = fp.build_grid(potential, R, m["n"])
    spectral = fp.spectral_gap_numeric(grid)
    f0 = fp.dirac_approx(grid, m["x0"], delta)
    profile, curve = fp.fp_profile(grid, f0, times, m["dt_init"], m["growth"], m["dt_max"],
                                   spectral)
    return grid, spectral, profile, curve


def _grid_route(config, stage):
    m = config.model
    times = time_grid(config)
    built = stage("profile", _grid_profile, m, times, m["delta"])
    if built is None:
        return None, None, {}, None, {}
    grid, spectral, profile, curve = built

    def mixing():
        return [mb.mixing_times_from_profile(profile, eps) for eps in config.epsilons]

    mixing_reports = stage("mixing_times", mixing)
    extras = {"mixing_times": [_mt_json(r) for r in mixing_reports or []],
              "grid": grid.describe(),
              "spectral": {"lambda": spectral.lam, "eigen_residual": spectral.eigen_residual}}

    if m["richardson"] and mixing_reports:
        def richardson():
            _, _, half, _ = _grid_profile(m, times, 0.5 * m["delta"])
            rows = []
            for r in mixing_reports:
                h = mb.mixing_times_from_profile(half, r.epsilon)
                rows.append({
                    "epsilon": r.epsilon,
                    "t_early": {"delta": r.t_early, "delta_half": h.t_early,
                                "extrapolated": (4 * h.t_early - r.t_early) / 3},
                    "t_late": {"delta": r.t_late, "delta_half": h.t_late,
                               "extrapolated": (4 * h.t_late - r.t_late) / 3},
                })
            return rows

        extras["richardson"] = stage("richardson", richardson)

    mc_reports = []
    if config.mc and "mc_histogram_tv" in config.checks:
        def mc_check():
            mc = config.mc
            steps = int(round(mc["time"] / mc["dt"]))
            sde = SdeConfig(lambda x: -grid.potential.derivative(x), 1, [m["x0"]],
                            mc["dt"], steps, mc["paths"], config.seed)
            samples = euler_maruyama(sde)
            t_mc = sde.horizon
            slice_ = fp.evolve(grid, fp.dirac_approx(grid, m["x0"], m["delta"]), t_mc,
                               m["dt_init"], [t_mc], m["growth"], m["dt_max"])
            est = histogram_tv(samples, grid, slice_.values[0], mc["bin_width"], seed=config.seed)
            return [mb.BoundReport("mc_histogram_tv", est.value, mc["budget"], 0.0,
                                   {"t": t_mc, "paths": mc["paths"], "dt": mc["dt"],
                                    "std_error": est.std_error})]

        mc_reports = stage("mc_cross_check", mc_check) or []
    return profile, mixing_reports, extras, spectral, {"mc": mc_reports, "curve": curve}


def _mt_json(r):
    return {"epsilon": r.epsilon, "t_early": r.t_early, "t_late": r.t_late,
            "window": r.window, "method": r.method}


def _checks(config, profile, mixing_reports, spectral, delta):
    grid_route = profile.source == "fokker-planck"
    tol = mb.GRID_TOL if grid_route else mb.ANALYTIC_TOL
    want = set(config.checks)
    out = []
    if "spectral_gap" in want and spectral is not None:
        out.append(mb.BoundReport("spectral_gap_vs_curvature", profile.kappa, spectral.lam,
                                  mb.GRID_TOL, {"eigen_residual": spectral.eigen_residual}))
    if "reverse_pinsker" in want:
        out.append(mb.check_reverse_pinsker(profile))
    if "lemma3" in want:
        offsets = (0.0, delta**2) if grid_route else (0.0,)
        out.append(mb.check_lemma3(profile, tol, offsets))
    if "lemma3_positive" in want and profile.kappa > 0:
        out.append(mb.check_lemma3_positive(profile, tol))
    for r in mixing_reports or []:
        if "lemma2" in want:
            out.append(mb.check_gap_mixing(profile, r, tol))
        if "integrated_entropy" in want:
            out.append(mb.check_integrated_entropy(profile, r, "nonnegative", tol))
            if profile.kappa > 0:
                out.append(mb.check_integrated_entropy(profile, r, "positive", tol))
        if "theorem1" in want:
            out.append(mb.check_theorem1(profile.lam, r, tol))
        if "theorem2" in want and profile.kappa > 0:
            out.append(mb.check_theorem2(profile.kappa, r, tol))
    return out


def run(config: ExperimentConfig, out_dir: str | None = None) -> RunManifest:
    """Execute one experiment and write its artifacts under ``out_dir`` (default ``config.outputs``)."""
    out_dir = out_dir or config.outputs
    manifest = RunManifest(config.hash(), out_dir,
                           started_at=datetime.now(timezone.utc).isoformat(timespec="seconds"))
    stage = _Stages(manifest)
    route = _ou_route if config.model["kind"] == "ou" else _grid_route
    profile, mixing_reports, extras, spectral, more = route(config, stage)

    reports = []
    if profile is not None:
        delta = config.model.get("delta", 0.0)
        reports = stage("checks", _checks, config, profile, mixing_reports, spectral, delta) or []
    reports += more.get("mc", [])

    def write():
        arts = {}
        if profile is not None:
            rows = zip(profile.times, profile.tv, profile.ent, profile.varent, profile.dent_dt)
            path = os.path.join(out_dir, "curves", "profile.csv")
            _atomic_write(path, _csv_text(["t", "tv", "ent", "varent", "dent_dt"], rows))
            arts["profile_csv"] = "curves/profile.csv"
        path = os.path.join(out_dir, "reports", "bounds.json")
        os.makedirs(os.path.dirname(path), exist_ok=True)
        mb.write_reports(reports, path)
        arts["bounds_json"] = "reports/bounds.json"
        _atomic_write(os.path.join(out_dir, "reports", "mixing_times.json"), _json_text(extras))
        arts["mixing_times_json"] = "reports/mixing_times.json"
        if mixing_reports and profile is not None:
            rows = [(r.epsilon, r.t_early, r.t_late, r.window, r.t_early / r.t_late,
                     mb.product_condition_stat(profile.lam, r.t_late)) for r in mixing_reports]
            _atomic_write(os.path.join(out_dir, "reports", "cutoff.csv"),
                          _csv_text(["epsilon", "t_early", "t_late", "window", "ratio",
                                     "product_stat"], rows))
            arts["cutoff_csv"] = "reports/cutoff.csv"
        return arts

    manifest.artifacts = stage("write", write) or {}
    if more.get("curve") is not None:
        def write_density():
            os.makedirs(os.path.join(out_dir, "curves"), exist_ok=True)
            more["curve"].to_binary(os.path.join(out_dir, "curves", "density"))
            return {"density_bin": "curves/density.bin", "density_json": "curves/density.json"}

        manifest.artifacts.update(stage("write_density", write_density) or {})

    failed = [r.label for r in reports if not r.passed]
    manifest.summary = {"checks": len(reports), "passed": len(reports) - len(failed),
                        "failed": len(failed), "failed_labels": failed,
                        "errored_stages": [s["name"] for s in manifest.stages
                                           if s["status"] != "ok"]}
    _atomic_write(os.path.join(out_dir, "manifest.json"), _json_text(manifest.to_json()))
    return manifest


def _sweep_config(base: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis not in SWEEP_AXES:
        raise ValueError(f"cannot sweep {axis!r}; choose from {sorted(SWEEP_AXES)}")
    key = SWEEP_AXES[axis]
    if axis == "x0":
        key = "model.start" if base.model["kind"] == "ou" else "model.x0"
    if base.model["kind"] == "ou" and axis in ("n", "delta"):
        raise ValueError(f"axis {axis!r} only applies to potential models")
    if base.model["kind"] == "potential" and axis in ("dimension", "theta"):
        raise ValueError(f"axis {axis!r} only applies to OU models")
    cfg = base
    if axis == "dimension" and isinstance(base.model["start"], list):
        cfg = cfg.with_value("model.start", base.model["start"][0])
    return cfg.with_value(key, value)


def _sweep_entry(args):
    base, axis, value, out_dir = args
    try:
        cfg = _sweep_config(base, axis, value)
        manifest = run(cfg, out_dir)
        return value, manifest, None
    except Exception as exc:
        return value, None, f"{type(exc).__name__}: {exc}"


def _strictly_increasing(xs):
    return bool(len(xs) >= 2 and all(b > a for a, b in zip(xs, xs[1:])))


def sweep(base: ExperimentConfig, axis: str, values, out_dir: str | None = None,
          workers: int = 1):
    """One independent run per value, plus ``sweep_cutoff.csv`` and ``sweep_verdict.json``."""
    out_dir = out_dir or base.outputs
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    _sweep_config(base, axis, values[0])  # axis/model mismatch is a usage error, not a gap
    jobs = [(base, axis, v, os.path.join(out_dir, f"{axis}-{v}")) for v in values]
    if workers and workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_sweep_entry, jobs))
    else:
        results = [_sweep_entry(j) for j in jobs]

    rows, manifests, per_eps = [], [], {}
    for (value, manifest, error), job in zip(results, jobs):
        manifests.append(manifest)
        entry_dir = job[3]
        if manifest is None or not os.path.exists(os.path.join(entry_dir, "reports", "cutoff.csv")):
            rows.append([value, "", "", "", "", "", "", error or "no mixing times"])
            continue
        with open(os.path.join(entry_dir, "reports", "cutoff.csv")) as fh:
            cut = list(csv.DictReader(fh))
        bounds = mb.read_reports(os.path.join(entry_dir, "reports", "bounds.json"))
        lemma3 = [b for b in bounds if b["label"] == "lemma3_entropy_varentropy"]
        l3 = -lemma3[0]["margin"] if lemma3 else float("nan")
        status = "ok" if manifest.ok else "failed"
        for c in cut:
            eps = float(c["epsilon"])
            rec = (float(value), float(c["t_early"]), float(c["t_late"]), float(c["ratio"]),
                   float(c["product_stat"]), l3)
            per_eps.setdefault(eps, []).append(rec)
            rows.append([value, eps, *rec[1:], status])

    header = ["axis_value", "epsilon", "t_early", "t_late", "ratio", "product_stat",
              "lemma3_max_margin", "status"]
    os.makedirs(out_dir, exist_ok=True)
    _atomic_write(os.path.join(out_dir, "sweep_cutoff.csv"), _csv_text(header, rows))

    verdict = {"axis": axis, "values": list(values), "epsilons": {},
               "gaps": [v for v, m, e in results if m is None or not m.ok]}
    for eps, recs in sorted(per_eps.items()):
        ratios = [r[3] for r in recs]
        prods = [r[4] for r in recs]
        l3 = [r[5] for r in recs]
        item = {"ratio_strictly_increasing": _strictly_increasing(ratios),
                "product_stat_strictly_increasing": _strictly_increasing(prods),
                "lemma3_max_margin_nonincreasing": bool(all(b <= a for a, b in zip(l3, l3[1:])))}
        if axis == "dimension" and len(recs) >= 2:
            slope = float(np.polyfit(np.log([r[0] for r in recs]), prods, 1)[0])
            item["product_stat_log_slope"] = slope
        verdict["epsilons"][repr(eps)] = item
    _atomic_write(os.path.join(out_dir, "sweep_verdict.json"), _json_text(verdict))
    return manifests, verdict
