"""Experiment configuration: YAML in, validated :class:`ExperimentConfig` out.

Validation errors carry the 1-based line of the offending key in the source
file (or ``override`` for values injected with ``--set key=value``).
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass

import yaml

from .errors import ConfigError

SCHEMA = {
    "model": {
        "kind": None, "theta": None, "dimension": None, "start": None,
        "named": None, "coefficients": None, "R": None, "n": None, "delta": None,
        "x0": None, "dt_init": None, "growth": None, "dt_max": None, "richardson": None,
    },
    "time_grid": {"kind": None, "t_min": None, "t_max": None, "points": None},
    "epsilons": None,
    "seed": None,
    "outputs": None,
    "checks": None,
    "mc": {"paths": None, "dt": None, "time": None, "budget": None, "bin_width": None},
}

CHECKS = ("reverse_pinsker", "lemma2", "lemma3", "lemma3_positive", "integrated_entropy",
          "theorem1", "theorem2", "spectral_gap", "mc_histogram_tv")
DEFAULT_EPSILONS = [0.05, 0.1, 0.25, 0.4]

OU_KEYS = {"kind", "theta", "dimension", "start"}
POTENTIAL_KEYS = {"kind", "named", "coefficients", "R", "n", "delta", "x0",
                  "dt_init", "growth", "dt_max", "richardson"}


@dataclass(frozen=True)
class ExperimentConfig:
    model: dict
    time_grid: dict
    epsilons: tuple
    seed: int
    outputs: str
    checks: tuple
    mc: dict | None = None

    def to_dict(self) -> dict:
        return {"model": copy.deepcopy(self.model), "time_grid": dict(self.time_grid),
                "epsilons": list(self.epsilons), "seed": self.seed, "outputs": self.outputs,
                "checks": list(self.checks), "mc": copy.deepcopy(self.mc)}

    def payload_dict(self) -> dict:
        """Everything that determines the numbers (the output directory does not)."""
        d = self.to_dict()
        del d["outputs"]
        return d

    def hash(self) -> str:
        text = json.dumps(self.payload_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def with_value(self, dotted: str, value) -> "ExperimentConfig":
        raw = self.to_dict()
        _set_path(raw, dotted.split("."), value)
        return validate(raw, {})


def _line_map(node, path=(), out=None):
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            p = path + (key_node.value,)
            out[p] = key_node.start_mark.line + 1
            _line_map(value_node, p, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            out[path + (i,)] = item.start_mark.line + 1
            _line_map(item, path + (i,), out)
    return out


def _set_path(raw, parts, value):
    schema = SCHEMA
    target = raw
    for i, part in enumerate(parts):
        if not isinstance(schema, dict) or part not in schema:
            raise ConfigError(f"override names unknown key {'.'.join(parts)!r}", "override")
        schema = schema[part]
        if i == len(parts) - 1:
            target[part] = value
        else:
            if not isinstance(target.get(part), dict):
                target[part] = {}
            target = target[part]


def parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value", "override")
    key, value = text.split("=", 1)
    return key.strip(), yaml.safe_load(value)


def load_config(path, overrides=()) -> ExperimentConfig:
    with open(path) as fh:
        text = fh.read()
    return loads(text, overrides)


def loads(text: str, overrides=()) -> ExperimentConfig:
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {exc}", mark.line + 1 if mark else None) from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping", 1)
    lines = _line_map(node) if node is not None else {}
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        parts = key.split(".")
        _set_path(raw, parts, value)
        for p in list(lines):
            if p[: len(parts)] == tuple(parts):
                del lines[p]
        lines[tuple(parts)] = "override"
    return validate(raw, lines)


class _Validator:
    def __init__(self, lines):
        self.lines = lines

    def fail(self, path, message):
        line = None
        for k in range(len(path), 0, -1):
            if path[:k] in self.lines:
                line = self.lines[path[:k]]
                break
        raise ConfigError(f"{'.'.join(map(str, path))}: {message}", line)

    def number(self, path, value, lo=None, hi=None, lo_open=False, hi_open=False):
        if isinstance(value, bool):
            self.fail(path, "expected a number")
        if isinstance(value, str):
            try:
                value = float(value)
            except ValueError:
                self.fail(path, f"expected a number, got {value!r}")
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            self.fail(path, f"expected a finite number, got {value!r}")
        value = float(value)
        if lo is not None and (value < lo or (lo_open and value == lo)):
            self.fail(path, f"must be {'>' if lo_open else '>='} {lo}, got {value}")
        if hi is not None and (value > hi or (hi_open and value == hi)):
            self.fail(path, f"must be {'<' if hi_open else '<='} {hi}, got {value}")
        return value

    def integer(self, path, value, lo=None):
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(path, f"expected an integer, got {value!r}")
        if lo is not None and value < lo:
            self.fail(path, f"must be >= {lo}, got {value}")
        return int(value)

    def mapping(self, path, value, allowed):
        if not isinstance(value, dict):
            self.fail(path, "expected a mapping")
        for key in value:
            if key not in allowed:
                self.fail(path + (key,), "unknown key")
        return value


def validate(raw: dict, lines: dict) -> ExperimentConfig:
    v = _Validator(lines)
    v.mapping((), raw, SCHEMA)
    if "model" not in raw:
        v.fail(("model",), "missing required section")
    model = _validate_model(v, raw["model"])

    tg = v.mapping(("time_grid",), raw.get("time_grid", {}), SCHEMA["time_grid"])
    kind = tg.get("kind", "geometric")
    if kind != "geometric":
        v.fail(("time_grid", "kind"), f"only 'geometric' grids are supported, got {kind!r}")
    t_min = v.number(("time_grid", "t_min"), tg.get("t_min", 0.01), 0, lo_open=True)
    t_max = v.number(("time_grid", "t_max"), tg.get("t_max", 20.0), t_min, lo_open=True)
    points = v.integer(("time_grid", "points"), tg.get("points", 200), 2)
    time_grid = {"kind": "geometric", "t_min": t_min, "t_max": t_max, "points": points}

    eps_raw = raw.get("epsilons", DEFAULT_EPSILONS)
    if not isinstance(eps_raw, list) or not eps_raw:
        v.fail(("epsilons",), "expected a non-empty list")
    epsilons = tuple(v.number(("epsilons", i), e, 0, 0.5, lo_open=True, hi_open=True)
                     for i, e in enumerate(eps_raw))

    seed = v.integer(("seed",), raw.get("seed", 0), 0)
    if seed >= 1 << 64:
        v.fail(("seed",), "must fit in 64 bits")
    outputs = raw.get("outputs", "runs/default")
    if not isinstance(outputs, str) or not outputs:
        v.fail(("outputs",), "expected a directory path")

    checks_raw = raw.get("checks", "all")
    if checks_raw == "all" or checks_raw == ["all"]:
        checks = CHECKS
    else:
        if not isinstance(checks_raw, list):
            v.fail(("checks",), "expected 'all' or a list of check names")
        for i, c in enumerate(checks_raw):
            if c not in CHECKS:
                v.fail(("checks", i), f"unknown check {c!r}; known: {', '.join(CHECKS)}")
        checks = tuple(c for c in CHECKS if c in checks_raw)

    mc = None
    if raw.get("mc") is not None:
        if model["kind"] != "potential":
            v.fail(("mc",), "the Monte Carlo cross-check needs a grid (potential) model")
        m = v.mapping(("mc",), raw["mc"], SCHEMA["mc"])
        mc = {
            "paths": v.integer(("mc", "paths"), m.get("paths", 200000), 2),
            "dt": v.number(("mc", "dt"), m.get("dt", 1e-3), 0, lo_open=True),
            "time": v.number(("mc", "time"), m.get("time", math.log(2)), 0, lo_open=True),
            "budget": v.number(("mc", "budget"), m.get("budget", 0.03), 0, lo_open=True),
            "bin_width": None if m.get("bin_width") is None
            else v.number(("mc", "bin_width"), m["bin_width"], 0, lo_open=True),
        }
        if mc["time"] > t_max:
            v.fail(("mc", "time"), "must not exceed time_grid.t_max")
    return ExperimentConfig(model, time_grid, epsilons, seed, outputs, checks, mc)


def _validate_model(v, raw):
    m = v.mapping(("model",), raw, SCHEMA["model"])
    kind = m.get("kind")
    if kind == "ou":
        for key in m:
            if key not in OU_KEYS:
                v.fail(("model", key), "not valid for kind 'ou'")
        theta = v.number(("model", "theta"), m.get("theta", 1.0), 0, lo_open=True)
        d = v.integer(("model", "dimension"), m.get("dimension", 1), 1)
        start = m.get("start", 1.0)
        if isinstance(start, list):
            if len(start) != d:
                v.fail(("model", "start"), f"expected {d} coordinates, got {len(start)}")
            start = [v.number(("model", "start", i), s) for i, s in enumerate(start)]
        else:
            start = v.number(("model", "start"), start)
        return {"kind": "ou", "theta": theta, "dimension": d, "start": start}
    if kind == "potential":
        for key in m:
            if key not in POTENTIAL_KEYS:
                v.fail(("model", key), "not valid for kind 'potential'")
        named, coeffs = m.get("named"), m.get("coefficients")
        if (named is None) == (coeffs is None):
            v.fail(("model",), "give exactly one of 'named' or 'coefficients'")
        out = {"kind": "potential"}
        if named is not None:
            if named not in ("ou", "quartic", "ou+quartic"):
                v.fail(("model", "named"), f"unknown potential {named!r}")
            out["named"] = named
        else:
            if not isinstance(coeffs, list) or not coeffs:
                v.fail(("model", "coefficients"), "expected a non-empty list")
            out["coefficients"] = [v.number(("model", "coefficients", i), c)
                                   for i, c in enumerate(coeffs)]
        out["R"] = None if m.get("R") is None else v.number(("model", "R"), m["R"], 0, lo_open=True)
        out["n"] = v.integer(("model", "n"), m.get("n", 2048), 16)
        out["delta"] = v.number(("model", "delta"), m.get("delta", 0.05), 0, lo_open=True)
        out["x0"] = v.number(("model", "x0"), m.get("x0", 1.0))
        out["dt_init"] = v.number(("model", "dt_init"), m.get("dt_init", 1e-5), 0, lo_open=True)
        out["growth"] = v.number(("model", "growth"), m.get("growth", 1.05), 1)
        out["dt_max"] = v.number(("model", "dt_max"), m.get("dt_max", 1e-2), out["dt_init"])
        rich = m.get("richardson", True)
        if not isinstance(rich, bool):
            v.fail(("model", "richardson"), "expected true or false")
        out["richardson"] = rich
        return out
    v.fail(("model", "kind"), f"expected 'ou' or 'potential', got {kind!r}")
