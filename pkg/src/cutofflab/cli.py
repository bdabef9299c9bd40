"""Command line: ``cutofflab {run,sweep,validate,summarize}``.

Exit codes: 0 success, 1 a check failed or a stage errored, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .config import load_config
from .errors import ConfigError

log = logging.getLogger("cutofflab")


def _workers_default():
    env = os.environ.get("CUTOFFLAB_WORKERS")
    try:
        return int(env) if env else 1
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--quiet", action="store_true")
    verbosity.add_argument("--verbose", action="store_true")

    cfg = argparse.ArgumentParser(add_help=False)
    cfg.add_argument("--config", required=True, metavar="PATH")
    cfg.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     dest="overrides", help="dotted-path override, repeatable")

    execute = argparse.ArgumentParser(add_help=False)
    execute.add_argument("--out", metavar="DIR", help="output directory (overrides 'outputs')")
    execute.add_argument("--workers", type=int, default=_workers_default(), metavar="N")

    parser = argparse.ArgumentParser(prog="cutofflab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cutofflab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common, cfg, execute], help="run one experiment")
    sw = sub.add_parser("sweep", parents=[common, cfg, execute], help="sweep one parameter")
    sw.add_argument("--axis", required=True, choices=["dimension", "theta", "x0", "n", "delta"])
    sw.add_argument("--values", required=True, help="comma-separated values")
    sub.add_parser("validate", parents=[common, cfg], help="check a config without running it")
    sm = sub.add_parser("summarize", parents=[common], help="render a bounds.json as a table")
    sm.add_argument("bounds", metavar="BOUNDS_JSON")
    return parser


def _parse_values(text):
    out = []
    for item in text.split(","):
        item = item.strip()
        try:
            out.append(int(item))
        except ValueError:
            out.append(float(item))
    return out


def render_summary(reports) -> str:
    headers = ["label", "measured", "bound", "margin", "tol", "status"]
    rows = []
    for r in reports:
        eps = r.get("metadata", {}).get("epsilon")
        label = r["label"] + (f" [eps={eps:g}]" if eps is not None else "")
        rows.append([label, f"{r['measured']:.6g}", f"{r['bound']:.6g}", f"{r['margin']:.3e}",
                     f"{r['tolerance']:.0e}", "PASS" if r["passed"] else "FAIL"])
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        text = "  ".join(c.ljust(w) for c, w in zip(row, widths))
        lines.append(("!! " if row[-1] == "FAIL" else "   ") + text)
    lines[0], lines[1] = "   " + lines[0], "   " + lines[1]
    failed = sum(row[-1] == "FAIL" for row in rows)
    lines.append(f"{len(rows) - failed}/{len(rows)} checks passed")
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.quiet else logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, format="%(message)s", stream=sys.stderr)

    if args.command == "summarize":
        try:
            with open(args.bounds) as fh:
                reports = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"cutofflab: cannot read {args.bounds}: {exc}", file=sys.stderr)
            return 2
        print(render_summary(reports))
        return 0 if all(r["passed"] for r in reports) else 1

    try:
        config = load_config(args.config, args.overrides)
    except (ConfigError, OSError) as exc:
        print(f"cutofflab: {args.config}: {exc}", file=sys.stderr)
        return 2

    if args.command == "validate":
        log.info("config OK (hash %s)", config.hash()[:12])
        return 0

    from . import experiments

    if args.command == "run":
        manifest = experiments.run(config, args.out)
        for s in manifest.stages:
            log.debug("stage %-16s %-5s %.3fs", s["name"], s["status"], s["seconds"])
            if s["status"] != "ok":
                log.error("stage %s failed: %s", s["name"], s["error"])
        summ = manifest.summary
        log.info("%d/%d checks passed -> %s", summ["passed"], summ["checks"], manifest.out_dir)
        for label in summ["failed_labels"]:
            log.error("FAILED: %s", label)
        return manifest.exit_code

    try:
        values = _parse_values(args.values)
        manifests, verdict = experiments.sweep(config, args.axis, values, args.out, args.workers)
    except ValueError as exc:
        print(f"cutofflab: {exc}", file=sys.stderr)
        return 2
    for eps, item in verdict["epsilons"].items():
        log.info("eps=%s %s", eps, json.dumps(item, sort_keys=True))
    if verdict["gaps"]:
        log.error("entries with errors or failed checks: %s", verdict["gaps"])
    return 0 if all(m is not None and m.ok for m in manifests) else 1
