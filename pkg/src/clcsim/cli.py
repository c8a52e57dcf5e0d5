"""Command line entry points.

Verbs:
  run              simulate one scenario seed and write the artifact set
  replay           re-check a written trace and verify byte-exact rerun
  battery          run a scenario across many seeds and pool statistics
  validate-config  parse, validate and echo a scenario file
  list-scenarios   show the bundled scenario library

Scenario arguments accept either a bundled scenario name or a path to a
YAML file.  ``--set a.b=value`` overrides individual config fields.  The
default output directory comes from the CLCSIM_OUT environment variable
when set, else ./clcsim-out.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from typing import List, Optional

from . import battery as battery_mod
from . import checkers, report
from .analytics import mining_stats_report
from .config import ConfigError, apply_override, dump_config, load_config
from .netsim import run_scenario
from .trace import Trace

OUT_ENV = "CLCSIM_OUT"


def scenario_names() -> List[str]:
    root = resources.files("clcsim") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_scenario(ref: str) -> str:
    """Map a bundled scenario name or a filesystem path to a YAML path."""
    if os.path.exists(ref):
        return ref
    root = resources.files("clcsim") / "scenarios"
    candidate = root / f"{ref}.yaml"
    if candidate.is_file():
        return str(candidate)
    raise ConfigError(
        f"unknown scenario {ref!r}; not a file and not one of: "
        + ", ".join(scenario_names()))


def load_with_overrides(ref: str, overrides: List[str]) -> dict:
    cfg = load_config(resolve_scenario(ref))
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        cfg = apply_override(cfg, key, value)
    return cfg


def _base_outdir(explicit: Optional[str]) -> str:
    if explicit:
        return explicit
    return os.environ.get(OUT_ENV, "clcsim-out")


def _check_names_known(cfg: dict) -> None:
    for group in ("must_pass", "expect_violations"):
        for name in cfg["checks"][group]:
            if name not in checkers.CHECKS:
                raise ConfigError(
                    f"unknown check {name!r} in checks.{group}; known: "
                    + ", ".join(sorted(checkers.CHECKS)))


def cmd_run(args) -> int:
    cfg = load_with_overrides(args.scenario, args.set or [])
    _check_names_known(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    outdir = os.path.join(_base_outdir(args.out),
                          f"run-{cfg['name']}-s{cfg['seed']}")
    if cfg["kind"] == "mining-stats":
        payload = mining_stats_report(cfg)
        report.write_mining_outputs(outdir, cfg, payload,
                                    figures=not args.no_figures)
        print(f"wrote {outdir}")
        print(json.dumps(payload["summary"], sort_keys=True, indent=1))
        return 0
    trace = run_scenario(cfg)
    rep = report.build_report(trace)
    report.write_outputs(outdir, trace, rep, figures=not args.no_figures)
    print(f"wrote {outdir}")
    print(report.render_text(rep), end="")
    return 0 if rep["verdict"]["ok"] else 1


def cmd_replay(args) -> int:
    trace = Trace.read(args.trace)
    rep = report.build_report(trace)
    print(report.render_text(rep), end="")
    rerun = run_scenario(trace.config())
    with open(args.trace, "rb") as f:
        original = f.read()
    identical = rerun.to_bytes() == original
    print(f"rerun: {'byte-identical' if identical else 'DIVERGED'}")
    if args.out:
        outdir = os.path.join(_base_outdir(args.out),
                              f"replay-{rep['scenario']}-s{rep['seed']}")
        report.write_outputs(outdir, trace, rep, with_trace=False)
        print(f"wrote {outdir}")
    return 0 if rep["verdict"]["ok"] and identical else 1


def cmd_battery(args) -> int:
    cfg = load_with_overrides(args.scenario, args.set or [])
    _check_names_known(cfg)
    if cfg["kind"] != "simulation":
        raise ConfigError("battery applies to simulation scenarios")
    result = battery_mod.run_battery(cfg, args.seeds, base_seed=args.base_seed)
    verdict = battery_mod.summarize(result, cfg)
    outdir = os.path.join(_base_outdir(args.out), f"battery-{cfg['name']}")
    os.makedirs(outdir, exist_ok=True)
    slim = dict(result)
    slim["pooled"] = {
        k: (v if not isinstance(v, list) else
            {"n": len(v), "min": min(v, default=None) if v else None,
             "max": max(v, default=None) if v else None})
        for k, v in result["pooled"].items()
    }
    with open(os.path.join(outdir, "battery.json"), "w") as f:
        json.dump({"verdict": verdict, "result": slim}, f,
                  sort_keys=True, indent=1, default=list)
        f.write("\n")
    print(f"wrote {outdir}")
    print(f"scenario {verdict['scenario']}: {result['seeds']} seeds")
    for name, rate in sorted(result["rates"].items()):
        if rate:
            print(f"  {name}: violated in {rate:.0%} of seeds")
    if verdict["must_pass_bad_rates"]:
        print("MUST-PASS FAILED: "
              + ", ".join(sorted(verdict["must_pass_bad_rates"])))
    if verdict["expected_rates"]:
        print("expected-violation rates: "
              + ", ".join(f"{k}={v:.0%}"
                          for k, v in sorted(verdict["expected_rates"].items())))
    if verdict["cadence"] is not None:
        print(f"cadence ok: {verdict['cadence']['ok']} "
              f"(bounds {verdict['cadence']['gap_bounds']}, "
              f"{verdict['cadence']['gaps']} gaps)")
    return 0 if verdict["must_pass_ok"] else 1


def cmd_validate(args) -> int:
    cfg = load_with_overrides(args.scenario, args.set or [])
    _check_names_known(cfg)
    print(dump_config(cfg), end="")
    return 0


def cmd_list(args) -> int:
    for name in scenario_names():
        path = resolve_scenario(name)
        first = ""
        with open(path) as f:
            line = f.readline().strip()
            if line.startswith("#"):
                first = line.lstrip("# ")
        print(f"{name:28s} {first}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clcsim",
        description="checkpointed longest-chain simulator")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="simulate one scenario seed")
    p.add_argument("scenario", help="bundled scenario name or YAML path")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field (dotted path)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory root")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="re-check a written trace")
    p.add_argument("trace", help="path to a trace.ndjson file")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("battery", help="run a scenario across many seeds")
    p.add_argument("scenario")
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--base-seed", type=int, default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_battery)

    p = sub.add_parser("validate-config", help="parse and echo a scenario")
    p.add_argument("scenario")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("list-scenarios", help="show the bundled library")
    p.set_defaults(func=cmd_list)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
