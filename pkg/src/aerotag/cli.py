"""Command-line interface.

Subcommands: run, validate-mission, replay, report. Exit codes: 0 success,
2 preflight/validation failure, 3 configuration or parse error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .engine import replay as replay_events
from .engine import run as run_sim
from .errors import AerotagError, ConfigError, CorruptLog, ParseError, PreflightFailed
from .geo import load_raster
from .mission import load_mission, preflight_check
from .report import render_figures, report_run, report_run_text
from .runlog import read_runlog, write_runlog
from .scenario import load_scenario

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONFIG = 3


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def _cmd_run(args) -> int:
    mission = load_mission(_read(args.mission))
    scenario = load_scenario(_read(args.scenario))
    raster = load_raster(_read(args.dem))

    publisher = None
    if args.wire:
        from .wire import MqttPublisher
        publisher = MqttPublisher(args.wire)

    result = run_sim(mission, scenario, raster, seed=args.seed,
                     pipeline_mode=args.pipeline, store_path=args.store,
                     publisher=publisher)
    if publisher is not None:
        publisher.close()

    write_runlog(result.events, args.out)
    rep = report_run(result.events, result.metrics)
    print(f"run complete: seed={result.seed} events={len(result.events)} "
          f"stored={result.metrics.stored}")
    print(report_run_text(rep))
    return EXIT_OK


def _cmd_validate_mission(args) -> int:
    mission = load_mission(_read(args.mission))
    raster = load_raster(_read(args.dem))
    violations = preflight_check(mission, raster)
    if violations:
        for v in violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_VALIDATION
    print("mission ok")
    return EXIT_OK


def _cmd_replay(args) -> int:
    events = read_runlog(args.infile)
    emit = (lambda ev: print(json.dumps(ev, separators=(",", ":")))) if args.speed > 0 else None
    summary = replay_events(events, speed=args.speed, emit=emit)
    print(f"replayed {sum(summary.event_counts.values())} events "
          f"over {summary.duration_s:.1f} simulated s")
    for kind, count in sorted(summary.event_counts.items()):
        print(f"  {kind}: {count}")
    if summary.divergences:
        for d in summary.divergences:
            print(f"divergence: {d}", file=sys.stderr)
        return EXIT_VALIDATION
    print("store verified against publish stream")
    return EXIT_OK


def _cmd_report(args) -> int:
    events = read_runlog(args.infile)
    rep = report_run(events)
    if args.format == "json":
        print(json.dumps(rep.as_dict(), indent=2))
    else:
        print(report_run_text(rep))
    if args.figures:
        paths = render_figures(events, rep, Path(args.figures))
        for p in paths:
            print(f"wrote {p}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aerotag",
        description="Simulate drone-energized RF tags and their telemetry pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a mission/scenario simulation")
    p.add_argument("--mission", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--dem", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out", required=True, help="run log output (JSON Lines)")
    p.add_argument("--store", default=None, help="telemetry record output (JSON Lines)")
    p.add_argument("--wire", default=None, metavar="mqtt://host:port",
                   help="also publish decrypted messages to an MQTT broker")
    p.add_argument("--pipeline", choices=("inline", "threaded"), default="inline")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("validate-mission", help="run preflight checks only")
    p.add_argument("--mission", required=True)
    p.add_argument("--dem", required=True)
    p.set_defaults(func=_cmd_validate_mission)

    p = sub.add_parser("replay", help="verify and re-emit a run log")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--speed", type=float, default=0.0,
                   help="wall-clock pacing factor; 0 replays instantly")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("report", help="summarize a run log")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--figures", default=None, metavar="DIR",
                   help="also render figures and summary.csv into DIR")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PreflightFailed as exc:
        for v in exc.violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ParseError, ConfigError, CorruptLog) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AerotagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
