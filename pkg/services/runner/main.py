from __future__ import annotations

import argparse
import json
import math
import sys
from typing import List, Optional, Sequence

from libs.magnon_transfer.config import load_config, load_preset_config, preset_names
from libs.magnon_transfer.errors import ConfigError, TransferError
from libs.magnon_transfer.models import ScenarioConfig
from libs.magnon_transfer.observability import configure_logging, get_logger, query_logs
from libs.magnon_transfer.protocols import BETA_SHAPES, THETA_SHAPES, ProtocolTag, make_schedule
from libs.magnon_transfer.scenarios import run_scenario, run_sensitivity

logger = get_logger("runner")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
SCHEDULE_PROTOCOLS = [tag.value for tag in ProtocolTag if tag != ProtocolTag.HOLD]


def _add_config_overrides(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", default=None, help="output directory (overrides output.directory)")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config value; the value is read as YAML",
    )
    parser.add_argument("--initial", default=None, help="initial state shorthand: fock:<k> or cat:<zeta>")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="magnon-transfer", description="Hybrid-mode to phonon state-transfer runner.")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run the scenario described by a YAML config")
    run.add_argument("config")
    _add_config_overrides(run)

    preset = commands.add_parser("preset", help="run a named preset")
    preset.add_argument("name")
    _add_config_overrides(preset)

    schedule = commands.add_parser("schedule", help="sample a protocol's control schedule")
    schedule.add_argument("protocol", choices=SCHEDULE_PROTOCOLS)
    schedule.add_argument("--dump", action="store_true", help="write the CSV to stdout")
    schedule.add_argument("--duration", type=float, default=math.pi)
    schedule.add_argument("--samples", type=int, default=201)
    schedule.add_argument("--theta-shape", choices=THETA_SHAPES, default="linear")
    schedule.add_argument("--no-cd", action="store_true", help="TQD without the counterdiabatic term")
    schedule.add_argument("--j", type=int, default=1)
    schedule.add_argument("--beta-shape", choices=BETA_SHAPES, default="linear")

    sensitivity = commands.add_parser("sensitivity", help="numeric and analytic error sensitivities")
    sensitivity.add_argument("config")
    _add_config_overrides(sensitivity)

    logs = commands.add_parser("logs", help="print stored log records (needs LOG_DB_PATH)")
    logs.add_argument("--run-id", default="")
    logs.add_argument("--level", default="")
    logs.add_argument("--keyword", default="")
    logs.add_argument("--limit", type=int, default=200)
    return parser


def _load(args: argparse.Namespace) -> ScenarioConfig:
    if args.command == "preset":
        if args.name not in preset_names():
            raise ConfigError(f"Unsupported preset: {args.name} (available: {', '.join(preset_names())})")
        return load_preset_config(args.name, overrides=args.overrides, initial=args.initial)
    return load_config(args.config, overrides=args.overrides, initial=args.initial)


def _dump_schedule(args: argparse.Namespace) -> int:
    if not args.dump:
        raise ConfigError("schedule needs --dump")
    schedule = make_schedule(
        args.protocol,
        args.duration,
        theta_shape=args.theta_shape,
        include_cd=not args.no_cd,
        j=args.j,
        beta_shape=args.beta_shape,
    )
    text = schedule.to_frame(args.samples).to_csv(index=False, float_format="%.12g", lineterminator="\n")
    sys.stdout.write(text)
    return EXIT_OK


def _print_logs(args: argparse.Namespace) -> int:
    items = query_logs(limit=args.limit, run_id=args.run_id, level=args.level, keyword=args.keyword)
    sys.stdout.write(json.dumps({"count": len(items), "items": items}, indent=2, ensure_ascii=False) + "\n")
    return EXIT_OK


def dispatch(args: argparse.Namespace) -> int:
    if args.command == "schedule":
        return _dump_schedule(args)
    if args.command == "logs":
        return _print_logs(args)
    config = _load(args)
    if args.command == "sensitivity":
        reports = run_sensitivity(config, args.out)
        for report in reports:
            sys.stdout.write(report.model_dump_json() + "\n")
        return EXIT_OK
    summary = run_scenario(config, args.out)
    sys.stdout.write(json.dumps({"run_id": summary.run_id, "headline": summary.headline}, sort_keys=True) + "\n")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    configure_logging("runner")
    args = build_parser().parse_args(argv)
    try:
        return dispatch(args)
    except ConfigError as exc:
        logger.error("config_error", extra={"command": args.command, "error": str(exc)})
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except TransferError as exc:
        logger.error("numerical_error", extra={"command": args.command, "error": str(exc)})
        sys.stderr.write(f"numerical error: {exc}\n")
        return EXIT_NUMERIC


def run_cli(argv: Optional[List[str]] = None) -> None:
    sys.exit(main(argv))


if __name__ == "__main__":
    run_cli()
