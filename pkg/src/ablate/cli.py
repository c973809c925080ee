"""``ablate`` command line.

Exit codes: 0 ok, 1 engine error (or validation violations), 2 usage or
config error. Human-readable text goes to stdout; machine artifacts are
written only under the output directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from ablate import analysis
from ablate.config import POLICIES, ConfigError, load_config, parse_config
from ablate.executor import ExecutorUnavailableError
from ablate.orchestrator import ReplayError, StudyError, replay, run_study
from ablate.simulate import SweepError, sweep, to_csv, to_text
from ablate.workspace import WorkspaceError

EXIT_OK, EXIT_ENGINE, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_out() -> Path:
    return Path(os.environ.get("ABLATE_OUT_DIR", "ablate-out"))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ablate", description="Budgeted, bandit-driven ablation studies.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, overrides=True):
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=None, help="output directory (default $ABLATE_OUT_DIR or ./ablate-out)")
        if overrides:
            sp.add_argument("--seed", type=int)
            sp.add_argument("--budget", type=int)
            sp.add_argument("--max-parallel", type=int)

    run = sub.add_parser("run", help="run one study")
    common(run)
    run.add_argument("--format", choices=("json", "text"), default="text")

    sim = sub.add_parser("simulate", help="compare policies over seeded simulated studies")
    common(sim)
    sim.add_argument("--policies", default=",".join(POLICIES))
    sim.add_argument("--trials", type=int, default=100)
    sim.add_argument("--format", choices=("text", "csv"), default="text")

    rep = sub.add_parser("report", help="render a finished run's report")
    rep.add_argument("run", type=Path, help="run directory or report.json")
    rep.add_argument("--format", choices=("json", "text"), default="text")

    rp = sub.add_parser("replay", help="rebuild a report from a run's events.log")
    rp.add_argument("run", type=Path, help="run directory or events.log")
    rp.add_argument("--lambda", dest="lam", type=float, default=None, help="recompute rewards with this lambda")
    rp.add_argument("--out", type=Path, default=None, help="write the replayed report.json here")
    rp.add_argument("--format", choices=("json", "text"), default="text")

    val = sub.add_parser("validate", help="check a config and its component space")
    val.add_argument("--config", required=True, type=Path)
    return p


def _load(path: Path):
    if not path.is_file():
        raise ConfigError([f"config file {path} not found"])
    return load_config(path)


def _overrides(args, config):
    for name in ("budget", "max_parallel"):
        value = getattr(args, name)
        if value is not None and value < 1:
            raise ConfigError([f"--{name.replace('_', '-')} must be >= 1"])
    return config.with_overrides(seed=args.seed, budget=args.budget, max_parallel=args.max_parallel)


def cmd_run(args) -> int:
    config = _overrides(args, _load(args.config))
    result = run_study(config, args.out or _default_out())
    sys.stdout.write(analysis.emit_report(result.report, args.format))
    print(f"run archive: {result.run_dir}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.trials < 1:
        raise ConfigError(["--trials must be >= 1"])
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    config = _overrides(args, _load(args.config))
    rows = sweep(config, policies, args.trials)
    out = args.out or _default_out()
    out.mkdir(parents=True, exist_ok=True)
    csv_text = to_csv(rows)
    (out / "simulate.csv").write_text(csv_text)
    (out / "simulate.txt").write_text(to_text(rows, config.k))
    sys.stdout.write(csv_text if args.format == "csv" else to_text(rows, config.k))
    return EXIT_OK


def cmd_report(args) -> int:
    path = args.run / "report.json" if args.run.is_dir() else args.run
    if not path.is_file():
        raise ConfigError([f"no report at {path}"])
    if args.format == "json":
        sys.stdout.write(path.read_text())
        return EXIT_OK
    text = path.with_name("report.txt")
    if not text.is_file():
        raise ConfigError([f"no text report at {text}"])
    sys.stdout.write(text.read_text())
    return EXIT_OK


def cmd_replay(args) -> int:
    if not args.run.exists():
        raise ConfigError([f"{args.run} does not exist"])
    result = replay(args.run, lam=args.lam)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "report.json").write_text(analysis.emit_report(result.report, "json"))
    sys.stdout.write(analysis.emit_report(result.report, args.format))
    return EXIT_OK


def cmd_validate(args) -> int:
    if not args.config.is_file():
        raise ConfigError([f"config file {args.config} not found"])
    try:
        data = json.loads(args.config.read_text())
    except ValueError as exc:
        print(f"invalid JSON: {exc}")
        return EXIT_ENGINE
    _, problems = parse_config(data, args.config.parent)
    for problem in problems:
        print(f"violation: {problem}")
    if problems:
        return EXIT_ENGINE
    print("ok")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "simulate": cmd_simulate,
    "report": cmd_report,
    "replay": cmd_replay,
    "validate": cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, SweepError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StudyError, ReplayError, ExecutorUnavailableError, WorkspaceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENGINE


if __name__ == "__main__":
    sys.exit(main())
