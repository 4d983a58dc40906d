"""Command line: ``o2o gen-demos | train | report | sweep``.

Run flags mirror ExperimentConfig fields (``--n-off 5000``, ``--gsi true``);
``--config FILE`` supplies flat ``key = value`` defaults that flags override.
Exit status is 0 on success, 1 on a configuration or input error, and 2 when
a run aborts.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from ..demogen import DemoGenerationError, ScriptedPolicy, calibrate_corruption, generate_demos
from ..replay import DemoFormatError, save_demos
from .config import ConfigError, ExperimentConfig, config_from_mapping, read_config_file
from .report import load_logs, report
from .runner import RunAborted, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2


def _add_config_flags(p: argparse.ArgumentParser, skip: tuple[str, ...] = ()) -> None:
    p.add_argument("--config", help="flat key=value file; flags override it")
    for f in fields(ExperimentConfig):
        if f.name in skip:
            continue
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None,
                       metavar=f.type.upper() if f.type in ("int", "float", "bool") else "VALUE")


def _config_values(args: argparse.Namespace, skip: tuple[str, ...] = ()) -> dict[str, str]:
    values = read_config_file(args.config) if args.config else {}
    for f in fields(ExperimentConfig):
        if f.name not in skip and getattr(args, f.name) is not None:
            values[f.name] = getattr(args, f.name)
    return values


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _run_one(cfg: ExperimentConfig, checkpoint: str | None = None) -> Path:
    path = Path(cfg.out_dir) / f"{cfg.run_name()}.csv"
    log = run_experiment(cfg, path)
    if checkpoint:
        log.agent.save(checkpoint.format(seed=cfg.seed))
    print(f"{cfg.run_name()}: final_rate={log.final_rate():.3f} "
          f"steps_to_90={log.steps_to_90()} -> {path}")
    return path


def cmd_train(args: argparse.Namespace) -> int:
    cfg = config_from_mapping(_config_values(args))
    _run_one(cfg, args.checkpoint)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    base = _config_values(args, skip=("arm", "seed"))
    configs = [config_from_mapping({**base, "arm": arm, "seed": seed})
               for arm in args.arms.split(",") for seed in _int_list(args.seeds)]
    aborted = 0
    for cfg in configs:
        try:
            _run_one(cfg)
        except RunAborted as exc:
            aborted += 1
            print(f"aborted: {exc}", file=sys.stderr)
    return EXIT_ABORT if aborted else EXIT_OK


def cmd_gen_demos(args: argparse.Namespace) -> int:
    for seed in _int_list(args.seeds):
        if args.target_rate is not None:
            p = calibrate_corruption(args.task, args.target_rate, args.tolerance,
                                     seed=args.calibration_seed + seed)
        else:
            p = args.corruption
        require = p == 0.0 if args.require_success is None else args.require_success
        policy = ScriptedPolicy(args.task, p, np.random.default_rng(seed))
        ds = generate_demos(policy, args.gsi, args.n_episodes, require, seed)
        out = Path(args.out.format(seed=seed))
        out.parent.mkdir(parents=True, exist_ok=True)
        save_demos(ds, out)
        print(f"{out}: {len(ds.episodes)} episodes, {ds.n_transitions} transitions, "
              f"policy={ds.policy_id}, success_rate={ds.success_rate:.3f}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    logs = load_logs(args.paths)
    if not logs:
        raise ConfigError("no run logs found")
    csv_text, table = report(logs)
    if args.csv:
        Path(args.csv).write_text(csv_text)
    print(table, end="")
    return EXIT_OK


def _bool(text: str) -> bool:
    low = text.lower()
    if low not in ("true", "false", "1", "0", "yes", "no"):
        raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")
    return low in ("true", "1", "yes")


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (argparse would exit with 2)."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="o2o", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-demos", help="write scripted demonstration files")
    g.add_argument("--task", required=True)
    g.add_argument("--gsi", type=_bool, default=False)
    g.add_argument("--n-episodes", type=int, default=10)
    g.add_argument("--corruption", type=float, default=0.0,
                   help="probability of replacing an expert action by a random one")
    g.add_argument("--target-rate", type=float, default=None,
                   help="calibrate the corruption to this success rate instead")
    g.add_argument("--tolerance", type=float, default=0.05)
    g.add_argument("--calibration-seed", type=int, default=1000)
    g.add_argument("--require-success", type=_bool, default=None,
                   help="keep only successful episodes (default: only for the expert)")
    g.add_argument("--seeds", default="0")
    g.add_argument("--out", required=True, help="output path; may contain {seed}")
    g.set_defaults(func=cmd_gen_demos)

    t = sub.add_parser("train", help="run one arm for one seed")
    _add_config_flags(t)
    t.add_argument("--checkpoint", help="save the final agent here ({seed} allowed)")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="run arms x seeds")
    _add_config_flags(s, skip=("arm", "seed"))
    s.add_argument("--arms", required=True, help="comma-separated arm names")
    s.add_argument("--seeds", required=True, help="comma-separated integers")
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="summarize run logs")
    r.add_argument("paths", nargs="+", help="CSV files or directories of them")
    r.add_argument("--csv", help="also write the summary as CSV")
    r.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DemoFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RunAborted, DemoGenerationError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
