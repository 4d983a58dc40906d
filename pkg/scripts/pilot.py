"""Run one or more arms on one task for a few seeds and print compact curves.

    python scripts/pilot.py --task reach --gsi --arms unified,td3bc_td3 --seeds 0,1 \
        --set alpha=0.5 --set online_steps=10000
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

import numpy as np

from o2orl.demogen import ScriptedPolicy, calibrate_corruption, generate_demos
from o2orl.harness import config_from_mapping, run_experiment
from o2orl.replay import save_demos


def demo_file(task: str, gsi: bool, seed: int, kind: str, root: Path) -> Path:
    path = root / f"{task}_gsi{int(gsi)}_{kind}_s{seed}.jsonl"
    if not path.exists():
        if kind == "expert":
            ds = generate_demos(ScriptedPolicy(task), gsi, 10, True, seed)
        else:
            p = calibrate_corruption(task, 0.2, 0.05, seed=1000 + seed)
            ds = generate_demos(ScriptedPolicy(task, p, np.random.default_rng(seed)), gsi, 10,
                                False, seed)
        root.mkdir(parents=True, exist_ok=True)
        save_demos(ds, path)
    return path


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--task", default="reach")
    ap.add_argument("--gsi", action="store_true")
    ap.add_argument("--arms", default="unified")
    ap.add_argument("--seeds", default="0")
    ap.add_argument("--demos", default="expert", choices=["expert", "nonexpert", "none"])
    ap.add_argument("--set", action="append", default=[])
    ap.add_argument("--root", default="/tmp/o2o_pilot")
    args = ap.parse_args()
    overrides = dict(kv.split("=", 1) for kv in args.set)
    root = Path(args.root)
    for arm in args.arms.split(","):
        for seed in (int(s) for s in args.seeds.split(",")):
            values = dict(task=args.task, gsi=args.gsi, arm=arm, seed=seed)
            if args.demos != "none":
                values["demo_path"] = str(demo_file(args.task, args.gsi, seed, args.demos,
                                                    root / "demos"))
            values.update(overrides)
            cfg = config_from_mapping(values)
            t0 = time.time()
            log = run_experiment(cfg, root / "logs" / f"{cfg.run_name()}.csv")
            curve = " ".join(f"{int(r * 100)}" for _, r in log.curve)
            drop = log.transition_drop() if log.n_off and arm != "td3" else float("nan")
            print(f"{arm:10s} s{seed} drop={drop:5.1f} s90={log.steps_to_90()} "
                  f"final={log.final_rate():.2f} [{time.time() - t0:.0f}s] | {curve}", flush=True)


if __name__ == "__main__":
    main()
