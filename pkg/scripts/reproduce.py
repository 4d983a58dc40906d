"""Run the two desk-scale studies and print their summary tables.

    python scripts/reproduce.py transition --out runs/transition
    python scripts/reproduce.py pickplace --out runs/pickplace --seeds 0,1,2

``transition`` compares the unified schedule against the two hard-switch
baselines on ReachToy. ``pickplace`` covers the GSI ablation, the no-demo
TD3 baseline and non-expert demonstrations on PickPlaceToy. Both reuse demo
files already present under ``<out>/demos``.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from o2orl.demogen import ScriptedPolicy, calibrate_corruption, generate_demos
from o2orl.harness import ExperimentConfig, RunLog, report, run_experiment
from o2orl.replay import save_demos

COMMON = dict(alpha=0.1, expl_std=1.0, n_off=10_000, eval_interval=500, eval_episodes=20)

# Each condition is (label, arm, gsi, demo kind).
STUDIES = {
    "transition": dict(
        task="reach",
        settings=dict(delta_trans=5_000, online_steps=10_000),
        conditions=[("unified", "unified", True, "expert"),
                    ("td3bc_td3", "td3bc_td3", True, "expert"),
                    ("bc_td3", "bc_td3", True, "expert")],
    ),
    "pickplace": dict(
        task="pickplace",
        settings=dict(delta_trans=15_000, critic_lr=1e-3, online_steps=45_000),
        conditions=[("gsi", "unified", True, "expert"),
                    ("no_gsi", "unified", False, "expert"),
                    ("nonexpert", "unified", True, "nonexpert"),
                    ("td3", "td3", True, "none")],
    ),
}


def demo_path(root: Path, task: str, gsi: bool, kind: str, seed: int, p_cache: dict) -> str:
    path = root / f"{task}_gsi{int(gsi)}_{kind}_s{seed}.jsonl"
    if path.exists():
        return str(path)
    if kind == "expert":
        ds = generate_demos(ScriptedPolicy(task), gsi, 10, True, seed)
    else:
        if task not in p_cache:
            p_cache[task] = calibrate_corruption(task, 0.2, 0.05, seed=1000)
            print(f"calibrated corruption for {task}: p={p_cache[task]:.3f}")
        policy = ScriptedPolicy(task, p_cache[task], np.random.default_rng(seed))
        ds = generate_demos(policy, gsi, 10, False, seed)
    root.mkdir(parents=True, exist_ok=True)
    save_demos(ds, path)
    return str(path)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("study", choices=sorted(STUDIES))
    ap.add_argument("--out", required=True)
    ap.add_argument("--seeds", default="0,1,2,3,4")
    args = ap.parse_args()

    study = STUDIES[args.study]
    out = Path(args.out)
    p_cache: dict[str, float] = {}
    logs: list[RunLog] = []
    for label, arm, gsi, kind in study["conditions"]:
        for seed in (int(s) for s in args.seeds.split(",")):
            values = dict(COMMON, **study["settings"], task=study["task"], arm=arm, gsi=gsi,
                          seed=seed, out_dir=str(out))
            if kind == "none":  # same total update budget as the demo-seeded arms
                values["online_steps"] += values["n_off"]
            else:
                values["demo_path"] = demo_path(out / "demos", study["task"], gsi, kind, seed,
                                                p_cache)
            cfg = ExperimentConfig(**values)
            log = run_experiment(cfg, out / f"{label}_s{seed}.csv")
            print(f"{label:10s} s{seed}: steps_to_90={log.steps_to_90()} "
                  f"final={log.final_rate():.2f}", flush=True)
            logs.append(log)
    csv_text, table = report(logs)
    (out / "summary.csv").write_text(csv_text)
    print(table, end="")


if __name__ == "__main__":
    main()
