"""Evaluation and the experiment runner for every arm."""

from __future__ import annotations

import math
import time
from pathlib import Path

import numpy as np

from .. import __version__
from ..agents import Td3Agent, TrainingDiverged, f_weight, g_weight, train_offline, train_online
from ..envs import GoalEnv, obs_dim, reset, step
from ..nncore import NonFiniteGradient
from ..replay import ReplayBuffer, init_from_demos, load_demos
from .config import ARM_PLAN, ConfigError, ExperimentConfig
from .runlog import EvalRecord, RunLog, RunLogWriter


class RunAborted(RuntimeError):
    def __init__(self, message: str, log: RunLog):
        super().__init__(message)
        self.log = log


def run_episodes(agent, task: str, gsi: bool, n_episodes: int, seed: int) -> int:
    """Greedy rollouts on episodes seeded from ``seed``; returns the success count."""
    if n_episodes <= 0:
        raise ValueError(f"n_episodes must be positive, got {n_episodes}")
    seeds = np.random.default_rng(seed).integers(0, 2**31, size=n_episodes)
    wins = 0
    for s in seeds:
        state, obs = reset(task, gsi, int(s))
        while not state.done:
            res = step(state, agent.select_action(obs))
            state, obs = res.state, res.observation
        wins += state.success
    return wins


def evaluate(agent, task: str, gsi: bool, n_episodes: int, seed: int) -> EvalRecord:
    wins = run_episodes(agent, task, gsi, n_episodes, seed)
    return EvalRecord(t=getattr(agent, "t", 0), success_rate=wins / n_episodes,
                      episodes=n_episodes)


def _seeds(seed: int) -> tuple[np.random.Generator, np.random.Generator, int]:
    init_ss, train_ss, eval_ss = np.random.SeedSequence(seed).spawn(3)
    eval_seed = int(np.random.default_rng(eval_ss).integers(0, 2**31))
    return np.random.default_rng(init_ss), np.random.default_rng(train_ss), eval_seed


def _demo_kind(policy_id: str) -> str:
    return "expert" if policy_id == "expert" else "non-expert"


def build_buffer(config: ExperimentConfig) -> tuple[ReplayBuffer, str]:
    dim = obs_dim(config.task, config.gsi)
    act = GoalEnv(config.task).act_dim
    if not config.demo_path:
        return ReplayBuffer(config.buffer_capacity, dim, act), "none"
    path = config.demo_path.format(seed=config.seed)
    if not Path(path).exists():
        raise ConfigError(f"demo file {path} does not exist")
    ds = load_demos(path)
    if ds.task != config.task or ds.gsi != config.gsi:
        raise ConfigError(f"demo file {path} is for task={ds.task} gsi={ds.gsi}, run wants "
                          f"task={config.task} gsi={config.gsi}")
    try:
        buf = init_from_demos(ds, config.buffer_capacity, pin=config.pin_demos,
                              obs_dim=dim, act_dim=act)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return buf, _demo_kind(ds.policy_id)


def run_experiment(config: ExperimentConfig, log_path: str | Path | None = None,
                   eval_enabled: bool = True) -> RunLog:
    """Run one arm end to end, streaming the RunLog to ``log_path`` if given.

    ``eval_enabled=False`` skips the evaluation rollouts (records are still
    emitted with success_rate nan); used to check that evaluation never
    touches the training random stream.
    """
    config.validate()
    init_rng, train_rng, eval_seed = _seeds(config.seed)
    buffer, demo_kind = build_buffer(config)
    env = GoalEnv(config.task, config.gsi)
    agent = Td3Agent(env.obs_dim, env.act_dim, config.hyper(), config.schedule(), init_rng)
    _, offline_kind = ARM_PLAN[config.arm]
    n_off = config.effective_n_off if offline_kind else 0

    header = dict(config.to_items())
    header.update(package_version=__version__, effective_n_off=str(n_off),
                  demo_kind=demo_kind, n_demo_transitions=str(len(buffer)),
                  obs_dim=str(env.obs_dim), act_dim=str(env.act_dim))
    log = RunLog(header)
    writer = RunLogWriter(log, log_path)
    start = time.perf_counter()

    def record() -> None:
        if eval_enabled:
            rec = evaluate(agent, config.task, config.gsi, config.eval_episodes, eval_seed)
            rate = rec.success_rate
        else:
            rate = math.nan
        wall = int((time.perf_counter() - start) * 1000) if config.log_wall_time else 0
        writer.append(EvalRecord(agent.t, rate, config.eval_episodes, wall,
                                 f_weight(agent.t, agent.schedule),
                                 g_weight(agent.t, agent.schedule), agent.last_lambda,
                                 agent.last_critic_loss, agent.last_actor_obj))

    def hook(a: Td3Agent) -> None:
        if a.t % config.eval_interval == 0:
            record()

    try:
        if offline_kind:
            train_offline(agent, buffer, n_off, train_rng, bc_only=offline_kind == "bc",
                          after_update=hook)
            if not log.records or log.records[-1].t != agent.t:
                record()
        if config.arm != "bc_only" and config.online_steps > 0:
            train_online(agent, env, buffer, config.online_steps, train_rng, after_update=hook)
            if not log.records or log.records[-1].t != agent.t:
                record()
    except (TrainingDiverged, NonFiniteGradient, FloatingPointError) as exc:
        writer.close("incomplete", f"{type(exc).__name__}: {exc}")
        raise RunAborted(f"{config.run_name()} aborted at t={agent.t}: {exc}", log) from exc
    writer.close("complete")
    log.agent = agent
    return log
