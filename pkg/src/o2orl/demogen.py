"""Scripted demonstrators and demonstration datasets.

The expert is a saturating proportional controller toward a task-dependent
sub-goal: ``clip(EXPERT_GAIN * (target - agent), -1, 1)`` per axis for reach
and pick-and-place, and a direction-preserving saturation for push, whose
contact geometry needs the commanded direction to be exact. A non-expert is
the same controller with each action replaced, with probability
``corruption_prob``, by a uniform draw from the action box;
``calibrate_corruption`` picks that probability for a target success rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .envs import (ACTION_DIMS, DEFAULT_GEOMETRY, Geometry, GoalTaskState, TaskKind,
                   decode_observation, reset, step, task_kind)
from .replay import DemoDataset, Transition

EXPERT_ID = "expert"
# Saturates beyond 0.1 of displacement; inside that the gap shrinks by a
# factor 1 - EXPERT_GAIN * step_scale per step.
EXPERT_GAIN = 10.0


class DemoGenerationError(RuntimeError):
    pass


def _toward(frm, to, step_scale: float) -> tuple[float, float]:
    # Direction-preserving saturation: scale the whole vector, never clip per axis.
    vx, vy = (to[0] - frm[0]) / step_scale, (to[1] - frm[1]) / step_scale
    m = max(abs(vx), abs(vy), 1.0)
    return vx / m, vy / m


def _proportional(frm, to) -> tuple[float, float]:
    return (min(1.0, max(-1.0, EXPERT_GAIN * (to[0] - frm[0]))),
            min(1.0, max(-1.0, EXPERT_GAIN * (to[1] - frm[1]))))


def _reach_action(state: GoalTaskState) -> np.ndarray:
    return np.array(_proportional(state.agent_pos, state.goal_pos))


def _pickplace_action(state: GoalTaskState) -> np.ndarray:
    g = state.geometry
    if state.grip_closed:
        dx, dy = _proportional(state.agent_pos, state.goal_pos)
        return np.array([dx, dy, 1.0])
    dx, dy = _proportional(state.agent_pos, state.object_pos)
    nxt = (state.agent_pos[0] + dx * g.step_scale, state.agent_pos[1] + dy * g.step_scale)
    near = math.dist(nxt, state.object_pos) <= g.grip_radius
    return np.array([dx, dy, 1.0 if near else -1.0])


def _push_action(state: GoalTaskState) -> np.ndarray:
    g = state.geometry
    r, s = g.contact_radius, g.step_scale
    obj, goal, agent = state.object_pos, state.goal_pos, state.agent_pos
    gx, gy = goal[0] - obj[0], goal[1] - obj[1]
    dist_og = math.hypot(gx, gy)
    ux, uy = gx / dist_og, gy / dist_og
    px, py = -uy, ux
    rx, ry = agent[0] - obj[0], agent[1] - obj[1]
    along, lat = rx * ux + ry * uy, rx * px + ry * py
    contact = (obj[0] - ux * r, obj[1] - uy * r)

    def at(a: float, l: float) -> tuple[float, float]:
        return obj[0] + ux * a + px * l, obj[1] + uy * a + py * l

    if abs(lat) <= 0.02 and abs(along + r) <= 0.02:
        # Behind the object: land short of its centre on the push line so the
        # contact normal is exactly the goal direction.
        push = min(0.6 * s, dist_og)
        target = (contact[0] + ux * push, contact[1] + uy * push)
    elif along <= -(r - 0.02):
        target = contact
    else:
        side = 1.0 if lat >= 0.0 else -1.0
        out = at(along, side * (r + 0.06))
        if not (0.0 <= out[0] <= 1.0 and 0.0 <= out[1] <= 1.0):
            side = -side
        if abs(lat) < r + 0.04:
            target = at(along, side * (r + 0.06))
        else:
            target = at(-(r + 0.03), side * (r + 0.06))
    return np.array(_toward(agent, target, s))


_EXPERTS = {
    TaskKind.REACH: _reach_action,
    TaskKind.PICKPLACE: _pickplace_action,
    TaskKind.PUSH: _push_action,
}


def expert_action(state: GoalTaskState) -> np.ndarray:
    return _EXPERTS[state.task_kind](state)


@dataclass
class ScriptedPolicy:
    task: TaskKind
    corruption_prob: float = 0.0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def __post_init__(self):
        self.task = task_kind(self.task)
        if not 0.0 <= self.corruption_prob <= 1.0:
            raise ValueError(f"corruption_prob must lie in [0, 1], got {self.corruption_prob}")

    @property
    def policy_id(self) -> str:
        if self.corruption_prob == 0.0:
            return EXPERT_ID
        return f"corrupted(p={self.corruption_prob!r})"

    def act(self, state: GoalTaskState) -> np.ndarray:
        if state.task_kind is not self.task:
            raise ValueError(f"policy for {self.task.value} got a {state.task_kind.value} state")
        if self.corruption_prob > 0.0 and self.rng.random() < self.corruption_prob:
            return self.rng.uniform(-1.0, 1.0, size=ACTION_DIMS[self.task])
        return expert_action(state)


class ExpertAgent:
    """The scripted expert behind the agent interface (``select_action(obs)``)."""

    def __init__(self, task: str | TaskKind, geometry: Geometry = DEFAULT_GEOMETRY):
        self.task = task_kind(task)
        self.geometry = geometry
        self.t = 0

    def select_action(self, obs: np.ndarray, rng=None, explore: bool = False) -> np.ndarray:
        return expert_action(decode_observation(self.task, obs, self.geometry))


class RandomAgent:
    """Uniform actions from its own generator; a floor for evaluation tests."""

    def __init__(self, task: str | TaskKind, seed: int = 0):
        self.act_dim = ACTION_DIMS[task_kind(task)]
        self.rng = np.random.default_rng(seed)
        self.t = 0

    def select_action(self, obs: np.ndarray, rng=None, explore: bool = False) -> np.ndarray:
        return self.rng.uniform(-1.0, 1.0, size=self.act_dim)


def rollout(policy: ScriptedPolicy, gsi: bool, episode_seed: int,
            geometry: Geometry = DEFAULT_GEOMETRY) -> tuple[list[Transition], bool]:
    state, obs = reset(policy.task, gsi, episode_seed, geometry)
    episode = []
    while not state.done:
        a = np.clip(policy.act(state), -1.0, 1.0)
        res = step(state, a)
        episode.append(Transition(obs, a, res.reward, res.observation, res.done))
        state, obs = res.state, res.observation
    return episode, state.success


def success_rate(task: str | TaskKind, corruption_prob: float, n_rollouts: int, seed: int,
                 geometry: Geometry = DEFAULT_GEOMETRY) -> float:
    """Fraction of successful rollouts; episode seeds and noise depend only on ``seed``."""
    seed_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
    ep_seeds = np.random.default_rng(seed_ss).integers(0, 2**31, size=n_rollouts)
    policy = ScriptedPolicy(task, corruption_prob, np.random.default_rng(noise_ss))
    wins = 0
    for s in ep_seeds:
        state, _ = reset(policy.task, False, int(s), geometry)
        while not state.done:
            state = step(state, np.clip(policy.act(state), -1.0, 1.0)).state
        wins += state.success
    return wins / n_rollouts


def generate_demos(policy: ScriptedPolicy, gsi: bool, n_episodes: int, require_success: bool,
                   seed: int, max_attempts: int | None = None,
                   geometry: Geometry = DEFAULT_GEOMETRY) -> DemoDataset:
    """Roll out ``policy`` until ``n_episodes`` are collected.

    With ``require_success`` failed rollouts are discarded. The metadata
    success rate is measured over every attempted rollout.
    """
    if n_episodes <= 0:
        raise ValueError(f"n_episodes must be positive, got {n_episodes}")
    max_attempts = max_attempts or 100 * n_episodes
    seeds = np.random.default_rng(seed)
    episodes: list[list[Transition]] = []
    attempts = wins = 0
    while len(episodes) < n_episodes:
        if attempts >= max_attempts:
            raise DemoGenerationError(
                f"collected {len(episodes)}/{n_episodes} episodes in {attempts} attempts; "
                f"measured success rate {wins / attempts:.3f}")
        episode, ok = rollout(policy, gsi, int(seeds.integers(0, 2**31)), geometry)
        attempts += 1
        wins += ok
        if ok or not require_success:
            episodes.append(episode)
    return DemoDataset(episodes, task=policy.task.value, gsi=bool(gsi),
                       policy_id=policy.policy_id, success_rate=wins / attempts)


def calibrate_corruption(task: str | TaskKind, target_rate: float, tolerance: float, seed: int,
                         n_rollouts: int = 500, max_iter: int = 40,
                         geometry: Geometry = DEFAULT_GEOMETRY) -> float:
    """Bisect the corruption probability until the measured rate is within tolerance.

    Every candidate is scored on the same episode seeds and noise stream, so
    the measured rate is a near-monotone function of p.
    """
    if not 0.0 < target_rate <= 1.0:
        raise ValueError(f"target_rate must lie in (0, 1], got {target_rate}")
    if tolerance <= 0.0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    if n_rollouts < 500:
        raise ValueError(f"need at least 500 rollouts per candidate, got {n_rollouts}")

    def rate(p: float) -> float:
        return success_rate(task, p, n_rollouts, seed, geometry)

    lo, hi = 0.0, 1.0
    r_lo = rate(lo)
    if abs(r_lo - target_rate) <= tolerance:
        return lo
    r_hi = rate(hi)
    if abs(r_hi - target_rate) <= tolerance:
        return hi
    if not r_hi < target_rate < r_lo:
        raise DemoGenerationError(
            f"target {target_rate} not bracketed: rate(p=0)={r_lo:.3f}, rate(p=1)={r_hi:.3f}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        r = rate(mid)
        if abs(r - target_rate) <= tolerance:
            return mid
        if r > target_rate:
            lo = mid
        else:
            hi = mid
    raise DemoGenerationError(f"no p within {tolerance} of {target_rate} after {max_iter} "
                              f"bisections; last p={mid:.4f} rate={r:.3f}")
