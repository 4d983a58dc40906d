"""TD3-family learners on a shared actor/critic substrate.

One agent class covers every arm. What differs between arms is the schedule
(``ScheduleParams.ramp``) and whether the offline phase runs TD3+BC updates or
actor-only behaviour cloning:

- ``linear``: BC weight f(t) is 1 up to ``n_off``, falls linearly to 0 over
  ``delta_trans`` updates; exploration weight g(t) = 1 - f(t) after ``n_off``.
- ``step``: same with an instantaneous switch at ``n_off``.
- ``online``: f = 0 and g = 1 throughout (plain TD3).

The actor objective, maximised over a batch, is

    mean_b Q1(s, pi(s)) - f(t) / lambda * mean_b ||pi(s) - a||^2,
    lambda = alpha / max(mean_b |Q1(s, a)|, lambda_floor)

and with the Q-term switched off (behaviour cloning) it is
``-f(t) * mean_b ||pi(s) - a||^2``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .envs import GoalEnv
from .nncore import AdamState, MlpNet, adam_step, soft_update
from .replay import Batch, ReplayBuffer, Transition

AGENT_CHECKPOINT_VERSION = 1
RAMPS = ("linear", "step", "online")


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class Hyper:
    gamma: float = 0.98
    tau: float = 0.005
    alpha: float = 2.5
    batch_size: int = 256
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    policy_delay: int = 2
    hidden: tuple[int, ...] = (64, 64)
    timeout_terminal: bool = True
    lambda_floor: float = 1e-6

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.alpha <= 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.batch_size <= 0 or self.policy_delay <= 0:
            raise ValueError("batch_size and policy_delay must be positive")


@dataclass
class ScheduleParams:
    n_off: int = 10_000
    delta_trans: int = 5_000
    sigma: float = 0.2
    noise_clip: float = 0.5
    expl_std: float = 0.1
    ramp: str = "linear"

    def __post_init__(self):
        if self.ramp not in RAMPS:
            raise ValueError(f"ramp must be one of {RAMPS}, got {self.ramp!r}")
        if self.n_off < 0 or self.delta_trans <= 0:
            raise ValueError("need n_off >= 0 and delta_trans > 0")
        if self.noise_clip <= 0.0 or self.sigma < 0.0 or self.expl_std < 0.0:
            raise ValueError("need noise_clip > 0, sigma >= 0, expl_std >= 0")


def f_weight(t: int, schedule: ScheduleParams) -> float:
    """Weight of the behaviour-cloning penalty at update step ``t``."""
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if schedule.ramp == "online":
        return 0.0
    if t <= schedule.n_off:
        return 1.0
    if schedule.ramp == "step" or t > schedule.n_off + schedule.delta_trans:
        return 0.0
    return 1.0 - (t - schedule.n_off) / schedule.delta_trans


def g_weight(t: int, schedule: ScheduleParams) -> float:
    """Scale on the exploration noise at update step ``t``."""
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if schedule.ramp == "online":
        return 1.0
    if t <= schedule.n_off:
        return 0.0
    return 1.0 - f_weight(t, schedule)


def bc_lambda(q_values: np.ndarray, alpha: float, floor: float = 1e-6) -> float:
    return alpha / max(float(np.mean(np.abs(q_values))), floor)


class Td3Agent:
    def __init__(self, obs_dim: int, act_dim: int, hyper: Hyper | None = None,
                 schedule: ScheduleParams | None = None, rng: np.random.Generator | None = None):
        self.hyper = hyper or Hyper()
        self.schedule = schedule or ScheduleParams()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.obs_dim, self.act_dim = obs_dim, act_dim
        hidden = list(self.hyper.hidden)
        self.actor = MlpNet.init([obs_dim, *hidden, act_dim], rng, "tanh")
        self.critic1 = MlpNet.init([obs_dim + act_dim, *hidden, 1], rng)
        self.critic2 = MlpNet.init([obs_dim + act_dim, *hidden, 1], rng)
        self.actor_target = self.actor.copy()
        self.critic1_target = self.critic1.copy()
        self.critic2_target = self.critic2.copy()
        self.actor_opt = AdamState.for_net(self.actor)
        self.critic1_opt = AdamState.for_net(self.critic1)
        self.critic2_opt = AdamState.for_net(self.critic2)
        self.t = 0
        self.last_critic_loss = math.nan
        self.last_actor_obj = math.nan
        self.last_lambda = math.nan

    # -- schedules -----------------------------------------------------------
    @property
    def f(self) -> float:
        return f_weight(self.t, self.schedule)

    @property
    def g(self) -> float:
        return g_weight(self.t, self.schedule)

    # -- acting --------------------------------------------------------------
    def select_action(self, obs: np.ndarray, rng: np.random.Generator | None = None,
                      explore: bool = False) -> np.ndarray:
        a = self.actor.forward(obs)
        if explore:
            noise = rng.normal(0.0, self.schedule.expl_std, size=a.shape)
            a = np.clip(a + self.g * noise, -1.0, 1.0)
        return a

    # -- critic --------------------------------------------------------------
    def smoothed_target_action(self, s_next: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        sch = self.schedule
        a = self.actor_target.forward(s_next)
        eps = np.clip(rng.normal(0.0, sch.sigma, size=a.shape), -sch.noise_clip, sch.noise_clip)
        return np.clip(a + eps, -1.0, 1.0)

    def bootstrap_mask(self, batch: Batch) -> np.ndarray:
        """1 where the bootstrap term is cut. Successes always carry r = +1."""
        if self.hyper.timeout_terminal:
            return batch.done
        return (batch.r > 0.0).astype(np.float64)

    def compute_target(self, batch: Batch, rng: np.random.Generator) -> np.ndarray:
        a2 = self.smoothed_target_action(batch.s_next, rng)
        sa2 = np.concatenate([batch.s_next, a2], axis=1)
        q1 = self.critic1_target.forward(sa2)[:, 0]
        q2 = self.critic2_target.forward(sa2)[:, 0]
        return batch.r + self.hyper.gamma * (1.0 - self.bootstrap_mask(batch)) * np.minimum(q1, q2)

    def critic_update(self, batch: Batch, rng: np.random.Generator) -> tuple[float, float]:
        y = self.compute_target(batch, rng)
        sa = np.concatenate([batch.s, batch.a], axis=1)
        n = len(y)
        losses = []
        for net, opt in ((self.critic1, self.critic1_opt), (self.critic2, self.critic2_opt)):
            q, cache = net.forward_cached(sa)
            diff = q[:, 0] - y
            loss = float(np.mean(diff * diff))
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite critic loss at t={self.t}")
            grad, _ = net.backward_cached(cache, (2.0 / n) * diff[:, None])
            adam_step(net, grad, opt, self.hyper.critic_lr)
            losses.append(loss)
        self.last_critic_loss = 0.5 * (losses[0] + losses[1])
        return losses[0], losses[1]

    # -- actor ---------------------------------------------------------------
    def actor_gradient(self, batch: Batch, q_term: bool = True) -> tuple[np.ndarray, float, float]:
        """Gradient of the negated actor objective, the objective, and lambda.

        lambda is nan when the Q-term is off (it does not enter the BC-only
        objective).
        """
        f = self.f
        n = len(batch)
        pi, acache = self.actor.forward_cached(batch.s)
        dpi = np.zeros_like(pi)
        obj, lam = 0.0, math.nan
        if q_term:
            lam = bc_lambda(self.critic1.forward(np.concatenate([batch.s, batch.a], axis=1)),
                            self.hyper.alpha, self.hyper.lambda_floor)
            q_pi, ccache = self.critic1.forward_cached(np.concatenate([batch.s, pi], axis=1))
            _, dx = self.critic1.backward_cached(ccache, np.full_like(q_pi, -1.0 / n),
                                                 param_grads=False)
            dpi += dx[:, self.obs_dim:]
            obj = float(np.mean(q_pi))
            bc_coef = f / lam
        else:
            bc_coef = f
        diff = pi - batch.a
        obj -= bc_coef * float(np.mean(np.sum(diff * diff, axis=1)))
        dpi += (2.0 * bc_coef / n) * diff
        if not math.isfinite(obj):
            raise TrainingDiverged(f"non-finite actor objective at t={self.t}")
        grad, _ = self.actor.backward_cached(acache, dpi)
        return grad, obj, lam

    def actor_update(self, batch: Batch, q_term: bool = True) -> float:
        """One Adam ascent step on the actor objective, then soft target updates."""
        grad, obj, lam = self.actor_gradient(batch, q_term)
        adam_step(self.actor, grad, self.actor_opt, self.hyper.actor_lr)
        self.soft_update_targets()
        self.last_actor_obj = obj
        if q_term:
            self.last_lambda = lam
        return obj

    def soft_update_targets(self) -> None:
        tau = self.hyper.tau
        soft_update(self.actor_target, self.actor, tau)
        soft_update(self.critic1_target, self.critic1, tau)
        soft_update(self.critic2_target, self.critic2, tau)

    def update(self, buffer: ReplayBuffer, rng: np.random.Generator, bc_only: bool = False) -> None:
        """One update iteration; advances ``t`` by one."""
        batch = buffer.sample(self.hyper.batch_size, rng)
        if bc_only:
            self.t += 1
            self.actor_update(batch, q_term=False)
            return
        self.critic_update(batch, rng)
        self.t += 1
        if self.t % self.hyper.policy_delay == 0:
            self.actor_update(batch)

    # -- persistence ---------------------------------------------------------
    _NETS = ("actor", "critic1", "critic2", "actor_target", "critic1_target", "critic2_target")
    _OPTS = ("actor_opt", "critic1_opt", "critic2_opt")

    def save(self, path: str | Path) -> None:
        """Single .npz: one ``<net>.params`` array per network, Adam moments and
        steps per optimizer, and a JSON ``meta`` string (t, hyper, schedule,
        dims, format_version)."""
        meta = {"format_version": AGENT_CHECKPOINT_VERSION, "t": self.t,
                "obs_dim": self.obs_dim, "act_dim": self.act_dim,
                "hyper": asdict(self.hyper), "schedule": asdict(self.schedule)}
        arrays = {"meta": np.str_(json.dumps(meta))}
        for name in self._NETS:
            arrays[f"{name}.params"] = getattr(self, name).params
        for name in self._OPTS:
            opt = getattr(self, name)
            arrays[f"{name}.m"], arrays[f"{name}.v"] = opt.m, opt.v
            arrays[f"{name}.step"] = np.int64(opt.step)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "Td3Agent":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta["format_version"] != AGENT_CHECKPOINT_VERSION:
                raise ValueError(f"unsupported agent checkpoint {meta['format_version']}")
            agent = cls(meta["obs_dim"], meta["act_dim"], Hyper(**meta["hyper"]),
                        ScheduleParams(**meta["schedule"]))
            for name in cls._NETS:
                getattr(agent, name).unflatten(data[f"{name}.params"])
            for name in cls._OPTS:
                opt = getattr(agent, name)
                opt.m[:], opt.v[:] = data[f"{name}.m"], data[f"{name}.v"]
                opt.step = int(data[f"{name}.step"])
            agent.t = meta["t"]
        return agent


EvalHook = Callable[[Td3Agent], None]


def train_offline(agent: Td3Agent, buffer: ReplayBuffer, n_steps: int, rng: np.random.Generator,
                  bc_only: bool = False, after_update: EvalHook | None = None) -> Td3Agent:
    """Updates drawn from ``buffer`` only; no environment interaction."""
    if n_steps == 0:
        return agent
    if len(buffer) == 0:
        raise ValueError("offline training needs a nonempty buffer")
    for _ in range(n_steps):
        agent.update(buffer, rng, bc_only=bc_only)
        if after_update is not None:
            after_update(agent)
    return agent


def train_online(agent: Td3Agent, env: GoalEnv, buffer: ReplayBuffer, n_env_steps: int,
                 rng: np.random.Generator, after_update: EvalHook | None = None) -> Td3Agent:
    """Explore, store, and run one update iteration per environment step."""
    obs = env.reset(int(rng.integers(0, 2**31)))
    for _ in range(n_env_steps):
        a = agent.select_action(obs, rng, explore=True)
        res = env.step(a)
        buffer.push(Transition(obs, a, res.reward, res.observation, res.done))
        obs = res.observation
        if res.done:
            obs = env.reset(int(rng.integers(0, 2**31)))
        agent.update(buffer, rng)
        if after_update is not None:
            after_update(agent)
    return agent
