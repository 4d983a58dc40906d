"""Kinematic sparse-reward goal tasks on the unit square.

Three tasks share one geometry:

- ``reach``: move the agent onto the goal.
- ``pickplace``: reach the object, close the gripper on it, carry it to the
  goal. Success needs the gripper closed with the object at the goal.
- ``push``: no gripper; the agent shoves the object along the contact
  normal whenever it moves to within ``contact_radius`` of it.

Reward is +1 on the step the goal predicate first holds and -1 otherwise.
Episodes end on success or after ``horizon`` steps.

Observation layout (``obs_dim``)::

    reach      agent(2) goal(2)                          -> 4
    push       agent(2) object(2) goal(2)                -> 6
    pickplace  agent(2) object(2) goal(2) grip(1)        -> 7
    + gsi      goal - object(2) stage one-hot(3)         -> +5

For reach the agent plays the object's role in the displacement block.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from enum import Enum

import numpy as np

Vec2 = tuple[float, float]


class TaskKind(str, Enum):
    REACH = "reach"
    PICKPLACE = "pickplace"
    PUSH = "push"


class Stage(int, Enum):
    S0 = 0  # not gripping
    S1 = 1  # gripping, object away from goal
    S2 = 2  # gripping, object at goal


@dataclass(frozen=True)
class Geometry:
    step_scale: float = 0.05
    success_radius: float = 0.05
    grip_radius: float = 0.05
    contact_radius: float = 0.05
    horizon: int = 100
    # reset sampling
    margin: float = 0.1
    push_object_margin: float = 0.25
    min_goal_separation: float = 0.15
    min_object_separation: float = 0.1


DEFAULT_GEOMETRY = Geometry()

ACTION_DIMS = {TaskKind.REACH: 2, TaskKind.PICKPLACE: 3, TaskKind.PUSH: 2}
_BASE_DIMS = {TaskKind.REACH: 4, TaskKind.PICKPLACE: 7, TaskKind.PUSH: 6}
GSI_DIM = 5


def task_kind(name: str | TaskKind) -> TaskKind:
    try:
        return TaskKind(name)
    except ValueError:
        raise ValueError(f"unknown task {name!r}; expected one of "
                         f"{[t.value for t in TaskKind]}") from None


def obs_dim(kind: str | TaskKind, gsi_enabled: bool) -> int:
    kind = task_kind(kind)
    return _BASE_DIMS[kind] + (GSI_DIM if gsi_enabled else 0)


def act_dim(kind: str | TaskKind) -> int:
    return ACTION_DIMS[task_kind(kind)]


@dataclass(frozen=True)
class GoalTaskState:
    task_kind: TaskKind
    agent_pos: Vec2
    goal_pos: Vec2
    object_pos: Vec2 | None = None
    grip_closed: bool = False
    step_count: int = 0
    success: bool = False
    gsi_enabled: bool = False
    geometry: Geometry = DEFAULT_GEOMETRY

    @property
    def done(self) -> bool:
        return self.success or self.step_count >= self.geometry.horizon

    def to_dict(self) -> dict:
        d = asdict(self)
        d["task_kind"] = self.task_kind.value
        return d


@dataclass(frozen=True)
class StepResult:
    state: GoalTaskState
    observation: np.ndarray
    reward: float
    done: bool
    success: bool


def _dist(p: Vec2, q: Vec2) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


def _clamp(p: Vec2) -> Vec2:
    return (min(max(p[0], 0.0), 1.0), min(max(p[1], 0.0), 1.0))


def _sample(rng: np.random.Generator, margin: float) -> Vec2:
    x, y = rng.uniform(margin, 1.0 - margin, size=2)
    return (float(x), float(y))


def reset(kind: str | TaskKind, gsi_enabled: bool, seed: int,
          geometry: Geometry = DEFAULT_GEOMETRY) -> tuple[GoalTaskState, np.ndarray]:
    """Sample a start state by rejection.

    Goal-to-target separation (agent for reach, object otherwise) is at least
    ``min_goal_separation``; agent-to-object at least ``min_object_separation``
    (push: ``contact_radius + min_object_separation``). Push objects are kept
    ``push_object_margin`` away from the walls so they can be approached from
    any side.
    """
    kind = task_kind(kind)
    rng = np.random.default_rng(seed)
    g = geometry
    if kind is TaskKind.REACH:
        while True:
            agent, goal = _sample(rng, g.margin), _sample(rng, g.margin)
            if _dist(agent, goal) >= g.min_goal_separation:
                break
        state = GoalTaskState(kind, agent, goal, gsi_enabled=gsi_enabled, geometry=g)
    else:
        obj_margin = g.push_object_margin if kind is TaskKind.PUSH else g.margin
        min_obj = g.min_object_separation + (g.contact_radius if kind is TaskKind.PUSH else 0.0)
        while True:
            obj, goal = _sample(rng, obj_margin), _sample(rng, g.margin)
            agent = _sample(rng, g.margin)
            if _dist(obj, goal) >= g.min_goal_separation and _dist(agent, obj) >= min_obj:
                break
        state = GoalTaskState(kind, agent, goal, obj, gsi_enabled=gsi_enabled, geometry=g)
    return state, observe(state, gsi_enabled)


def _goal_reached(state: GoalTaskState) -> bool:
    r = state.geometry.success_radius
    if state.task_kind is TaskKind.REACH:
        return _dist(state.agent_pos, state.goal_pos) <= r
    if state.task_kind is TaskKind.PICKPLACE:
        return state.grip_closed and _dist(state.object_pos, state.goal_pos) <= r
    return _dist(state.object_pos, state.goal_pos) <= r


def step(state: GoalTaskState, action) -> StepResult:
    kind = state.task_kind
    a = np.asarray(action, dtype=np.float64).reshape(-1)
    if a.shape != (ACTION_DIMS[kind],):
        raise ValueError(f"{kind.value}: expected action of length {ACTION_DIMS[kind]}, "
                         f"got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite action {a.tolist()}")
    if state.done:
        raise ValueError("step() called on a finished episode")
    a = np.clip(a, -1.0, 1.0)
    g = state.geometry
    dx, dy = float(a[0]) * g.step_scale, float(a[1]) * g.step_scale
    agent = _clamp((state.agent_pos[0] + dx, state.agent_pos[1] + dy))
    obj = state.object_pos
    grip = state.grip_closed

    if kind is TaskKind.PICKPLACE:
        wants_grip = float(a[2]) > 0.0
        if grip and wants_grip:
            obj = agent
        elif grip:
            grip = False
        elif wants_grip and _dist(agent, obj) <= g.grip_radius:
            grip, obj = True, agent
    elif kind is TaskKind.PUSH:
        d = _dist(agent, obj)
        if d < g.contact_radius:
            if d > 0.0:
                nx, ny = (obj[0] - agent[0]) / d, (obj[1] - agent[1]) / d
            else:
                norm = math.hypot(dx, dy) or 1.0
                nx, ny = (dx / norm, dy / norm) if (dx or dy) else (1.0, 0.0)
            obj = _clamp((agent[0] + nx * g.contact_radius, agent[1] + ny * g.contact_radius))

    nxt = replace(state, agent_pos=agent, object_pos=obj, grip_closed=grip,
                  step_count=state.step_count + 1)
    success = _goal_reached(nxt)
    nxt = replace(nxt, success=success)
    return StepResult(nxt, observe(nxt, nxt.gsi_enabled), 1.0 if success else -1.0,
                      nxt.done, success)


def stage_of(state: GoalTaskState) -> Stage:
    if state.task_kind is not TaskKind.PICKPLACE:
        raise ValueError(f"stage_of is defined for pickplace only, got {state.task_kind.value}")
    if not state.grip_closed:
        return Stage.S0
    if _dist(state.object_pos, state.goal_pos) <= state.geometry.success_radius:
        return Stage.S2
    return Stage.S1


def _gsi_stage(state: GoalTaskState) -> Stage:
    """Stage label used in the GSI block for every task.

    reach: S0 until arrival, then S2. push: S0 without contact, S1 in contact
    with the object away from the goal, S2 with the object at the goal.
    """
    if state.task_kind is TaskKind.PICKPLACE:
        return stage_of(state)
    g = state.geometry
    if state.task_kind is TaskKind.REACH:
        return Stage.S2 if _dist(state.agent_pos, state.goal_pos) <= g.success_radius else Stage.S0
    if _dist(state.object_pos, state.goal_pos) <= g.success_radius:
        return Stage.S2
    if _dist(state.agent_pos, state.object_pos) <= g.contact_radius + 1e-9:
        return Stage.S1
    return Stage.S0


def observe(state: GoalTaskState, gsi_enabled: bool) -> np.ndarray:
    kind = state.task_kind
    feats = list(state.agent_pos)
    if kind is not TaskKind.REACH:
        feats += state.object_pos
    feats += state.goal_pos
    if kind is TaskKind.PICKPLACE:
        feats.append(1.0 if state.grip_closed else 0.0)
    if gsi_enabled:
        carried = state.agent_pos if kind is TaskKind.REACH else state.object_pos
        feats += [state.goal_pos[0] - carried[0], state.goal_pos[1] - carried[1]]
        onehot = [0.0, 0.0, 0.0]
        onehot[_gsi_stage(state)] = 1.0
        feats += onehot
    return np.asarray(feats, dtype=np.float64)


def decode_observation(kind: str | TaskKind, obs: np.ndarray,
                       geometry: Geometry = DEFAULT_GEOMETRY) -> GoalTaskState:
    """Rebuild the positional part of a state from its observation.

    Step count and the success flag are not observed and come back as 0 and
    False; any GSI block is ignored.
    """
    kind = task_kind(kind)
    o = [float(x) for x in obs]
    if kind is TaskKind.REACH:
        return GoalTaskState(kind, (o[0], o[1]), (o[2], o[3]), geometry=geometry)
    state = GoalTaskState(kind, (o[0], o[1]), (o[4], o[5]), object_pos=(o[2], o[3]),
                          geometry=geometry)
    if kind is TaskKind.PICKPLACE:
        state = replace(state, grip_closed=o[6] > 0.5)
    return state


class GoalEnv:
    """Stateful wrapper with a gym-like reset/step surface."""

    def __init__(self, task: str | TaskKind, gsi_enabled: bool = False,
                 geometry: Geometry = DEFAULT_GEOMETRY):
        self.kind = task_kind(task)
        self.gsi_enabled = bool(gsi_enabled)
        self.geometry = geometry
        self.state: GoalTaskState | None = None

    @property
    def obs_dim(self) -> int:
        return obs_dim(self.kind, self.gsi_enabled)

    @property
    def act_dim(self) -> int:
        return ACTION_DIMS[self.kind]

    def reset(self, seed: int) -> np.ndarray:
        self.state, obs = reset(self.kind, self.gsi_enabled, seed, self.geometry)
        return obs

    def step(self, action) -> StepResult:
        if self.state is None:
            raise RuntimeError("reset() before step()")
        res = step(self.state, action)
        self.state = res.state
        return res
