"""Transitions, the ring replay buffer, and the demonstration file format.

Demo files are JSON lines. Line 1 is a header::

    {"format_version": 1, "task": ..., "gsi": ..., "policy_id": ...,
     "success_rate": ..., "obs_dim": ..., "act_dim": ...}

and every following line one transition::

    {"episode": i, "t": k, "s": [...], "a": [...], "r": r, "s_next": [...], "done": b}

Floats go through ``json`` which writes the shortest round-tripping repr.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

DEMO_FORMAT_VERSION = 1
_HEADER_KEYS = {"format_version", "task", "gsi", "policy_id", "success_rate", "obs_dim", "act_dim"}
_RECORD_KEYS = {"episode", "t", "s", "a", "r", "s_next", "done"}


class DemoFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool

    def __post_init__(self):
        object.__setattr__(self, "s", np.array(self.s, dtype=np.float64))
        object.__setattr__(self, "a", np.array(self.a, dtype=np.float64))
        object.__setattr__(self, "s_next", np.array(self.s_next, dtype=np.float64))
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "done", bool(self.done))
        for arr in (self.s, self.a, self.s_next):
            arr.flags.writeable = False
        validate_transition(self)

    def __eq__(self, other):
        if not isinstance(other, Transition):
            return NotImplemented
        return (np.array_equal(self.s, other.s) and np.array_equal(self.a, other.a)
                and self.r == other.r and np.array_equal(self.s_next, other.s_next)
                and self.done == other.done)


def validate_transition(tr: Transition) -> None:
    if tr.s.ndim != 1 or tr.s.shape != tr.s_next.shape:
        raise ValueError(f"s and s_next must be equal-length vectors, got "
                         f"{tr.s.shape} and {tr.s_next.shape}")
    if tr.a.ndim != 1 or not np.all(np.abs(tr.a) <= 1.0):
        raise ValueError(f"action components must lie in [-1, 1], got {tr.a.tolist()}")
    if tr.r not in (-1.0, 1.0):
        raise ValueError(f"reward must be -1 or +1, got {tr.r}")


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray

    def __len__(self) -> int:
        return len(self.r)


class ReplayBuffer:
    """Fixed-capacity FIFO ring over preallocated arrays.

    With ``pinned > 0`` the first ``pinned`` slots are never overwritten and
    the ring wraps over the remaining ones.
    """

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        if capacity <= 0:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = int(capacity)
        self.obs_dim, self.act_dim = int(obs_dim), int(act_dim)
        self._s = np.zeros((capacity, obs_dim))
        self._a = np.zeros((capacity, act_dim))
        self._r = np.zeros(capacity)
        self._s2 = np.zeros((capacity, obs_dim))
        self._d = np.zeros(capacity)
        self.size = 0
        self.cursor = 0
        self.pinned = 0

    def __len__(self) -> int:
        return self.size

    def push(self, tr: Transition) -> None:
        if tr.s.shape != (self.obs_dim,) or tr.a.shape != (self.act_dim,):
            raise ValueError(f"transition dims (s={tr.s.shape}, a={tr.a.shape}) do not match "
                             f"buffer (obs_dim={self.obs_dim}, act_dim={self.act_dim})")
        validate_transition(tr)
        i = self.cursor
        self._s[i], self._a[i], self._r[i] = tr.s, tr.a, tr.r
        self._s2[i], self._d[i] = tr.s_next, float(tr.done)
        self.size = min(self.size + 1, self.capacity)
        self.cursor += 1
        if self.cursor == self.capacity:
            self.cursor = self.pinned
            if self.pinned == self.capacity:
                raise ValueError("buffer is entirely pinned")

    def pin(self) -> None:
        """Protect everything currently stored from eviction."""
        if self.size == self.capacity:
            raise ValueError("cannot pin a full buffer")
        self.pinned = self.size

    def __getitem__(self, i: int) -> Transition:
        """i-th oldest stored transition."""
        if not 0 <= i < self.size:
            raise IndexError(i)
        if self.size < self.capacity:
            j = i
        elif i < self.pinned:
            j = i
        else:
            ring = self.capacity - self.pinned
            j = self.pinned + (self.cursor - self.pinned + i - self.pinned) % ring
        return Transition(self._s[j], self._a[j], self._r[j], self._s2[j], bool(self._d[j]))

    def transitions(self) -> list[Transition]:
        return [self[i] for i in range(self.size)]

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform draw with replacement."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return Batch(self._s[idx], self._a[idx], self._r[idx], self._s2[idx], self._d[idx])


@dataclass
class DemoDataset:
    episodes: list[list[Transition]]
    task: str
    gsi: bool
    policy_id: str
    success_rate: float
    obs_dim: int | None = None
    act_dim: int | None = None

    def __post_init__(self):
        dims = {(tr.s.shape[0], tr.a.shape[0]) for ep in self.episodes for tr in ep}
        if len(dims) > 1:
            raise ValueError(f"inconsistent (obs_dim, act_dim) across transitions: {sorted(dims)}")
        if dims:
            (o, a), = dims
            if (self.obs_dim, self.act_dim) not in ((None, None), (o, a)):
                raise ValueError(f"declared dims ({self.obs_dim}, {self.act_dim}) "
                                 f"but transitions have ({o}, {a})")
            self.obs_dim, self.act_dim = o, a
        for i, ep in enumerate(self.episodes):
            if not ep or not ep[-1].done:
                raise ValueError(f"episode {i} does not end with done=true")
            if any(tr.done for tr in ep[:-1]):
                raise ValueError(f"episode {i} has done=true before its last step")

    @property
    def n_transitions(self) -> int:
        return sum(len(ep) for ep in self.episodes)

    def transitions(self) -> Iterable[Transition]:
        for ep in self.episodes:
            yield from ep

    def recount_success_rate(self) -> float:
        if not self.episodes:
            return 0.0
        return sum(ep[-1].r == 1.0 for ep in self.episodes) / len(self.episodes)

    def header(self) -> dict:
        return {"format_version": DEMO_FORMAT_VERSION, "task": self.task, "gsi": self.gsi,
                "policy_id": self.policy_id, "success_rate": self.success_rate,
                "obs_dim": self.obs_dim, "act_dim": self.act_dim}


def save_demos(dataset: DemoDataset, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(dataset.header()) + "\n")
        for e, ep in enumerate(dataset.episodes):
            for t, tr in enumerate(ep):
                rec = {"episode": e, "t": t, "s": tr.s.tolist(), "a": tr.a.tolist(), "r": tr.r,
                       "s_next": tr.s_next.tolist(), "done": tr.done}
                fh.write(json.dumps(rec) + "\n")


def load_demos(path: str | Path) -> DemoDataset:
    path = Path(path)
    with open(path) as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DemoFormatError(f"{path}: empty file, expected a header line")

    def parse(lineno: int, text: str, keys: set[str]) -> dict:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DemoFormatError(f"{path}:{lineno}: malformed record ({exc.msg} at column "
                                  f"{exc.colno})") from None
        if not isinstance(obj, dict) or set(obj) != keys:
            got = sorted(obj) if isinstance(obj, dict) else type(obj).__name__
            raise DemoFormatError(f"{path}:{lineno}: expected keys {sorted(keys)}, got {got}")
        return obj

    head = parse(1, lines[0], _HEADER_KEYS)
    if head["format_version"] != DEMO_FORMAT_VERSION:
        raise DemoFormatError(f"{path}:1: unsupported format_version {head['format_version']}")
    obs_dim, act_dim = head["obs_dim"], head["act_dim"]

    episodes: list[list[Transition]] = []
    for lineno, text in enumerate(lines[1:], start=2):
        rec = parse(lineno, text, _RECORD_KEYS)
        e, t = rec["episode"], rec["t"]
        if e == len(episodes) and t == 0 and (not episodes or episodes[-1][-1].done):
            episodes.append([])
        elif not (episodes and e == len(episodes) - 1 and t == len(episodes[-1])
                  and not episodes[-1][-1].done):
            raise DemoFormatError(f"{path}:{lineno}: out-of-order record (episode {e}, t {t})")
        if len(rec["s"]) != obs_dim or len(rec["s_next"]) != obs_dim or len(rec["a"]) != act_dim:
            raise DemoFormatError(f"{path}:{lineno}: dimensions do not match header "
                                  f"(obs_dim={obs_dim}, act_dim={act_dim})")
        try:
            tr = Transition(rec["s"], rec["a"], rec["r"], rec["s_next"], rec["done"])
        except ValueError as exc:
            raise DemoFormatError(f"{path}:{lineno}: {exc}") from None
        episodes[-1].append(tr)
    if episodes and not episodes[-1][-1].done:
        raise DemoFormatError(f"{path}:{len(lines)}: file ends inside episode "
                              f"{len(episodes) - 1} (no done=true record); truncated?")
    return DemoDataset(episodes, task=head["task"], gsi=bool(head["gsi"]),
                       policy_id=head["policy_id"], success_rate=head["success_rate"],
                       obs_dim=obs_dim, act_dim=act_dim)


def init_from_demos(dataset: DemoDataset, capacity: int, pin: bool = False,
                    obs_dim: int | None = None, act_dim: int | None = None) -> ReplayBuffer:
    """Buffer holding every demo transition in episode order."""
    n = dataset.n_transitions
    if capacity < n:
        raise ValueError(f"capacity {capacity} is smaller than the {n} demo transitions")
    obs_dim = dataset.obs_dim if dataset.obs_dim is not None else obs_dim
    act_dim = dataset.act_dim if dataset.act_dim is not None else act_dim
    if obs_dim is None or act_dim is None:
        raise ValueError("empty dataset without declared dims; pass obs_dim and act_dim")
    buf = ReplayBuffer(capacity, obs_dim, act_dim)
    for tr in dataset.transitions():
        buf.push(tr)
    if pin and n:
        buf.pin()
    return buf
