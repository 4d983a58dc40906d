"""Flat experiment configuration shared by the runner and the CLI."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from ..agents import Hyper, ScheduleParams
from ..envs import DEFAULT_GEOMETRY, Geometry, task_kind

ARMS = ("unified", "td3", "bc_td3", "td3bc_td3", "bc_only")
# arm -> (schedule ramp, offline update kind or None)
ARM_PLAN = {
    "unified": ("linear", "td3bc"),
    "td3bc_td3": ("step", "td3bc"),
    "bc_td3": ("step", "bc"),
    "bc_only": ("step", "bc"),
    "td3": ("online", None),
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    task: str = "reach"
    gsi: bool = False
    arm: str = "unified"
    demo_path: str = ""
    # Hyper
    gamma: float = 0.98
    tau: float = 0.005
    alpha: float = 2.5
    batch_size: int = 256
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    policy_delay: int = 2
    hidden: tuple[int, ...] = (64, 64)
    timeout_terminal: bool = True
    # ScheduleParams
    n_off: int = 10_000
    delta_trans: int = 5_000
    sigma: float = 0.2
    noise_clip: float = 0.5
    expl_std: float = 0.1
    # run
    online_steps: int = 20_000
    eval_interval: int = 500
    eval_episodes: int = 20
    buffer_capacity: int = 100_000
    pin_demos: bool = False
    seed: int = 0
    out_dir: str = "runs"
    log_wall_time: bool = True

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self) -> None:
        try:
            task_kind(self.task)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.arm not in ARMS:
            raise ConfigError(f"unknown arm {self.arm!r}; expected one of {ARMS}")
        if ARM_PLAN[self.arm][1] is not None and not self.demo_path:
            raise ConfigError(f"arm {self.arm!r} needs demo_path")
        for name in ("online_steps", "n_off"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        for name in ("eval_interval", "eval_episodes", "buffer_capacity"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        try:
            self.hyper()
            self.schedule()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def effective_n_off(self) -> int:
        return 0 if self.arm == "td3" else self.n_off

    def hyper(self) -> Hyper:
        return Hyper(gamma=self.gamma, tau=self.tau, alpha=self.alpha,
                     batch_size=self.batch_size, actor_lr=self.actor_lr,
                     critic_lr=self.critic_lr, policy_delay=self.policy_delay,
                     hidden=self.hidden, timeout_terminal=self.timeout_terminal)

    def schedule(self) -> ScheduleParams:
        return ScheduleParams(n_off=self.effective_n_off, delta_trans=self.delta_trans,
                              sigma=self.sigma, noise_clip=self.noise_clip,
                              expl_std=self.expl_std, ramp=ARM_PLAN[self.arm][0])

    def geometry(self) -> Geometry:
        return DEFAULT_GEOMETRY

    def run_name(self) -> str:
        return f"{self.arm}_{self.task}_gsi{int(self.gsi)}_s{self.seed}"

    def to_items(self) -> list[tuple[str, str]]:
        return [(f.name, format_value(getattr(self, f.name))) for f in fields(self)]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def parse_value(name: str, text: str) -> Any:
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    if name not in types:
        raise ConfigError(f"unknown config key {name!r}")
    kind = types[name]
    text = text.strip()
    try:
        if kind == "bool":
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind.startswith("tuple"):
            return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None
    return text


def config_from_mapping(values: dict[str, Any]) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    parsed = {k: parse_value(k, v) if isinstance(v, str) else v for k, v in values.items()}
    return ExperimentConfig(**parsed)


def read_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        parse_value(key, value)
        out[key] = value
    return out
