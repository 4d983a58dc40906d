"""Evaluation records, run logs, and the learning-curve metrics.

A RunLog CSV looks like::

    # format_version=1
    # package_version=0.1.0
    # task=reach
    # ... every ExperimentConfig field, then run facts (demo_policy, obs_dim, ...)
    t,success_rate,episodes,wall_ms,f_t,g_t,lambda,critic_loss,actor_obj
    500,0.85,20,1234,1.0,0.0,1.72,0.031,-2.4
    ...
    # status=complete

Records are appended and flushed as they are produced; a run that aborts
ends with ``# status=incomplete`` and a ``# reason=...`` line.

Metric definitions (all pure functions of the (t, success_rate) sequence):

- steps_to_90: first t with success >= 0.9 that stays >= 0.9 for the next
  3 evaluations (or for all remaining ones if fewer are left); None if never.
- final_rate: mean success over the last 5 evaluations.
- steps_to_convergence: first t from which every later success lies within
  5 points of final_rate.
- transition_drop: success at the last evaluation with t <= n_off minus the
  minimum success over n_off <= t <= n_off + delta_trans + W, in points.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass
from pathlib import Path
from typing import Iterable, Sequence, TextIO

RUNLOG_VERSION = 1
COLUMNS = ("t", "success_rate", "episodes", "wall_ms", "f_t", "g_t", "lambda",
           "critic_loss", "actor_obj")


@dataclass(frozen=True)
class EvalRecord:
    t: int
    success_rate: float
    episodes: int
    wall_ms: int = 0
    f_t: float = math.nan
    g_t: float = math.nan
    lam: float = math.nan
    critic_loss: float = math.nan
    actor_obj: float = math.nan

    def to_row(self) -> str:
        return ",".join(_fmt(v) for v in astuple(self))

    @classmethod
    def from_row(cls, row: str) -> "EvalRecord":
        parts = row.split(",")
        if len(parts) != len(COLUMNS):
            raise ValueError(f"expected {len(COLUMNS)} columns, got {len(parts)}: {row!r}")
        t, sr, ep, wall, *rest = parts
        return cls(int(t), float(sr), int(ep), int(wall), *(float(x) for x in rest))


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


class RunLog:
    def __init__(self, header: dict[str, str] | None = None,
                 records: Iterable[EvalRecord] = (), status: str = "running"):
        self.header = dict(header or {})
        self.records: list[EvalRecord] = []
        self.status = status
        self.reason = ""
        self.agent = None  # set by run_experiment; never serialized
        for rec in records:
            self.append(rec)

    def append(self, rec: EvalRecord) -> None:
        if self.records and rec.t <= self.records[-1].t:
            raise ValueError(f"records must be strictly increasing in t "
                             f"({rec.t} after {self.records[-1].t})")
        self.records.append(rec)

    @property
    def curve(self) -> list[tuple[int, float]]:
        return [(r.t, r.success_rate) for r in self.records]

    def _int(self, key: str) -> int:
        return int(self.header[key])

    @property
    def n_off(self) -> int:
        return self._int("effective_n_off")

    @property
    def delta_trans(self) -> int:
        return self._int("delta_trans")

    def steps_to_90(self) -> int | None:
        return steps_to_threshold(self.curve)

    def steps_to_convergence(self) -> int | None:
        return steps_to_convergence(self.curve)

    def final_rate(self) -> float:
        return final_rate(self.curve)

    def transition_drop(self, window: int | None = None) -> float:
        return transition_drop(self.curve, self.n_off, self.delta_trans, window)

    # -- CSV -----------------------------------------------------------------
    def write_header(self, fh: TextIO) -> None:
        fh.write(f"# format_version={RUNLOG_VERSION}\n")
        for k, v in self.header.items():
            fh.write(f"# {k}={v}\n")
        fh.write(",".join(COLUMNS) + "\n")

    def write_footer(self, fh: TextIO) -> None:
        fh.write(f"# status={self.status}\n")
        if self.reason:
            fh.write(f"# reason={self.reason}\n")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            self.write_header(fh)
            for rec in self.records:
                fh.write(rec.to_row() + "\n")
            self.write_footer(fh)

    @classmethod
    def read_csv(cls, path: str | Path) -> "RunLog":
        log = cls()
        seen_columns = False
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            if line.startswith("# "):
                key, _, value = line[2:].partition("=")
                if key == "status":
                    log.status = value
                elif key == "reason":
                    log.reason = value
                elif key != "format_version":
                    log.header[key] = value
                elif int(value) != RUNLOG_VERSION:
                    raise ValueError(f"{path}:{lineno}: unsupported runlog version {value}")
            elif not seen_columns:
                if tuple(line.split(",")) != COLUMNS:
                    raise ValueError(f"{path}:{lineno}: unexpected column header {line!r}")
                seen_columns = True
            elif line:
                try:
                    log.append(EvalRecord.from_row(line))
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from None
        return log


class RunLogWriter:
    """Streams a RunLog to disk, one flushed line per record."""

    def __init__(self, log: RunLog, path: str | Path | None):
        self.log = log
        self.path = Path(path) if path else None
        self._fh = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w")
            log.write_header(self._fh)
            self._fh.flush()

    def append(self, rec: EvalRecord) -> None:
        self.log.append(rec)
        if self._fh:
            self._fh.write(rec.to_row() + "\n")
            self._fh.flush()

    def close(self, status: str, reason: str = "") -> None:
        self.log.status, self.log.reason = status, reason
        if self._fh:
            self.log.write_footer(self._fh)
            self._fh.close()
            self._fh = None


# -- metrics -----------------------------------------------------------------

def steps_to_threshold(curve: Sequence[tuple[int, float]], threshold: float = 0.9,
                       sustain: int = 3) -> int | None:
    rates = [r for _, r in curve]
    for i, (t, r) in enumerate(curve):
        if r >= threshold and all(x >= threshold for x in rates[i + 1:i + 1 + sustain]):
            return t
    return None


def final_rate(curve: Sequence[tuple[int, float]], last: int = 5) -> float:
    if not curve:
        raise ValueError("empty curve")
    tail = [r for _, r in curve[-last:]]
    return sum(tail) / len(tail)


def steps_to_convergence(curve: Sequence[tuple[int, float]], band: float = 0.05,
                         last: int = 5) -> int | None:
    if not curve:
        return None
    final = final_rate(curve, last)
    start = None
    for t, r in reversed(curve):
        if abs(r - final) > band + 1e-12:
            break
        start = t
    return start


def transition_drop(curve: Sequence[tuple[int, float]], n_off: int, delta_trans: int,
                    window: int | None = None) -> float:
    window = delta_trans if window is None else window
    offline = [r for t, r in curve if t <= n_off]
    if not offline:
        raise ValueError(f"no evaluation at or before n_off={n_off}")
    start = offline[-1]
    lo = n_off + delta_trans + window
    in_window = [r for t, r in curve if n_off <= t <= lo]
    return 100.0 * (start - min(in_window))
