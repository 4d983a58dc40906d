"""Cross-seed aggregation of RunLogs into a summary table."""

from __future__ import annotations

import csv
import io
import statistics
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .runlog import RunLog

GROUP_KEYS = ("arm", "task", "gsi", "demo_kind")


def censored_steps_to_90(log: RunLog) -> int:
    """steps_to_90, or the last evaluated t when the run never got there.

    The censored value is a lower bound on the true hitting time, so an
    ordering that holds with it would also hold with more budget.
    """
    hit = log.steps_to_90()
    if hit is not None:
        return hit
    if not log.records:
        raise ValueError("cannot censor an empty log")
    return log.records[-1].t


def log_drop(log: RunLog) -> float | None:
    """Transition drop for runs that have an offline phase, else None."""
    if log.n_off == 0 or not any(t <= log.n_off for t, _ in log.curve):
        return None
    return log.transition_drop()


def mean_curve(logs: Sequence[RunLog]) -> list[tuple[int, float]]:
    """Mean success at every t that all logs evaluated."""
    if not logs:
        return []
    common = set.intersection(*({t for t, _ in log.curve} for log in logs))
    rates = [dict(log.curve) for log in logs]
    return [(t, sum(r[t] for r in rates) / len(rates)) for t in sorted(common)]


@dataclass
class Summary:
    key: tuple[str, ...]
    n: int
    reached_90: int
    steps_to_90: list[int]
    steps_to_90_censored: list[int]
    steps_to_convergence: list[int]
    final_rate: list[float]
    transition_drop: list[float]

    @staticmethod
    def _ms(xs: Sequence[float]) -> str:
        if not xs:
            return "-"
        mean = statistics.fmean(xs)
        std = statistics.pstdev(xs) if len(xs) > 1 else 0.0
        return f"{mean:.4g} ± {std:.2g}"

    def row(self) -> dict[str, str]:
        out = dict(zip(GROUP_KEYS, self.key))
        out.update(
            seeds=str(self.n),
            reached_90=f"{self.reached_90}/{self.n}",
            steps_to_90=self._ms(self.steps_to_90),
            steps_to_90_censored=self._ms(self.steps_to_90_censored),
            steps_to_convergence=self._ms(self.steps_to_convergence),
            final_rate=self._ms(self.final_rate),
            transition_drop=self._ms(self.transition_drop),
        )
        return out


def summarize(logs: Iterable[RunLog]) -> list[Summary]:
    """One Summary per (arm, task, gsi, demo_kind); incomplete logs are skipped."""
    groups: dict[tuple[str, ...], list[RunLog]] = defaultdict(list)
    for log in logs:
        if log.status != "complete" or not log.records:
            continue
        groups[tuple(log.header.get(k, "?") for k in GROUP_KEYS)].append(log)
    out = []
    for key in sorted(groups):
        group = groups[key]
        hits = [h for h in (log.steps_to_90() for log in group) if h is not None]
        conv = [c for c in (log.steps_to_convergence() for log in group) if c is not None]
        drops = [d for d in (log_drop(log) for log in group) if d is not None]
        out.append(Summary(key, len(group), len(hits), hits,
                           [censored_steps_to_90(log) for log in group], conv,
                           [log.final_rate() for log in group], drops))
    return out


def report(logs: Iterable[RunLog]) -> tuple[str, str]:
    """(CSV text, plain-text table) for the given logs."""
    rows = [s.row() for s in summarize(logs)]
    if not rows:
        return "", "no complete logs\n"
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    cols = list(rows[0])
    widths = [max(len(c), *(len(r[c]) for r in rows)) for c in cols]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(r[c].ljust(w) for c, w in zip(cols, widths)) for r in rows]
    return buf.getvalue(), "\n".join(lines) + "\n"


def load_logs(paths: Iterable[str | Path]) -> list[RunLog]:
    files: list[Path] = []
    for p in map(Path, paths):
        files.extend(sorted(p.glob("*.csv")) if p.is_dir() else [p])
    return [RunLog.read_csv(f) for f in files]

