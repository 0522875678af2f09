"""TTTO and airtime accounting over collision-annotated traces."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field

from .kernel import SimTrace


class StateError(RuntimeError):
    """Operation called on an object in the wrong state (e.g. an unannotated trace)."""


@dataclass(frozen=True)
class TttoReport:
    per_operator: dict[str, float]
    collided_fraction: float
    idle_fraction: float
    horizon: int
    seed: int
    clean_us: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "horizon_us": self.horizon,
            "per_operator": dict(self.per_operator),
            "clean_us": dict(self.clean_us),
            "collided_fraction": self.collided_fraction,
            "idle_fraction": self.idle_fraction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TttoReport":
        return cls(
            per_operator={k: float(v) for k, v in d["per_operator"].items()},
            collided_fraction=float(d["collided_fraction"]),
            idle_fraction=float(d["idle_fraction"]),
            horizon=int(d["horizon_us"]),
            seed=int(d["seed"]),
            clean_us={k: int(v) for k, v in d.get("clean_us", {}).items()},
        )


@dataclass(frozen=True)
class ReplicaSummary:
    mean: dict[str, float]
    stddev: dict[str, float]
    replica_count: int
    seeds: list[int]

    def __post_init__(self):
        if self.replica_count < 1 or self.replica_count != len(self.seeds):
            raise ValueError("replica_count must equal the number of seeds and be at least 1")

    def to_dict(self) -> dict:
        return {"mean": dict(self.mean), "stddev": dict(self.stddev),
                "replica_count": self.replica_count, "seeds": list(self.seeds)}


def _union_length(intervals) -> int:
    total = 0
    cur_s = cur_e = None
    for s, e in sorted(intervals):
        if cur_e is None or s > cur_e:
            if cur_e is not None:
                total += cur_e - cur_s
            cur_s, cur_e = s, e
        elif e > cur_e:
            cur_e = e
    if cur_e is not None:
        total += cur_e - cur_s
    return total


def _check(trace: SimTrace) -> None:
    if not trace.annotated:
        raise StateError("trace has records without a collision verdict; run resolve_collisions first")


def airtime_breakdown(trace: SimTrace) -> tuple[int, int, int]:
    """(clean us, collided us as a union of intervals, idle us)."""
    _check(trace)
    clean = sum(r.duration for r in trace.records if not r.collided)
    collided = _union_length((r.start, r.end) for r in trace.records if r.collided)
    busy = _union_length((r.start, r.end) for r in trace.records)
    return clean, collided, trace.horizon - busy


def compute_ttto(trace: SimTrace) -> TttoReport:
    _check(trace)
    clean_us = {op: 0 for op in trace.operators}
    for r in trace.records:
        if not r.collided:
            clean_us[r.owner] = clean_us.get(r.owner, 0) + r.duration
    _, collided, idle = airtime_breakdown(trace)
    h = trace.horizon
    return TttoReport(
        per_operator={op: us / h for op, us in clean_us.items()},
        collided_fraction=collided / h,
        idle_fraction=idle / h,
        horizon=h,
        seed=trace.seed,
        clean_us=clean_us,
    )


def aggregate(reports: list[TttoReport]) -> ReplicaSummary:
    """Per-operator mean and sample standard deviation (0 for a single replica)."""
    if not reports:
        raise ValueError("aggregate needs at least one report")
    ops = list(reports[0].per_operator)
    for r in reports[1:]:
        if list(r.per_operator) != ops:
            raise ValueError("reports come from differently shaped scenarios")
    mean, std = {}, {}
    for op in ops:
        vals = [r.per_operator[op] for r in reports]
        mean[op] = statistics.fmean(vals)
        std[op] = statistics.stdev(vals) if len(vals) > 1 else 0.0
    return ReplicaSummary(mean, std, len(reports), [r.seed for r in reports])
