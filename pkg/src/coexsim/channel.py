"""Shared-channel model: occupancy records, sensing queries, collisions and DFS radar."""

from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

# Default DFS non-occupancy period: 30 minutes.
DEFAULT_NON_OCCUPANCY_US = 1_800_000_000


class RecordKind(str, enum.Enum):
    DATA = "data"
    ACK = "ack"
    DISCOVERY = "discovery"
    DUTY_CYCLE_SUBFRAME = "duty-cycle-subframe"


@dataclass(frozen=True)
class TransmissionRecord:
    """One channel-occupancy interval ``[start, end)`` in microseconds.

    ``collided`` is ``None`` until the record has been annotated, then True iff
    any other record overlaps it by at least one microsecond.
    """

    owner: str
    start: int
    end: int
    kind: RecordKind
    collided: Optional[bool] = None
    truncated: bool = False

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"record must have start < end, got [{self.start}, {self.end})")

    @property
    def duration(self) -> int:
        return self.end - self.start

    def overlaps(self, other: "TransmissionRecord") -> bool:
        return self.start < other.end and other.start < self.end

    def to_dict(self) -> dict:
        return {
            "owner": self.owner,
            "start": self.start,
            "end": self.end,
            "kind": self.kind.value,
            "collided": self.collided,
            "truncated": self.truncated,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransmissionRecord":
        return cls(
            owner=d["owner"],
            start=int(d["start"]),
            end=int(d["end"]),
            kind=RecordKind(d["kind"]),
            collided=d.get("collided"),
            truncated=bool(d.get("truncated", False)),
        )


@dataclass(frozen=True)
class SensingAssumption:
    """Who can hear whom.

    With ``mutual_detectability`` every transmission is sensed busy by every
    node. Otherwise ``received_power[observer][owner]`` (dBm) is compared with
    the observer's energy-detection threshold.
    """

    mutual_detectability: bool = True
    received_power: Optional[dict[str, dict[str, float]]] = None

    def detects(self, observer: str, owner: str, threshold_dbm: float) -> bool:
        if self.mutual_detectability or observer == owner:
            return True
        if self.received_power is None:
            raise ValueError("received_power matrix required when mutual_detectability is false")
        power = self.received_power.get(observer, {}).get(owner)
        if power is None:
            return False
        return power >= threshold_dbm


@dataclass(frozen=True)
class RadarConfig:
    pulse_times: tuple[int, ...] = ()
    non_occupancy: int = DEFAULT_NON_OCCUPANCY_US

    def __post_init__(self):
        object.__setattr__(self, "pulse_times", tuple(int(t) for t in self.pulse_times))
        if any(b <= a for a, b in zip(self.pulse_times, self.pulse_times[1:])):
            raise ValueError("radar pulse_times must be strictly increasing")
        if any(t < 0 for t in self.pulse_times):
            raise ValueError("radar pulse_times must be non-negative")
        if self.non_occupancy <= 0:
            raise ValueError("radar non_occupancy must be positive")


def resolve_collisions(records: Sequence[TransmissionRecord]) -> list[TransmissionRecord]:
    """Return the records with ``collided`` set by a sweep over start times."""
    order = sorted(range(len(records)), key=lambda i: (records[i].start, records[i].end))
    flags = [False] * len(records)
    active: list[int] = []  # indices whose end lies beyond the sweep point
    for i in order:
        rec = records[i]
        active = [j for j in active if records[j].end > rec.start]
        if active:
            flags[i] = True
            for j in active:
                flags[j] = True
        active.append(i)
    return [replace(r, collided=f) for r, f in zip(records, flags)]


def vacate_windows(radar: RadarConfig) -> list[tuple[int, int]]:
    """Merged non-occupancy windows; a pulse inside a window restarts it."""
    windows: list[tuple[int, int]] = []
    for t in radar.pulse_times:
        end = t + radar.non_occupancy
        if windows and t < windows[-1][1]:
            windows[-1] = (windows[-1][0], end)
        else:
            windows.append((t, end))
    return windows


@dataclass(frozen=True)
class VacateDirective:
    window_start: int
    window_end: int
    nodes: tuple[str, ...]


def apply_radar(
    records: Sequence[TransmissionRecord], radar: RadarConfig, obligated: Iterable[str]
) -> tuple[list[TransmissionRecord], list[VacateDirective]]:
    """Cut DFS-obligated transmissions at each pulse and drop anything inside a vacate window.

    Records of obligated owners that straddle a pulse are truncated at the
    pulse; records starting inside a non-occupancy window are removed.
    """
    obligated = tuple(sorted(set(obligated)))
    windows = vacate_windows(radar)
    out = []
    for rec in records:
        if rec.owner not in obligated:
            out.append(rec)
            continue
        keep = rec
        for start, end in windows:
            if start <= keep.start < end:
                keep = None
                break
            if keep.start < start < keep.end:
                keep = replace(keep, end=start, truncated=True)
        if keep is not None:
            out.append(keep)
    return out, [VacateDirective(s, e, obligated) for s, e in windows]


@dataclass
class Channel:
    """Append-only record store with interval queries used by the sensing logic.

    Records must be added in non-decreasing start order. ``max_duration``
    bounds how far back a query has to look.
    """

    max_duration: int = 0
    records: list[TransmissionRecord] = field(default_factory=list)
    _starts: list[int] = field(default_factory=list)
    _flags: list[bool] = field(default_factory=list)
    _active: list[int] = field(default_factory=list)
    _started_at: int = -1
    _starters: list[int] = field(default_factory=list)

    def add(self, rec: TransmissionRecord, owner_index: int = -1) -> int:
        if self._starts and rec.start < self._starts[-1]:
            raise ValueError("records must be added in start order")
        idx = len(self.records)
        self.records.append(rec)
        self._starts.append(rec.start)
        self.max_duration = max(self.max_duration, rec.duration)
        # overlap bookkeeping: anything still on air at rec.start collides with it
        self._active = [j for j in self._active if self.records[j].end > rec.start]
        hit = bool(self._active)
        for j in self._active:
            self._flags[j] = True
        self._flags.append(hit)
        self._active.append(idx)
        if rec.start != self._started_at:
            self._started_at = rec.start
            self._starters = []
        self._starters.append(owner_index)
        return idx

    def collided(self, idx: int) -> bool:
        return self._flags[idx]

    def truncate(self, idx: int, at: int) -> None:
        rec = self.records[idx]
        if rec.start < at < rec.end:
            self.records[idx] = replace(rec, end=at, truncated=True)

    def starters_at(self, t: int) -> list[int]:
        """Owner indices (in insertion order) of records that started at ``t``."""
        return self._starters if t == self._started_at else []

    def _candidates(self, a: int, b: int) -> list[TransmissionRecord]:
        hi = bisect.bisect_left(self._starts, b)
        lo = bisect.bisect_left(self._starts, a - self.max_duration)
        return [r for r in self.records[lo:hi] if r.end > a]

    def busy_segments(self, a: int, b: Optional[int] = None, visible=None) -> list[tuple[int, int]]:
        """Merged busy intervals clipped to ``[a, b)`` (``b=None``: everything known)."""
        if b is None:
            lo = bisect.bisect_left(self._starts, a - self.max_duration)
            cands = [r for r in self.records[lo:] if r.end > a]
            spans = sorted((max(r.start, a), r.end) for r in cands if visible is None or visible(r.owner))
        else:
            cands = self._candidates(a, b)
            spans = sorted(
                (max(r.start, a), min(r.end, b)) for r in cands if visible is None or visible(r.owner)
            )
        merged: list[tuple[int, int]] = []
        for s, e in spans:
            if s >= e:
                continue
            if merged and s <= merged[-1][1]:
                if e > merged[-1][1]:
                    merged[-1] = (merged[-1][0], e)
            else:
                merged.append((s, e))
        return merged

    def is_busy(self, t: int) -> bool:
        return bool(self._candidates(t, t + 1))

    def busy_time(self, a: int, b: int, visible=None) -> int:
        return sum(e - s for s, e in self.busy_segments(a, b, visible))

    def slot_idle(self, slot_start: int, slot_len: int = 9, busy_overlap_tolerance: int = 5) -> bool:
        """True iff at most ``busy_overlap_tolerance`` microseconds of the slot are busy."""
        return self.busy_time(slot_start, slot_start + slot_len) <= busy_overlap_tolerance

    def annotated(self) -> list[TransmissionRecord]:
        return [replace(r, collided=f) for r, f in zip(self.records, self._flags)]
