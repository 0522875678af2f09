"""Simulation kernel primitives: integer-microsecond clock, events, seeded RNG streams, traces."""

from __future__ import annotations

import enum
import json
import zlib
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .channel import TransmissionRecord

TRACE_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid scenario or parameter set. ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class SimClock:
    horizon: int
    now: int = 0

    def __post_init__(self):
        if self.horizon <= 0:
            raise ConfigError("horizon", "must be positive")

    def advance(self, t: int) -> None:
        if t < self.now:
            raise RuntimeError(f"clock moved backwards: {t} < {self.now}")
        if t > self.horizon:
            raise RuntimeError(f"clock beyond horizon: {t} > {self.horizon}")
        self.now = t


class EventKind(enum.IntEnum):
    """Event kinds; the integer value is the tie-break rank within one node."""

    RADAR_PULSE = 0
    TX_END = 1
    ACK_TIMEOUT = 2
    VACATE_END = 3
    DUTY_OFF = 4
    DUTY_ON = 5
    DRS_WINDOW_OPEN = 6
    DRS_WINDOW_CLOSE = 7
    SENSE_SLOT_END = 8
    BACKOFF_EXPIRY = 9
    TX_START = 10


@dataclass(frozen=True, order=True)
class Event:
    """Ordered by ``(time, node_id, kind)``; radar uses node_id -1 so it runs first."""

    time: int
    node_id: int
    kind: EventKind


class RngStream:
    """Independent PCG64 stream keyed by ``(seed, stream_id)``.

    String stream ids are hashed with CRC-32 so a node's draws do not depend
    on which other nodes exist.
    """

    def __init__(self, seed: int, stream_id: Union[int, str]):
        self.seed = int(seed)
        self.stream_id = stream_id
        key = zlib.crc32(stream_id.encode("utf-8")) if isinstance(stream_id, str) else int(stream_id)
        ss = np.random.SeedSequence(entropy=self.seed & 0xFFFFFFFFFFFFFFFF, spawn_key=(key,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def integers(self, lo: int, hi: int) -> int:
        return int(self._gen.integers(lo, hi, endpoint=True))


def draw_uniform_int(stream: RngStream, lo: int, hi: int) -> int:
    """Uniform integer in ``[lo, hi]`` inclusive."""
    if lo > hi:
        raise ValueError(f"empty range: lo={lo} > hi={hi}")
    if lo == hi:
        return lo
    return stream.integers(lo, hi)


@dataclass(frozen=True)
class SimTrace:
    horizon: int
    seed: int
    operators: tuple[str, ...]
    records: tuple[TransmissionRecord, ...] = field(default_factory=tuple)

    @property
    def annotated(self) -> bool:
        return all(r.collided is not None for r in self.records)

    def to_dict(self) -> dict:
        return {
            "schema_version": TRACE_SCHEMA_VERSION,
            "horizon": self.horizon,
            "seed": self.seed,
            "operators": list(self.operators),
            "records": [r.to_dict() for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "SimTrace":
        return cls(
            horizon=int(d["horizon"]),
            seed=int(d["seed"]),
            operators=tuple(d["operators"]),
            records=tuple(TransmissionRecord.from_dict(r) for r in d["records"]),
        )


FOREVER = 1 << 62


def walk(segments, t0: int, t1, on_idle, on_busy):
    """Feed alternating idle/busy runs of ``[t0, t1)`` to a sensing state machine.

    ``segments`` are merged busy intervals; the channel is idle outside them.
    ``on_idle(t, length)`` / ``on_busy(t, length)`` return a ready time or None.
    With ``t1=None`` the channel is treated as idle forever after the last
    segment. Returns the first ready time, or None if ``t1`` is reached first.
    """
    t = t0
    for s, e in segments:
        if e <= t:
            continue
        if t1 is not None and s >= t1:
            break
        if s > t:
            r = on_idle(t, s - t)
            if r is not None:
                return r
            t = s
        end = e if t1 is None else min(e, t1)
        if end > t:
            r = on_busy(t, end - t)
            if r is not None:
                return r
            t = end
    if t1 is None:
        return on_idle(t, FOREVER)
    if t < t1:
        return on_idle(t, t1 - t)
    return None


@dataclass
class SimContext:
    """Run-wide state shared by node state machines."""

    channel: "object"
    horizon: int
    names: list[str]
    arbitrated: bool = True
    detect: "object" = None  # detect(observer_idx, owner_name) -> bool

    def visible_to(self, observer: int):
        if self.detect is None:
            return None
        return lambda owner: self.detect(observer, owner)

    def preempted(self, observer: int, t: int) -> bool:
        """Arbitrated ties: an earlier-ordered node already started at ``t``."""
        if not self.arbitrated:
            return False
        for j in self.channel.starters_at(t):
            if j < observer and (self.detect is None or self.detect(observer, self.names[j])):
                return True
        return False


class Node:
    """Base for per-operator state machines driven by the engine.

    Subclasses implement ``next_event`` (time, kind) and ``handle(t)``, which
    performs every action due at ``t`` and returns True if the channel changed.
    Sensing nodes also implement ``sync(t)`` and ``senses()``.
    """

    def __init__(self, index: int, name: str, ctx: SimContext, rng: RngStream, dfs: bool = True):
        self.index = index
        self.name = name
        self.ctx = ctx
        self.rng = rng
        self.dfs = dfs
        self.version = 0

    def senses(self) -> bool:
        return False

    def sync(self, t: int) -> None:
        pass

    def next_event(self):
        raise NotImplementedError

    def handle(self, t: int) -> bool:
        raise NotImplementedError

    def vacate(self, t: int, until: int) -> bool:
        raise NotImplementedError

    def _segments(self, t0: int, t1=None):
        return self.ctx.channel.busy_segments(t0, t1, self.ctx.visible_to(self.index))
