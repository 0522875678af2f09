"""LTE-U coexistence mechanisms: CSAT duty cycling, LDS on-state, carrier selection."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .channel import RecordKind, TransmissionRecord
from .kernel import ConfigError, EventKind, Node

LDS_PERIODICITIES = (40_000, 80_000, 160_000)
SUBFRAME_US = 1000
# supplemental-downlink bands in MHz
LTEU_BANDS = ((5150, 5250), (5725, 5850))


@dataclass(frozen=True)
class CsatParams:
    on_period: int = 12_000
    off_period: int = 24_000
    min_off: int = 1000
    max_off: int = 40_000
    min_on_with_data: int = 4000
    min_on_without_data: int = 1000
    max_on: int = 20_000
    detection_threshold: float = -62.0
    max_duty_cycle: float = 0.90
    sensing_window: Optional[int] = None  # adaptive mode only; None = whole OFF period

    def __post_init__(self):
        if not self.min_off <= self.off_period <= self.max_off:
            raise ConfigError(
                "off_period",
                f"{self.off_period} us outside [{self.min_off}, {self.max_off}] (min OFF 1 ms, max OFF = LDS periodicity)",
            )
        if not self.min_on_with_data <= self.on_period <= self.max_on:
            raise ConfigError(
                "on_period",
                f"{self.on_period} us outside [{self.min_on_with_data}, {self.max_on}] (min ON with data 4 ms, max ON 20 ms)",
            )
        if self.duty_cycle > self.max_duty_cycle:
            raise ConfigError(
                "on_period",
                f"duty cycle {self.duty_cycle:.1%} exceeds the {self.max_duty_cycle:.0%} cap",
            )
        if self.sensing_window is not None and not 500 <= self.sensing_window <= 200_000:
            raise ConfigError("sensing_window", "must lie within 0.5-200 ms")

    @property
    def period(self) -> int:
        return self.on_period + self.off_period

    @property
    def duty_cycle(self) -> float:
        return self.on_period / self.period


def csat_timeline(params: CsatParams, horizon: int) -> list[tuple[int, int, bool]]:
    """ON/OFF intervals ``(start, end, on)`` tiling ``[0, horizon)``, ON first."""
    out = []
    t = 0
    while t < horizon:
        on_end = min(t + params.on_period, horizon)
        out.append((t, on_end, True))
        if on_end < horizon:
            off_end = min(on_end + params.off_period, horizon)
            out.append((on_end, off_end, False))
            t = off_end
        else:
            t = on_end
    return out


def on_subframes(start: int, end: int) -> list[tuple[int, int]]:
    return [(s, min(s + SUBFRAME_US, end)) for s in range(start, end, SUBFRAME_US)]


def _on_bounds(params: CsatParams) -> tuple[int, int]:
    period = params.period
    lo = max(params.min_on_with_data, period - params.max_off)
    hi = min(params.max_on, math.floor(params.max_duty_cycle * period), period - params.min_off)
    if lo > hi:
        raise ConfigError("on_period", f"no admissible ON period for a {period} us cycle")
    return lo, hi


def csat_adapt(observed_busy_fraction: float, params: CsatParams) -> CsatParams:
    """Linear back-off of the ON share with observed activity, period held fixed.

    Idle channel gives the largest admissible ON period; a fully busy one the
    minimum ON period with data.
    """
    if not 0.0 <= observed_busy_fraction <= 1.0:
        raise ValueError("busy fraction must lie in [0, 1]")
    lo, hi = _on_bounds(params)
    on = lo + math.floor((1.0 - observed_busy_fraction) * (hi - lo))
    return replace(params, on_period=on, off_period=params.period - on)


@dataclass(frozen=True)
class LdsConfig:
    periodicity: int = 40_000
    subframe_index: int = 5
    duration: int = 1000

    def __post_init__(self):
        if self.periodicity not in LDS_PERIODICITIES:
            raise ConfigError("periodicity", f"LDS periodicity must be one of {LDS_PERIODICITIES} us")
        if not 0 <= self.subframe_index <= 9:
            raise ConfigError("subframe_index", "must index a subframe of the 10 ms radio frame")


def lds_schedule(cfg: LdsConfig, horizon: int) -> list[tuple[int, int]]:
    offset = cfg.subframe_index * SUBFRAME_US
    return [(t, t + cfg.duration) for t in range(offset, horizon, cfg.periodicity)]


@dataclass(frozen=True)
class ChannelMeasurement:
    channel_id: int
    detected_power: float

    def __post_init__(self):
        if not math.isfinite(self.detected_power):
            raise ValueError("detected power must be finite")


def carrier_select(measurements: Sequence[ChannelMeasurement]) -> int:
    """Channel with the lowest detected power; ties go to the lowest channel id."""
    if not measurements:
        raise ValueError("carrier_select needs at least one measurement")
    best = min(measurements, key=lambda m: (m.detected_power, m.channel_id))
    return best.channel_id


def check_lteu_band(freq_mhz: float) -> bool:
    ok = any(lo <= freq_mhz < hi for lo, hi in LTEU_BANDS)
    if not ok:
        warnings.warn(f"{freq_mhz} MHz is outside the LTE-U supplemental-downlink bands", stacklevel=2)
    return ok


class LteuNode(Node):
    """Blind duty-cycled LTE-U small cell.

    ``mode`` is ``"csat"`` (fixed cycle), ``"adaptive"`` (cycle re-planned at
    every cycle start from the busy share seen during the previous OFF) or
    ``"lds"`` (discovery signal only).
    """

    technology = "lteu"

    def __init__(self, index, name, ctx, rng, params: CsatParams, mode: str = "csat",
                 lds: Optional[LdsConfig] = None, dfs: bool = True):
        super().__init__(index, name, ctx, rng, dfs)
        if mode not in ("csat", "adaptive", "lds"):
            raise ConfigError("mode", f"unknown LTE-U mode {mode!r}")
        self.params = params
        self.mode = mode
        self.lds = lds or LdsConfig()
        self.cycle_start = 0
        self.cycle = params
        self.vacated_until = -1
        self.rec_idx = -1
        self.next_t = self.lds.subframe_index * SUBFRAME_US if mode == "lds" else 0

    def _off_window(self) -> tuple[int, int]:
        off_start = self.cycle_start + self.cycle.on_period
        off_end = self.cycle_start + self.cycle.period
        w = self.params.sensing_window
        if w is not None:
            off_start = max(off_start, off_end - w)
        return off_start, off_end

    def next_event(self):
        cycle_edge = self.next_t in (0, self.cycle_start + self.cycle.period)
        kind = EventKind.DUTY_ON if self.mode != "lds" and cycle_edge else EventKind.TX_START
        return self.next_t, kind

    def handle(self, t: int) -> bool:
        if t != self.next_t:
            return False
        if self.mode == "lds":
            self.next_t = t + self.lds.periodicity
            end = t + self.lds.duration
            kind = RecordKind.DISCOVERY
        else:
            if t == self.cycle_start + self.cycle.period:
                if self.mode == "adaptive":
                    a, b = self._off_window()
                    vis = self.ctx.visible_to(self.index)
                    frac = self.ctx.channel.busy_time(a, b, vis) / (b - a)
                    self.cycle = csat_adapt(frac, self.cycle)
                self.cycle_start = t
            on_end = self.cycle_start + self.cycle.on_period
            end = min(t + SUBFRAME_US, on_end)
            self.next_t = end if end < on_end else self.cycle_start + self.cycle.period
            kind = RecordKind.DUTY_CYCLE_SUBFRAME
        if t < self.vacated_until:
            return False
        self.rec_idx = self.ctx.channel.add(TransmissionRecord(self.name, t, end, kind), self.index)
        return True

    def vacate(self, t: int, until: int) -> bool:
        self.vacated_until = until
        if self.rec_idx >= 0:
            rec = self.ctx.channel.records[self.rec_idx]
            if rec.start < t < rec.end:
                self.ctx.channel.truncate(self.rec_idx, t)
                return True
        return False
