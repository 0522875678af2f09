"""LAA / MulteFire listen-before-talk: Category-4 channel access, DRS access and ED thresholds."""

from __future__ import annotations

import copy
import enum
import sys
from dataclasses import dataclass, field
from importlib import resources
from typing import NamedTuple, Optional

from .channel import RecordKind, TransmissionRecord
from .kernel import ConfigError, EventKind, Node, RngStream, SimClock, draw_uniform_int, walk

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DMTC_PERIODICITIES = (40_000, 80_000, 160_000)


@dataclass(frozen=True)
class LbtParams:
    priority_class: int = 2
    m_p: int = 1
    cw_min_p: int = 7
    cw_max_p: int = 15
    allowed_cw_sizes: tuple[int, ...] = (7, 15)
    t_mcot_p: int = 3000
    slot_t_sl: int = 9
    t_f: int = 16
    idle_requirement: int = 4

    def __post_init__(self):
        object.__setattr__(self, "allowed_cw_sizes", tuple(int(c) for c in self.allowed_cw_sizes))
        sizes = self.allowed_cw_sizes
        if not sizes or list(sizes) != sorted(set(sizes)):
            raise ConfigError("allowed_cw_sizes", "must be a non-empty strictly increasing list")
        if sizes[0] != self.cw_min_p or sizes[-1] != self.cw_max_p:
            raise ConfigError("allowed_cw_sizes", f"must run from cw_min_p={self.cw_min_p} to cw_max_p={self.cw_max_p}")
        if not 1 <= self.m_p <= 7:
            raise ConfigError("m_p", f"must be within 1..7, got {self.m_p}")
        if not 2000 <= self.t_mcot_p <= 10000:
            raise ConfigError("t_mcot_p", f"must be within 2-10 ms, got {self.t_mcot_p} us")
        if not 1 <= self.priority_class <= 4:
            raise ConfigError("priority_class", "must be 1..4")
        if not 0 < self.idle_requirement <= self.slot_t_sl:
            raise ConfigError("idle_requirement", "must lie within one slot")
        if self.t_f < self.slot_t_sl:
            raise ConfigError("t_f", "must contain a full idle slot at its start")


def load_priority_classes(path=None) -> dict[int, LbtParams]:
    """Channel-access priority classes from a TOML file (defaults to the bundled table)."""
    if path is None:
        text = resources.files("coexsim").joinpath("data/priority_classes.toml").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    data = tomllib.loads(text)
    out = {}
    for entry in data["class"]:
        sizes = tuple(entry["allowed_cw_sizes"])
        out[int(entry["priority_class"])] = LbtParams(
            priority_class=int(entry["priority_class"]),
            m_p=int(entry["m_p"]),
            cw_min_p=sizes[0],
            cw_max_p=sizes[-1],
            allowed_cw_sizes=sizes,
            t_mcot_p=int(entry["t_mcot_us"]),
        )
    return out


def defer_duration(params: LbtParams) -> int:
    return params.t_f + params.m_p * params.slot_t_sl


class LbtPhase(str, enum.Enum):
    INITIAL_DEFER = "initial-defer"
    COUNTING = "counting"
    TRANSMITTING = "transmitting"
    EXTRA_DEFER = "extra-defer"
    VACATED = "vacated"


@dataclass
class LbtState:
    """Cat-4 progress.

    ``n_remaining`` counts the idle sensing slots still owed: it starts at
    N + 1 for a fresh draw N and is kept across interruptions.
    """

    cw_p: int
    n_remaining: Optional[int] = None
    phase: LbtPhase = LbtPhase.INITIAL_DEFER
    idle_run: int = 0
    slot_pos: int = 0
    busy_in_slot: int = 0

    @classmethod
    def initial(cls, params: LbtParams, rng: Optional[RngStream] = None) -> "LbtState":
        st = cls(cw_p=params.cw_min_p)
        if rng is not None:
            draw_backoff(st, rng)
        return st

    def restart_defer(self) -> None:
        self.phase = LbtPhase.EXTRA_DEFER
        self.idle_run = 0
        self.slot_pos = 0
        self.busy_in_slot = 0


def draw_backoff(state: LbtState, rng: RngStream) -> int:
    n = draw_uniform_int(rng, 0, state.cw_p)
    state.n_remaining = n + 1
    return n


def cw_escalate(state: LbtState, params: LbtParams, collided: bool) -> LbtState:
    if collided:
        sizes = params.allowed_cw_sizes
        i = sizes.index(state.cw_p)
        state.cw_p = sizes[min(i + 1, len(sizes) - 1)]
    else:
        state.cw_p = params.cw_min_p
    return state


def lbt_sense(state: LbtState, params: LbtParams, segments, t0: int, t1: Optional[int]) -> Optional[int]:
    """Advance Cat-4 sensing over ``[t0, t1)``; return the grant time if reached.

    A defer needs ``T_d`` contiguous idle us. A counting slot is idle when at
    most ``slot - idle_requirement`` of its us are busy; a busy slot triggers a
    fresh defer that begins at the slot end, keeping ``n_remaining``. A slot
    that completes the count while the channel is busy also re-defers.
    """
    td = defer_duration(params)
    slot = params.slot_t_sl
    tolerance = slot - params.idle_requirement

    def close_slot(last_busy: bool):
        ok = state.busy_in_slot <= tolerance
        state.slot_pos = 0
        state.busy_in_slot = 0
        if not ok:
            state.restart_defer()
            return False
        state.n_remaining -= 1
        if state.n_remaining == 0:
            if last_busy:
                state.restart_defer()
                return False
            return True
        return False

    def idle(t, n):
        if state.phase is not LbtPhase.COUNTING:
            need = td - state.idle_run
            if n < need:
                state.idle_run += n
                return None
            t += need
            n -= need
            state.phase = LbtPhase.COUNTING
            state.idle_run = 0
            state.slot_pos = 0
            state.busy_in_slot = 0
            if state.n_remaining == 0:
                return t
        if state.slot_pos:
            take = min(n, slot - state.slot_pos)
            state.slot_pos += take
            t += take
            n -= take
            if state.slot_pos < slot:
                return None
            if close_slot(False):
                return t
            if state.phase is not LbtPhase.COUNTING:
                return idle(t, n) if n else None
        to_zero = state.n_remaining * slot
        if n >= to_zero:
            state.n_remaining = 0
            return t + to_zero
        state.n_remaining -= n // slot
        state.slot_pos = n % slot
        return None

    def busy(t, n):
        if state.phase is not LbtPhase.COUNTING:
            state.idle_run = 0
            return None
        while n > 0:
            take = min(n, slot - state.slot_pos)
            state.slot_pos += take
            state.busy_in_slot += take
            n -= take
            if state.slot_pos == slot:
                close_slot(True)
                if state.phase is not LbtPhase.COUNTING:
                    return None
        return None

    return walk(segments, t0, t1, idle, busy)


class Grant(NamedTuple):
    start: int
    max_duration: int


def lbt_cat4_acquire(state: LbtState, params: LbtParams, channel, clock: SimClock, rng: RngStream) -> Grant:
    """Earliest Cat-4 grant given the recorded channel (idle after the last record).

    Draws N into ``state`` if none is pending; sensing progress is computed on
    a copy so ``state`` keeps its pre-grant phase.
    """
    if state.n_remaining is None:
        draw_backoff(state, rng)
    probe = copy.copy(state)
    if probe.phase is LbtPhase.COUNTING and probe.n_remaining == 0:
        return Grant(clock.now, params.t_mcot_p)
    t = lbt_sense(probe, params, channel.busy_segments(clock.now), clock.now, None)
    return Grant(t, params.t_mcot_p)


@dataclass(frozen=True)
class DrsConfig:
    sense_duration: int = 25
    max_drs_duration: int = 1000
    dmtc_window: int = 6000
    dmtc_periodicity: int = 40_000

    def __post_init__(self):
        if not 0 < self.max_drs_duration <= 1000:
            raise ConfigError("max_drs_duration", "must be within (0, 1000] us")
        if self.dmtc_periodicity not in DMTC_PERIODICITIES:
            raise ConfigError("dmtc_periodicity", f"must be one of {DMTC_PERIODICITIES} us")
        if not 0 < self.dmtc_window <= 10_000:
            raise ConfigError("dmtc_window", "must be within (0, 10 ms]")
        if self.sense_duration <= 0:
            raise ConfigError("sense_duration", "must be positive")


def drs_acquire(cfg: DrsConfig, channel, t: int, in_window: bool = True) -> Optional[Grant]:
    """One-shot DRS attempt: grant iff ``[t, t + sense_duration)`` is entirely idle."""
    if not in_window:
        return None
    if channel.busy_time(t, t + cfg.sense_duration) > 0:
        return None
    return Grant(t + cfg.sense_duration, cfg.max_drs_duration)


@dataclass(frozen=True)
class EnergyThresholdInputs:
    t_a: float = 10.0
    p_tx: float = 23.0
    x_r: Optional[float] = None
    bandwidth: float = 20.0

    def __post_init__(self):
        if self.t_a not in (5, 10):
            raise ValueError("t_a must be 10 dB (PDSCH) or 5 dB (DRS)")


def energy_threshold_absent_others(inputs: EnergyThresholdInputs) -> float:
    """ED threshold (dBm) where no other technology shares the channel long-term."""
    if inputs.bandwidth != 20:
        raise ValueError("threshold formula is defined for 20 MHz only")
    if inputs.x_r is None:
        return -52.0
    return min(-52.0, inputs.x_r)


def energy_threshold_shared(inputs: EnergyThresholdInputs) -> float:
    """ED threshold (dBm) when other technologies may share the channel."""
    if inputs.bandwidth != 20:
        raise ValueError("threshold formula is defined for 20 MHz only")
    return max(-72.0, min(-62.0, -62.0 - inputs.t_a + (23.0 - inputs.p_tx)))


class LaaNode(Node):
    """LAA (or MulteFire, which shares the same access rules) eNodeB with full-buffer PDSCH."""

    technology = "laa"

    def __init__(self, index, name, ctx, rng, params: LbtParams, drs: Optional[DrsConfig] = None,
                 dfs: bool = True, threshold_dbm: float = -72.0):
        super().__init__(index, name, ctx, rng, dfs)
        self.params = params
        self.drs = drs
        self.threshold_dbm = threshold_dbm
        self.state = LbtState.initial(params, rng)
        self.t = 0
        self.ready_at: Optional[int] = None
        self.rec_idx = -1
        self.tx_kind = None  # RecordKind of the burst on air
        self.until = 0
        # DRS bookkeeping
        self.drs_pending = False
        self.drs_sensing = False
        self.drs_idle = 0
        self.window_close = 0
        self.next_window = 0 if drs is not None else None

    def senses(self) -> bool:
        return self.state.phase in (LbtPhase.INITIAL_DEFER, LbtPhase.COUNTING, LbtPhase.EXTRA_DEFER)

    def _drs_sense(self, segments, t0, t1):
        need = self.drs.sense_duration

        def idle(t, n):
            if n >= need - self.drs_idle:
                r = t + need - self.drs_idle
                self.drs_idle = need
                return r
            self.drs_idle += n
            return None

        def busy(t, n):
            self.drs_idle = 0
            return None

        return walk(segments, t0, t1, idle, busy)

    def sync(self, t: int) -> None:
        if not self.senses() or t <= self.t or self.ready_at is not None:
            self.t = max(self.t, t)
            return
        segs = self._segments(self.t, t)
        if self.drs_sensing:
            r = self._drs_sense(segs, self.t, t)
        else:
            r = lbt_sense(self.state, self.params, segs, self.t, t)
        if r is not None:
            assert r == t, f"{self.name}: missed start at {r} (synced to {t})"
            self.ready_at = r
        self.t = t

    def next_event(self):
        cands = []
        ph = self.state.phase
        if self.next_window is not None:
            cands.append((self.next_window, EventKind.DRS_WINDOW_OPEN))
        if self.drs_pending:
            cands.append((self.window_close, EventKind.DRS_WINDOW_CLOSE))
        if ph is LbtPhase.TRANSMITTING:
            cands.append((self.ctx.channel.records[self.rec_idx].end, EventKind.TX_END))
        elif ph is LbtPhase.VACATED:
            cands.append((self.until, EventKind.VACATE_END))
        elif self.ready_at is not None:
            cands.append((self.ready_at, EventKind.BACKOFF_EXPIRY))
        else:
            segs = self._segments(self.t)
            if self.drs_sensing:
                saved = self.drs_idle
                r = self._drs_sense(segs, self.t, None)
                self.drs_idle = saved
            else:
                r = lbt_sense(copy.copy(self.state), self.params, segs, self.t, None)
            cands.append((r, EventKind.BACKOFF_EXPIRY))
        return min(cands)

    def _resume_cat4(self, t):
        self.drs_sensing = False
        self.state.restart_defer()
        self.t = t
        self.ready_at = None

    def _start_drs_sensing(self, t):
        self.drs_sensing = True
        self.drs_idle = 0
        self.state.restart_defer()
        self.t = t
        self.ready_at = None

    def handle(self, t: int) -> bool:
        self.sync(t)
        ch = self.ctx.channel
        st = self.state
        if st.phase is LbtPhase.TRANSMITTING and ch.records[self.rec_idx].end == t:
            if self.tx_kind is RecordKind.DATA:
                cw_escalate(st, self.params, ch.collided(self.rec_idx))
                draw_backoff(st, self.rng)
            st.restart_defer()
            self.t = t
            self.ready_at = None
            if self.drs_pending and t < self.window_close:
                self._start_drs_sensing(t)
        if st.phase is LbtPhase.VACATED and t == self.until:
            st.restart_defer()
            self.t = t
            self.ready_at = None
        if self.next_window == t:
            self.next_window = t + self.drs.dmtc_periodicity
            if st.phase is not LbtPhase.VACATED:
                self.drs_pending = True
                self.window_close = t + self.drs.dmtc_window
                if self.senses():
                    self._start_drs_sensing(t)
        if self.drs_pending and t == self.window_close:
            self.drs_pending = False
            if self.drs_sensing:
                self._resume_cat4(t)
        if self.ready_at == t:
            self.ready_at = None
            if self.ctx.preempted(self.index, t):
                if self.drs_sensing:
                    self.drs_idle = 0
                else:
                    st.restart_defer()
                return False
            if self.drs_sensing:
                rec = TransmissionRecord(self.name, t, t + self.drs.max_drs_duration, RecordKind.DISCOVERY)
                self.drs_pending = False
                self.drs_sensing = False
            else:
                rec = TransmissionRecord(self.name, t, t + self.params.t_mcot_p, RecordKind.DATA)
            self.rec_idx = ch.add(rec, self.index)
            self.tx_kind = rec.kind
            st.phase = LbtPhase.TRANSMITTING
            return True
        return False

    def vacate(self, t: int, until: int) -> bool:
        self.sync(t)
        st = self.state
        changed = False
        if st.phase is LbtPhase.TRANSMITTING:
            self.ctx.channel.truncate(self.rec_idx, t)
            changed = True
            if self.tx_kind is RecordKind.DATA:
                draw_backoff(st, self.rng)
        self.drs_pending = False
        self.drs_sensing = False
        self.ready_at = None
        st.phase = LbtPhase.VACATED
        st.idle_run = 0
        st.slot_pos = 0
        st.busy_in_slot = 0
        self.until = until
        self.t = t
        return changed
