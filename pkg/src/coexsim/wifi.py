"""Wi-Fi EDCA (CSMA/CA) contention for one saturated operator."""

from __future__ import annotations

import copy
import enum
from dataclasses import dataclass
from typing import Optional

from .channel import RecordKind, TransmissionRecord
from .kernel import ConfigError, Event, EventKind, Node, RngStream, SimClock, draw_uniform_int, walk


@dataclass(frozen=True)
class EdcaParams:
    """Access-category timing. Defaults are the Video AC used for the coexistence runs."""

    cw_min: int = 7
    cw_max: int = 15
    aifsn: int = 2
    sifs: int = 16
    difs: int = 34
    slot: int = 9
    data_tx: int = 5484
    ack_tx: int = 34
    access_category: str = "Video"

    def __post_init__(self):
        for name in ("sifs", "difs", "slot", "data_tx", "ack_tx"):
            if getattr(self, name) <= 0:
                raise ConfigError(name, "must be positive")
        if self.cw_min < 0 or self.cw_min > self.cw_max:
            raise ConfigError("cw_min", f"need 0 <= cw_min <= cw_max, got {self.cw_min}/{self.cw_max}")
        if self.difs != self.sifs + self.aifsn * self.slot:
            raise ConfigError(
                "difs",
                f"{self.difs} us inconsistent with sifs + aifsn*slot = {self.sifs + self.aifsn * self.slot} us",
            )

    @property
    def exchange(self) -> int:
        """Airtime of one successful data + SIFS + ACK exchange."""
        return self.data_tx + self.sifs + self.ack_tx


class EdcaPhase(str, enum.Enum):
    DEFERRING = "deferring"
    BACKING_OFF = "backing-off"
    TRANSMITTING = "transmitting"
    AWAITING_ACK = "awaiting-ack"
    VACATED = "vacated"


@dataclass
class EdcaState:
    cw_current: int
    backoff_counter: int = 0
    phase: EdcaPhase = EdcaPhase.DEFERRING
    idle_run: int = 0  # consecutive idle us seen while deferring
    slot_pos: int = 0  # us into the current backoff slot

    @classmethod
    def initial(cls, params: EdcaParams, rng: RngStream) -> "EdcaState":
        st = cls(cw_current=params.cw_min)
        edca_draw_backoff(st, rng)
        return st


def edca_draw_backoff(state: EdcaState, rng: RngStream) -> int:
    state.backoff_counter = draw_uniform_int(rng, 0, state.cw_current)
    return state.backoff_counter


def edca_on_outcome(state: EdcaState, params: EdcaParams, collided: bool, rng: RngStream) -> EdcaState:
    """Binary exponential backoff: double on failure (capped), reset on success, redraw."""
    if collided:
        state.cw_current = min(2 * (state.cw_current + 1) - 1, params.cw_max)
    else:
        state.cw_current = params.cw_min
    edca_draw_backoff(state, rng)
    state.phase = EdcaPhase.DEFERRING
    state.idle_run = 0
    state.slot_pos = 0
    return state


def edca_sense(state: EdcaState, params: EdcaParams, segments, t0: int, t1: Optional[int]) -> Optional[int]:
    """Advance a deferring/backing-off state over ``[t0, t1)``; return the tx-start time if reached.

    DIFS needs ``difs`` consecutive idle us; each fully idle slot after it
    decrements the counter; any busy us voids the slot and restarts DIFS.
    """
    difs, slot = params.difs, params.slot

    def idle(t, n):
        if state.phase is EdcaPhase.DEFERRING:
            need = difs - state.idle_run
            if n < need:
                state.idle_run += n
                return None
            t += need
            n -= need
            state.phase = EdcaPhase.BACKING_OFF
            state.idle_run = 0
            state.slot_pos = 0
            if state.backoff_counter == 0:
                return t
        to_zero = state.backoff_counter * slot - state.slot_pos
        if n >= to_zero:
            state.backoff_counter = 0
            state.slot_pos = 0
            return t + to_zero
        total = state.slot_pos + n
        state.backoff_counter -= total // slot
        state.slot_pos = total % slot
        return None

    def busy(t, n):
        state.phase = EdcaPhase.DEFERRING
        state.idle_run = 0
        state.slot_pos = 0
        return None

    return walk(segments, t0, t1, idle, busy)


def edca_step(state: EdcaState, params: EdcaParams, channel, clock: SimClock, node_id: int = 0) -> Event:
    """Next tx-start event assuming the channel carries only what is already recorded."""
    if state.phase not in (EdcaPhase.DEFERRING, EdcaPhase.BACKING_OFF):
        raise ValueError(f"edca_step needs a contending node, phase is {state.phase.value}")
    probe = copy.copy(state)
    if probe.phase is EdcaPhase.BACKING_OFF and probe.backoff_counter == 0 and probe.slot_pos == 0:
        return Event(clock.now, node_id, EventKind.TX_START)
    t = edca_sense(probe, params, channel.busy_segments(clock.now), clock.now, None)
    return Event(t, node_id, EventKind.TX_START)


class WifiNode(Node):
    """Saturated EDCA station; its peer's SIFS + ACK is booked as the same operator's airtime."""

    technology = "wifi"

    def __init__(self, index, name, ctx, rng, params: EdcaParams, dfs: bool = True):
        super().__init__(index, name, ctx, rng, dfs)
        self.params = params
        self.state = EdcaState.initial(params, rng)
        self.t = 0  # samples before t have been consumed
        self.ready_at: Optional[int] = None
        self.rec_idx = -1
        self.stage = None  # "data" | "ack" while transmitting
        self.until = 0  # end of ack wait / vacate

    def senses(self) -> bool:
        return self.state.phase in (EdcaPhase.DEFERRING, EdcaPhase.BACKING_OFF)

    def sync(self, t: int) -> None:
        if not self.senses() or t <= self.t or self.ready_at is not None:
            self.t = max(self.t, t)
            return
        r = edca_sense(self.state, self.params, self._segments(self.t, t), self.t, t)
        if r is not None:
            assert r == t, f"{self.name}: missed tx start at {r} (synced to {t})"
            self.ready_at = r
        self.t = t

    def next_event(self):
        ph = self.state.phase
        if ph is EdcaPhase.TRANSMITTING:
            return self.ctx.channel.records[self.rec_idx].end, EventKind.TX_END
        if ph is EdcaPhase.AWAITING_ACK:
            return self.until, EventKind.ACK_TIMEOUT
        if ph is EdcaPhase.VACATED:
            return self.until, EventKind.VACATE_END
        if self.ready_at is not None:
            return self.ready_at, EventKind.BACKOFF_EXPIRY
        probe = copy.copy(self.state)
        r = edca_sense(probe, self.params, self._segments(self.t), self.t, None)
        return r, EventKind.BACKOFF_EXPIRY

    def _restart_sensing(self, t):
        self.t = t
        self.ready_at = None

    def handle(self, t: int) -> bool:
        self.sync(t)
        ch = self.ctx.channel
        st = self.state
        if st.phase is EdcaPhase.TRANSMITTING and ch.records[self.rec_idx].end == t:
            if self.stage == "data":
                if ch.collided(self.rec_idx):
                    st.phase = EdcaPhase.AWAITING_ACK
                    self.until = t + self.params.sifs + self.params.ack_tx
                    return False
                rec = TransmissionRecord(self.name, t, t + self.params.sifs + self.params.ack_tx, RecordKind.ACK)
                self.rec_idx = ch.add(rec, self.index)
                self.stage = "ack"
                return True
            edca_on_outcome(st, self.params, ch.collided(self.rec_idx), self.rng)
            self.stage = None
            self._restart_sensing(t)
            return False
        if st.phase is EdcaPhase.AWAITING_ACK and t == self.until:
            edca_on_outcome(st, self.params, True, self.rng)
            self._restart_sensing(t)
            return False
        if st.phase is EdcaPhase.VACATED and t == self.until:
            st.phase = EdcaPhase.DEFERRING
            st.idle_run = 0
            st.slot_pos = 0
            self._restart_sensing(t)
            return False
        if self.ready_at == t:
            self.ready_at = None
            if self.ctx.preempted(self.index, t):
                st.phase = EdcaPhase.DEFERRING
                st.idle_run = 0
                st.slot_pos = 0
                return False
            rec = TransmissionRecord(self.name, t, t + self.params.data_tx, RecordKind.DATA)
            self.rec_idx = ch.add(rec, self.index)
            self.stage = "data"
            st.phase = EdcaPhase.TRANSMITTING
            return True
        return False

    def vacate(self, t: int, until: int) -> bool:
        self.sync(t)
        st = self.state
        changed = False
        if st.phase is EdcaPhase.TRANSMITTING:
            self.ctx.channel.truncate(self.rec_idx, t)
            changed = True
        if st.phase in (EdcaPhase.TRANSMITTING, EdcaPhase.AWAITING_ACK):
            # exchange abandoned: fresh draw at the current window, no escalation
            edca_draw_backoff(st, self.rng)
        self.stage = None
        self.ready_at = None
        st.phase = EdcaPhase.VACATED
        st.idle_run = 0
        st.slot_pos = 0
        self.until = until
        self.t = t
        return changed
