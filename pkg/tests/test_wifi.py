import random
from collections import Counter

import pytest

from coexsim.channel import Channel, RecordKind, TransmissionRecord
from coexsim.engine import run
from coexsim.kernel import ConfigError, EventKind, RngStream, SimClock
from coexsim.scenario import OperatorConfig, ScenarioConfig
from coexsim.wifi import EdcaParams, EdcaPhase, EdcaState, edca_draw_backoff, edca_on_outcome, edca_step

P = EdcaParams()


def test_defaults_match_video_category():
    assert (P.cw_min, P.cw_max, P.aifsn, P.sifs, P.difs, P.slot, P.data_tx, P.ack_tx) == (
        7, 15, 2, 16, 34, 9, 5484, 34)
    assert P.access_category == "Video"
    assert P.exchange == 5534


def test_params_validation():
    with pytest.raises(ConfigError) as ei:
        EdcaParams(difs=40)
    assert ei.value.field == "difs"
    with pytest.raises(ConfigError):
        EdcaParams(cw_min=31, cw_max=15)
    with pytest.raises(ConfigError):
        EdcaParams(data_tx=0)


def test_draw_within_cw():
    st = EdcaState(cw_current=7)
    rng = RngStream(1, "w")
    assert all(0 <= edca_draw_backoff(st, rng) <= 7 for _ in range(1000))


def test_draw_degenerate_cw():
    st = EdcaState(cw_current=0)
    assert edca_draw_backoff(st, RngStream(1, "w")) == 0


def test_draw_distribution():
    st = EdcaState(cw_current=7)
    rng = RngStream(11, "dist")
    n = 100_000
    c = Counter(edca_draw_backoff(st, rng) for _ in range(n))
    for v in range(8):
        assert abs(c[v] / n - 1 / 8) < 0.02 / 8


@pytest.mark.parametrize("cw,collided,expected", [(7, True, 15), (15, True, 15), (15, False, 7), (7, False, 7)])
def test_outcome_rule(cw, collided, expected):
    st = EdcaState(cw_current=cw, phase=EdcaPhase.TRANSMITTING)
    edca_on_outcome(st, P, collided, RngStream(1, "o"))
    assert st.cw_current == expected
    assert st.phase is EdcaPhase.DEFERRING
    assert 0 <= st.backoff_counter <= expected


def test_cw_values_follow_doubling():
    p = EdcaParams(cw_min=3, cw_max=100)
    st = EdcaState(cw_current=3)
    seen = []
    for _ in range(6):
        edca_on_outcome(st, p, True, RngStream(1, "c"))
        seen.append(st.cw_current)
    assert seen == [7, 15, 31, 63, 100, 100]


def step_at(counter, channel=None, now=0):
    st = EdcaState(cw_current=7, backoff_counter=counter)
    return edca_step(st, P, channel or Channel(), SimClock(10**9, now), 0)


def test_step_idle_backoff_zero():
    ev = step_at(0, now=100)
    assert (ev.time, ev.kind) == (134, EventKind.TX_START)


def test_step_idle_backoff_three():
    assert step_at(3, now=100).time == 100 + 34 + 27


def test_step_does_not_mutate_state():
    st = EdcaState(cw_current=7, backoff_counter=5)
    edca_step(st, P, Channel(), SimClock(10**6, 0))
    assert (st.backoff_counter, st.phase, st.idle_run) == (5, EdcaPhase.DEFERRING, 0)


def stepped_start(counter, busy):
    """Per-us countdown: DIFS idle, then one decrement per fully idle slot."""
    phase, idle, pos, t = "difs", 0, 0, 0
    while True:
        b = t in busy
        if phase == "difs":
            idle = 0 if b else idle + 1
            if idle == P.difs:
                phase, pos = "bo", 0
                if counter == 0:
                    return t + 1
        elif b:
            phase, idle, pos = "difs", 0, 0
        else:
            pos += 1
            if pos == P.slot:
                pos = 0
                counter -= 1
                if counter == 0:
                    return t + 1
        t += 1


def test_step_busy_interrupt_matches_stepping():
    r = random.Random(5)
    for _ in range(300):
        spans, t = [], r.randint(0, 60)
        for _ in range(r.randint(1, 4)):
            d = r.randint(1, 40)
            spans.append((t, t + d))
            t += d + r.randint(1, 80)
        ch = Channel()
        for k, (s, e) in enumerate(spans):
            ch.add(TransmissionRecord(f"x{k}", s, e, RecordKind.DATA))
        counter = r.randint(0, 15)
        busy = {u for s, e in spans for u in range(s, e)}
        assert step_at(counter, ch).time == stepped_start(counter, busy)


def test_step_rejects_non_contending_state():
    st = EdcaState(cw_current=7, phase=EdcaPhase.TRANSMITTING)
    with pytest.raises(ValueError):
        edca_step(st, P, Channel(), SimClock(10, 0))


def lone(horizon=20_000_000, seed=1):
    sc = ScenarioConfig(horizon=horizon, operators=(OperatorConfig("w", "wifi", P),))
    return run(sc, seed).records


def test_lone_node_gaps_and_blocks():
    recs = lone()
    assert recs[0].start in {34 + 9 * k for k in range(8)}
    pairs = list(zip(recs[::2], recs[1::2]))
    for data, ack in pairs:
        assert data.kind is RecordKind.DATA and ack.kind is RecordKind.ACK
        if not ack.truncated:
            assert (data.duration, ack.start, ack.duration) == (5484, data.end, 50)
    for prev_ack, nxt in zip(recs[1::2], recs[2::2]):
        gap = nxt.start - prev_ack.end
        assert gap - 34 in {9 * k for k in range(8)}


def test_collided_data_suppresses_ack(short):
    tr = run(short("three_wifi", 3_000_000, contention="collide"), 3)
    recs = tr.records
    collided_data = [r for r in recs if r.kind is RecordKind.DATA and r.collided and not r.truncated]
    assert collided_data, "expected at least one collision in 3 s of physical contention"
    for d in collided_data:
        assert not any(r.owner == d.owner and r.kind is RecordKind.ACK and r.start == d.end for r in recs)


def test_never_starts_on_busy_channel(short):
    # data starts never land on a microsecond already occupied by an earlier record
    for name in ("three_wifi", "two_wifi_one_laa"):
        recs = run(short(name, 3_000_000), 2).records
        for i, r in enumerate(recs):
            if r.kind is RecordKind.DATA and r.owner.startswith("wifi"):
                assert not any(o.start <= r.start < o.end for o in recs[:i] if o.owner != r.owner)
