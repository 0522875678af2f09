"""End-to-end acceptance checks. Each test prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``. The coexistence
reproduction runs 3 scenarios x 20 replicas x 100 s and takes a few minutes
on a single core.
"""

import random
import time
from dataclasses import replace

import numpy as np
import pytest

from coexsim.cli import run_replicas
from coexsim.engine import run
from coexsim.laa import EnergyThresholdInputs, energy_threshold_absent_others, energy_threshold_shared
from coexsim.metrics import aggregate, airtime_breakdown
from coexsim.regdb import BANDS, REGIONS, load_regdb
from coexsim.scenario import OperatorConfig, ScenarioConfig, load_scenario
from coexsim.wifi import EdcaParams
from oracle_stepped import run_stepped
from randscen import random_scenario
from test_oracle import engine_records, oracle_records

SCENARIOS = ("three_wifi", "two_wifi_one_laa", "two_wifi_one_lteu")
TTTO_TARGET = {"three_wifi": 0.3301, "two_wifi_one_laa": 0.36728, "two_wifi_one_lteu": 0.3095}
TTTO_TOL = 0.02
SINGLE_WIFI_TOL = 0.005
RUNTIME_LIMIT_S = 10.0


def verdict(capsys, label, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} {label}: {detail}")
    assert ok, f"{label}: {detail}"


@pytest.fixture(scope="module")
def reproduction():
    out = {}
    for name in SCENARIOS:
        sc = load_scenario(name)
        seeds = sc.seeds()
        t0 = time.perf_counter()
        first = run_replicas(sc, seeds[:1])
        single = time.perf_counter() - t0
        reports = first + run_replicas(sc, seeds[1:])
        out[name] = {"scenario": sc, "reports": reports, "summary": aggregate(reports), "single_s": single}
    return out


def wifi_ids(sc):
    return [op.id for op in sc.operators if op.technology == "wifi"]


def wifi_mean(report, ids):
    return sum(report.per_operator[i] for i in ids) / len(ids)


@pytest.mark.parametrize("name,label", [
    ("three_wifi", "1a three Wi-Fi"),
    ("two_wifi_one_laa", "1b two Wi-Fi + LAA"),
    ("two_wifi_one_lteu", "1c two Wi-Fi + LTE-U"),
])
def test_c1_ttto_reproduction(reproduction, capsys, name, label):
    r = reproduction[name]
    target = TTTO_TARGET[name]
    means = {i: r["summary"].mean[i] for i in wifi_ids(r["scenario"])}
    ok = all(abs(m - target) <= TTTO_TOL for m in means.values())
    shown = ", ".join(f"{i}={m:.4%}" for i, m in means.items())
    verdict(capsys, f"criterion {label}", ok, f"{shown} vs {target:.3%} +/- {TTTO_TOL * 100:.1f} pp")


def test_c2_neighbour_ordering(reproduction, capsys):
    per = {n: [wifi_mean(rep, wifi_ids(reproduction[n]["scenario"])) for rep in reproduction[n]["reports"]]
           for n in SCENARIOS}
    hits = sum(laa > wifi > lteu for laa, wifi, lteu in
               zip(per["two_wifi_one_laa"], per["three_wifi"], per["two_wifi_one_lteu"]))
    means = {n: float(np.mean(v)) for n, v in per.items()}
    mean_ok = means["two_wifi_one_laa"] > means["three_wifi"] > means["two_wifi_one_lteu"]
    ok = hits >= 19 and mean_ok
    verdict(capsys, "criterion 2 ordering LAA > Wi-Fi > LTE-U", ok,
            f"{hits}/20 seeds; means {means['two_wifi_one_laa']:.4%} > {means['three_wifi']:.4%} "
            f"> {means['two_wifi_one_lteu']:.4%}")


def test_c3_multefire_identical(capsys):
    sc = replace(load_scenario("two_wifi_one_laa"), horizon=10_000_000)
    mf = replace(sc, operators=sc.operators[:2] + (replace(sc.operators[2], technology="multefire"),))
    same = [run(sc, s).to_json() == run(mf, s).to_json() for s in (1, 2, 3)]
    verdict(capsys, "criterion 3 MulteFire trace identity", all(same), f"{sum(same)}/3 seeds bit-identical over 10 s")


def test_c4_threshold_formulas(capsys):
    bad = 0
    n = 0
    for p_tx in range(10, 34):
        for t_a in (5, 10):
            for x_r in (None, -50.0, -60.0, -80.0):
                inp = EnergyThresholdInputs(t_a=t_a, p_tx=float(p_tx), x_r=x_r)
                absent = -52.0 if x_r is None else min(-52.0, x_r)
                shared = max(-72.0, min(-62.0, -62.0 - t_a + (23.0 - p_tx)))
                n += 1
                bad += energy_threshold_absent_others(inp) != absent or energy_threshold_shared(inp) != shared
    verdict(capsys, "criterion 4 energy thresholds", bad == 0, f"{n - bad}/{n} grid points exact")


def test_c5_oracle_equivalence(capsys):
    cases = [(replace(load_scenario(n), horizon=1_000_000), 1) for n in SCENARIOS]
    rng = random.Random(20_240)
    cases += [(random_scenario(rng, 100_000), rng.randint(1, 10**6)) for _ in range(30)]
    same = sum(engine_records(sc, s) == oracle_records(sc, s) for sc, s in cases)
    verdict(capsys, "criterion 5 oracle equivalence", same == len(cases),
            f"{same}/{len(cases)} traces identical to 1 us stepping (3 bundled at 1 s, 30 random at 100 ms)")


def test_c6_conservation(capsys):
    rng = random.Random(66)
    bad = 0
    for _ in range(100):
        sc = random_scenario(rng, rng.choice([50_000, 200_000]))
        tr = run(sc, rng.randint(1, 10**6))
        clean, collided, idle = airtime_breakdown(tr)
        count = np.zeros(tr.horizon, dtype=np.int32)
        for r in tr.records:
            count[r.start:r.end] += 1
        mask_ok = idle == int((count == 0).sum())
        bad += clean + collided + idle != tr.horizon or not mask_ok
    verdict(capsys, "criterion 6 airtime conservation", bad == 0,
            f"{100 - bad}/100 random scenarios: clean + collided + idle == horizon")


def test_c7_single_wifi_renewal(capsys):
    p = EdcaParams()
    exchange = p.data_tx + p.sifs + p.ack_tx
    expected = exchange / (p.difs + (p.cw_min / 2) * p.slot + exchange)
    sc = ScenarioConfig(horizon=10_000_000, operators=(OperatorConfig("wifi", "wifi", p),))
    mean = aggregate(run_replicas(sc, list(range(1, 21)))).mean["wifi"]
    verdict(capsys, "criterion 7 single Wi-Fi renewal value", abs(mean - expected) <= SINGLE_WIFI_TOL,
            f"{mean:.4%} vs closed form {expected:.4%} +/- {SINGLE_WIFI_TOL * 100:.1f} pp")


def test_c8_regulatory_completeness(capsys):
    db = load_regdb()
    cells = {(r.region, r.band) for r in db.rules}
    complete = len(db.rules) == 36 and cells == {(g, b) for g in REGIONS for b in BANDS}
    notes = set(db.footnotes) == {1, 2}
    usa = db.lookup("USA", 5200)
    eu = db.lookup("Europe", 5500)
    ca = db.lookup("Canada", 5625)
    eu_low = db.lookup("Europe", 5200)
    usa_2a = db.lookup("USA", 5300)
    spots = [
        (usa.usage, usa.max_power_dbm, usa.max_psd_dbm_mhz, usa.tpc, usa.dfs, usa.lbt, usa.indoor)
        == ("U-NII-1", 30.0, 17.0, False, False, False, "indoor/outdoor"),
        (eu.power_basis, eu.max_power_dbm, eu.max_psd_dbm_mhz, eu.tpc, eu.dfs, eu.lbt, eu.indoor)
        == ("eirp", 30.0, 17.0, True, True, True, "indoor/outdoor"),
        ca.is_forbidden and "RLAN is forbidden in the frequency range 5600-5650 MHz" in ca.notes,
        (eu_low.max_power_dbm, eu_low.lbt, eu_low.indoor) == (23.0, True, "indoor"),
        (usa_2a.usage, usa_2a.tpc, usa_2a.dfs, usa_2a.lbt) == ("U-NII-2A", True, True, False),
    ]
    ok = complete and notes and all(spots)
    verdict(capsys, "criterion 8 regulatory completeness", ok,
            f"{len(db.rules)} cells, footnotes {sorted(db.footnotes)}, {sum(spots)}/5 spot checks")


def test_c9_runtime(reproduction, capsys):
    times = {n: reproduction[n]["single_s"] for n in SCENARIOS}
    ok = all(t < RUNTIME_LIMIT_S for t in times.values())
    verdict(capsys, "criterion 9 runtime", ok,
            ", ".join(f"{n} {t:.2f} s" for n, t in times.items()) + f" per 100 s replica (limit {RUNTIME_LIMIT_S:.0f} s)")
