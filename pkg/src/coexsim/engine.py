"""Event-driven run loop.

Nodes are advanced lazily: between channel changes the future channel is
fully known (records carry their end times), so each sensing node can
compute the exact microsecond at which its countdown would finish.
Whenever a record starts or is cut short, every sensing node is re-planned.
Simultaneous events run in (time, node index, kind) order.
"""

from __future__ import annotations

import heapq
from dataclasses import replace

from .channel import Channel
from .kernel import EventKind, RngStream, SimContext, SimTrace
from .laa import LaaNode, EnergyThresholdInputs, energy_threshold_shared
from .lteu import LteuNode
from .scenario import ScenarioConfig
from .wifi import WifiNode

WIFI_ED_THRESHOLD_DBM = -62.0


def _thresholds(scenario: ScenarioConfig) -> list[float]:
    out = []
    for op in scenario.operators:
        if op.technology == "wifi":
            out.append(WIFI_ED_THRESHOLD_DBM)
        elif op.technology in ("laa", "multefire"):
            out.append(energy_threshold_shared(EnergyThresholdInputs(t_a=10)))
        else:
            out.append(op.params.detection_threshold)
    return out


def build_nodes(scenario: ScenarioConfig, seed: int, channel: Channel):
    names = [op.id for op in scenario.operators]
    detect = None
    if not scenario.sensing.mutual_detectability:
        thresholds = _thresholds(scenario)
        sensing = scenario.sensing

        def detect(observer: int, owner: str) -> bool:
            return sensing.detects(names[observer], owner, thresholds[observer])

    ctx = SimContext(channel, scenario.horizon, names, scenario.contention == "arbitrated", detect)
    nodes = []
    for i, op in enumerate(scenario.operators):
        rng = RngStream(seed, op.id)
        if op.technology == "wifi":
            nodes.append(WifiNode(i, op.id, ctx, rng, op.params, dfs=op.dfs))
        elif op.technology in ("laa", "multefire"):
            nodes.append(LaaNode(i, op.id, ctx, rng, op.params, drs=scenario.drs, dfs=op.dfs))
        else:
            nodes.append(LteuNode(i, op.id, ctx, rng, op.params, mode=op.mode, lds=op.lds, dfs=op.dfs))
    return ctx, nodes


def run(scenario: ScenarioConfig, seed: int) -> SimTrace:
    """Simulate ``[0, horizon)`` and return the collision-annotated trace."""
    scenario.validate()
    horizon = scenario.horizon
    channel = Channel()
    _, nodes = build_nodes(scenario, seed, channel)
    heap: list = []

    def plan(node):
        node.version += 1
        t, kind = node.next_event()
        if t < horizon:
            heapq.heappush(heap, (t, node.index, int(kind), node.version))

    for node in nodes:
        plan(node)
    if scenario.radar is not None:
        for p in scenario.radar.pulse_times:
            if p < horizon:
                heapq.heappush(heap, (p, -1, int(EventKind.RADAR_PULSE), 0))

    while heap:
        t, idx, _kind, version = heapq.heappop(heap)
        if idx < 0:
            until = t + scenario.radar.non_occupancy
            for node in nodes:
                if node.dfs:
                    node.vacate(t, until)
            for node in nodes:
                plan(node)
            continue
        node = nodes[idx]
        if version != node.version:
            continue
        changed = node.handle(t)
        plan(node)
        if changed:
            for other in nodes:
                if other is not node and other.senses():
                    plan(other)

    records = []
    for rec in channel.annotated():
        if rec.end > horizon:
            rec = replace(rec, end=horizon, truncated=True)
        records.append(rec)
    return SimTrace(horizon=horizon, seed=seed, operators=tuple(n.name for n in nodes), records=tuple(records))
