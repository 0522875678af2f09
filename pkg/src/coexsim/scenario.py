"""Scenario files: TOML with explicit unit suffixes, normalised to integer microseconds."""

from __future__ import annotations

import re
import sys
from dataclasses import asdict, dataclass, field, fields
from decimal import Decimal, InvalidOperation
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .channel import RadarConfig, SensingAssumption
from .kernel import ConfigError
from .laa import DrsConfig, LbtParams, load_priority_classes
from .lteu import CsatParams, LdsConfig
from .wifi import EdcaParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TECHNOLOGIES = ("wifi", "laa", "multefire", "lteu")
CONTENTION_MODES = ("arbitrated", "collide")

_UNIT_US = {
    "us": Decimal(1),
    "μs": Decimal(1),
    "µs": Decimal(1),
    "ms": Decimal(1000),
    "s": Decimal(1_000_000),
    "min": Decimal(60_000_000),
}
_DURATION_RE = re.compile(r"^\s*([0-9]+(?:\.[0-9]+)?)\s*([a-zμµ]+)\s*$")


def parse_duration(value, where: str = "duration") -> int:
    """``"5.484ms"`` -> 5484. Bare numbers are rejected: units must be explicit."""
    if isinstance(value, bool) or not isinstance(value, str):
        raise ConfigError(where, f"expected a duration string with units (e.g. \"34us\"), got {value!r}")
    m = _DURATION_RE.match(value)
    if not m or m.group(2) not in _UNIT_US:
        raise ConfigError(where, f"cannot parse duration {value!r}; units are us, ms, s, min")
    try:
        us = Decimal(m.group(1)) * _UNIT_US[m.group(2)]
    except InvalidOperation as exc:
        raise ConfigError(where, f"bad number in {value!r}") from exc
    if us != us.to_integral_value():
        raise ConfigError(where, f"{value!r} is not a whole number of microseconds")
    return int(us)


def format_duration(us: int) -> str:
    if us % 1_000_000 == 0 and us:
        return f"{us // 1_000_000}s"
    if us % 1000 == 0 and us:
        return f"{us // 1000}ms"
    return f"{us}us"


@dataclass(frozen=True)
class OperatorConfig:
    id: str
    technology: str
    params: Union[EdcaParams, LbtParams, CsatParams]
    mode: str = "csat"  # LTE-U only
    lds: Optional[LdsConfig] = None
    dfs: bool = True

    def to_dict(self) -> dict:
        d = {"id": self.id, "technology": self.technology, "dfs": self.dfs, "params": asdict(self.params)}
        if self.technology == "lteu":
            d["mode"] = self.mode
            if self.lds is not None:
                d["lds"] = asdict(self.lds)
        return d


@dataclass(frozen=True)
class ScenarioConfig:
    horizon: int
    operators: tuple[OperatorConfig, ...]
    name: str = "scenario"
    traffic: str = "full-buffer"
    radar: Optional[RadarConfig] = None
    drs: Optional[DrsConfig] = None
    replicas: int = 20
    base_seed: int = 1
    contention: str = "arbitrated"
    sensing: SensingAssumption = field(default_factory=SensingAssumption)

    def validate(self) -> "ScenarioConfig":
        if self.horizon <= 0:
            raise ConfigError("horizon", "must be positive")
        if not self.operators:
            raise ConfigError("operator", "at least one operator is required")
        ids = [op.id for op in self.operators]
        if len(set(ids)) != len(ids):
            raise ConfigError("operator.id", f"duplicate operator ids in {ids}")
        for i, op in enumerate(self.operators):
            if op.technology not in TECHNOLOGIES:
                raise ConfigError(f"operator[{i}].technology", f"unknown technology {op.technology!r}")
            expected = {"wifi": EdcaParams, "laa": LbtParams, "multefire": LbtParams, "lteu": CsatParams}
            if not isinstance(op.params, expected[op.technology]):
                raise ConfigError(f"operator[{i}].params", f"{op.technology} needs {expected[op.technology].__name__}")
        if self.traffic != "full-buffer":
            raise ConfigError("traffic", "only the full-buffer traffic model is supported")
        if self.replicas < 1:
            raise ConfigError("replicas", "must be at least 1")
        if self.contention not in CONTENTION_MODES:
            raise ConfigError("contention", f"must be one of {CONTENTION_MODES}")
        if not self.sensing.mutual_detectability and self.sensing.received_power is None:
            raise ConfigError("sensing.received_power", "required when mutual_detectability is false")
        return self

    def seeds(self) -> list[int]:
        return [self.base_seed + k for k in range(self.replicas)]

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "horizon_us": self.horizon,
            "traffic": self.traffic,
            "contention": self.contention,
            "replicas": self.replicas,
            "base_seed": self.base_seed,
            "operators": [op.to_dict() for op in self.operators],
            "features": {
                "drs": asdict(self.drs) if self.drs else None,
                "radar": (
                    {"pulse_times_us": list(self.radar.pulse_times), "non_occupancy_us": self.radar.non_occupancy}
                    if self.radar
                    else None
                ),
            },
            "sensing": {
                "mutual_detectability": self.sensing.mutual_detectability,
                "received_power": self.sensing.received_power,
            },
        }
        return d


def _build(cls, table: dict, where: str, durations: set, renames: Optional[dict] = None, base=None):
    renames = renames or {}
    known = {f.name for f in fields(cls)}
    kwargs = {} if base is None else asdict(base)
    for key, value in table.items():
        name = renames.get(key, key)
        if name not in known:
            raise ConfigError(f"{where}.{key}", f"unknown parameter for {cls.__name__}")
        if name in durations:
            value = parse_duration(value, f"{where}.{key}")
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{where}.{exc.field}", str(exc).split(": ", 1)[-1]) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(where, str(exc)) from exc


_EDCA_DUR = {"sifs", "difs", "slot", "data_tx", "ack_tx"}
_LBT_DUR = {"t_mcot_p", "slot_t_sl", "t_f", "idle_requirement"}
_CSAT_DUR = {"on_period", "off_period", "min_off", "max_off", "min_on_with_data", "min_on_without_data",
             "max_on", "sensing_window"}
_LDS_DUR = {"periodicity", "duration"}
_DRS_DUR = {"sense_duration", "max_drs_duration", "dmtc_window", "dmtc_periodicity"}


def _operator(i: int, raw: dict, classes: dict) -> OperatorConfig:
    where = f"operator[{i}]"
    if "id" not in raw:
        raise ConfigError(f"{where}.id", "missing")
    tech = raw.get("technology")
    if tech not in TECHNOLOGIES:
        raise ConfigError(f"{where}.technology", f"must be one of {TECHNOLOGIES}, got {tech!r}")
    allowed = {"id", "technology", "dfs", "edca", "lbt", "priority_class", "csat", "mode", "lds"}
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"{where}.{key}", "unknown key")
    dfs = bool(raw.get("dfs", True))
    if tech == "wifi":
        params = _build(EdcaParams, raw.get("edca", {}), f"{where}.edca", _EDCA_DUR)
        return OperatorConfig(raw["id"], tech, params, dfs=dfs)
    if tech in ("laa", "multefire"):
        pc = int(raw.get("priority_class", 2))
        if pc not in classes:
            raise ConfigError(f"{where}.priority_class", f"no defaults for class {pc}")
        lbt = dict(raw.get("lbt", {}))
        lbt.setdefault("priority_class", pc)
        params = _build(LbtParams, lbt, f"{where}.lbt", _LBT_DUR,
                        renames={"t_mcot": "t_mcot_p", "slot": "slot_t_sl"}, base=classes[pc])
        return OperatorConfig(raw["id"], tech, params, dfs=dfs)
    params = _build(CsatParams, raw.get("csat", {}), f"{where}.csat", _CSAT_DUR)
    mode = raw.get("mode", "csat")
    if mode not in ("csat", "adaptive", "lds"):
        raise ConfigError(f"{where}.mode", f"unknown LTE-U mode {mode!r}")
    lds = _build(LdsConfig, raw["lds"], f"{where}.lds", _LDS_DUR) if "lds" in raw else None
    return OperatorConfig(raw["id"], tech, params, mode=mode, lds=lds, dfs=dfs)


def scenario_from_dict(data: dict, priority_classes=None) -> ScenarioConfig:
    classes = priority_classes or load_priority_classes()
    allowed = {"name", "horizon", "traffic", "replicas", "base_seed", "contention", "features", "operator", "sensing"}
    for key in data:
        if key not in allowed:
            raise ConfigError(key, "unknown top-level key")
    if "horizon" not in data:
        raise ConfigError("horizon", "missing")
    horizon = parse_duration(data["horizon"], "horizon")
    ops = tuple(_operator(i, raw, classes) for i, raw in enumerate(data.get("operator", [])))
    feats = data.get("features", {})
    drs = None
    drs_raw = feats.get("drs", False)
    if isinstance(drs_raw, dict):
        drs_raw = dict(drs_raw)
        if drs_raw.pop("enabled", True):
            drs = _build(DrsConfig, drs_raw, "features.drs", _DRS_DUR)
    elif drs_raw:
        drs = DrsConfig()
    radar = None
    if "radar" in feats:
        r = feats["radar"]
        try:
            radar = RadarConfig(
                pulse_times=tuple(parse_duration(p, f"features.radar.pulse_times[{k}]")
                                  for k, p in enumerate(r.get("pulse_times", []))),
                non_occupancy=parse_duration(r.get("non_occupancy", "30min"), "features.radar.non_occupancy"),
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("features.radar", str(exc)) from exc
    sens = data.get("sensing", {})
    sensing = SensingAssumption(
        mutual_detectability=bool(sens.get("mutual_detectability", True)),
        received_power=sens.get("received_power"),
    )
    return ScenarioConfig(
        horizon=horizon,
        operators=ops,
        name=str(data.get("name", "scenario")),
        traffic=data.get("traffic", "full-buffer"),
        radar=radar,
        drs=drs,
        replicas=int(data.get("replicas", 20)),
        base_seed=int(data.get("base_seed", 1)),
        contention=data.get("contention", "arbitrated"),
        sensing=sensing,
    ).validate()


def loads_scenario(text: str) -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("toml", str(exc)) from exc
    return scenario_from_dict(data)


def bundled_scenarios() -> list[str]:
    root = resources.files("coexsim").joinpath("data/scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load_scenario(ref: Union[str, Path]) -> ScenarioConfig:
    """Load a scenario from a path, or by bundled name such as ``three_wifi``."""
    path = Path(ref)
    if path.is_file():
        return loads_scenario(path.read_text(encoding="utf-8"))
    name = str(ref)
    if name in bundled_scenarios():
        text = resources.files("coexsim").joinpath(f"data/scenarios/{name}.toml").read_text(encoding="utf-8")
        return loads_scenario(text)
    raise FileNotFoundError(f"no scenario file or bundled scenario named {ref!r}")
