"""5 GHz regulatory rules per region and sub-band, plus a device compliance checker."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Optional

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

REGIONS = ("Europe", "USA", "Canada", "Brazil", "China", "Japan")
BANDS = ((5150, 5250), (5250, 5350), (5350, 5470), (5470, 5725), (5725, 5850), (5850, 5925))
STATUSES = ("active", "under-consideration", "not-applicable")
INDOOR = ("indoor", "indoor/outdoor", "N/A")
FREQ_MIN, FREQ_MAX = BANDS[0][0], BANDS[-1][1]


class RangeError(ValueError):
    """Frequency outside the tabulated 5150-5925 MHz range."""


def to_dbm(value: float, unit: str) -> float:
    """Convert a power (or per-MHz density) to dBm (or dBm/MHz)."""
    if unit in ("dBm", "dBm/MHz"):
        return float(value)
    if unit in ("mW", "mW/MHz"):
        return 10.0 * math.log10(value)
    if unit == "W":
        return 10.0 * math.log10(value * 1000.0)
    if unit == "dBm/500kHz":
        return float(value) + 10.0 * math.log10(2.0)
    raise ValueError(f"unknown power unit {unit!r}")


@dataclass(frozen=True)
class RegRule:
    region: str
    band: tuple[int, int]
    usage: str
    status: str
    indoor: str
    power_limit: Optional[float] = None
    power_unit: Optional[str] = None
    power_basis: Optional[str] = None  # "tx" or "eirp"
    power_depends_on_bw: bool = False
    psd_limit: Optional[float] = None
    psd_unit: Optional[str] = None
    tpc: Optional[bool] = None
    dfs: Optional[bool] = None
    lbt: Optional[bool] = None
    dfs_exempt: Optional[tuple[int, int]] = None
    forbidden: tuple[tuple[int, int], ...] = ()
    footnotes: tuple[int, ...] = ()
    notes: str = ""
    is_forbidden: bool = False  # set on lookups that land in a forbidden sub-range

    def __post_init__(self):
        if self.region not in REGIONS:
            raise ValueError(f"unknown region {self.region!r}")
        if tuple(self.band) not in BANDS:
            raise ValueError(f"{self.band} is not one of the tabulated sub-bands")
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.indoor not in INDOOR:
            raise ValueError(f"unknown indoor marker {self.indoor!r}")

    @property
    def max_power_dbm(self) -> Optional[float]:
        return None if self.power_limit is None else to_dbm(self.power_limit, self.power_unit)

    @property
    def max_psd_dbm_mhz(self) -> Optional[float]:
        return None if self.psd_limit is None else to_dbm(self.psd_limit, self.psd_unit)

    def describe(self) -> str:
        lo, hi = self.band
        head = f"{self.region} {lo}-{hi} MHz: {self.usage}"
        if self.is_forbidden:
            return f"{head} [FORBIDDEN] {self.notes}"
        if self.status != "active":
            return f"{head} [{self.status}]" + (f" {self.notes}" if self.notes else "")
        parts = [self.indoor]
        if self.power_depends_on_bw:
            parts.append("max Tx power depends on bandwidth")
        elif self.power_limit is not None:
            label = "EIRP" if self.power_basis == "eirp" else "Tx power"
            parts.append(f"max {label} {self.power_limit:g} {self.power_unit}")
        if self.psd_limit is not None:
            parts.append(f"max PSD {self.psd_limit:g} {self.psd_unit}")
        for name in ("tpc", "dfs", "lbt"):
            v = getattr(self, name)
            if v is not None:
                parts.append(name.upper() if v else f"no {name.upper()}")
        if self.dfs_exempt:
            parts.append(f"no DFS within {self.dfs_exempt[0]}-{self.dfs_exempt[1]} MHz")
        return f"{head}: " + ", ".join(parts)

    def to_dict(self) -> dict:
        d = {"region": self.region, "band": list(self.band), "usage": self.usage,
             "status": self.status, "indoor": self.indoor}
        for name in ("power_limit", "power_unit", "power_basis", "psd_limit", "psd_unit", "tpc", "dfs", "lbt"):
            v = getattr(self, name)
            if v is not None:
                d[name] = v
        if self.power_depends_on_bw:
            d["power_depends_on_bw"] = True
        if self.dfs_exempt:
            d["dfs_exempt"] = list(self.dfs_exempt)
        if self.forbidden:
            d["forbidden"] = [list(f) for f in self.forbidden]
        if self.footnotes:
            d["footnotes"] = list(self.footnotes)
        if self.notes:
            d["notes"] = self.notes
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RegRule":
        kw = dict(d)
        kw["band"] = tuple(kw["band"])
        if "dfs_exempt" in kw:
            kw["dfs_exempt"] = tuple(kw["dfs_exempt"])
        kw["forbidden"] = tuple(tuple(f) for f in kw.get("forbidden", ()))
        kw["footnotes"] = tuple(kw.get("footnotes", ()))
        return cls(**kw)


@dataclass(frozen=True)
class RegDb:
    rules: tuple[RegRule, ...]
    footnotes: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for r in self.rules:
            key = (r.region, tuple(r.band))
            if key in seen:
                raise ValueError(f"duplicate cell {key}")
            seen.add(key)

    def cells(self, region: str) -> list[RegRule]:
        region = canonical_region(region)
        return sorted((r for r in self.rules if r.region == region), key=lambda r: r.band)

    def lookup(self, region: str, freq_mhz: float) -> RegRule:
        """The rule whose band contains ``freq_mhz``; forbidden sub-ranges come back flagged."""
        if not FREQ_MIN <= freq_mhz < FREQ_MAX:
            raise RangeError(f"{freq_mhz} MHz is outside {FREQ_MIN}-{FREQ_MAX} MHz")
        for r in self.cells(region):
            lo, hi = r.band
            if lo <= freq_mhz < hi:
                for flo, fhi in r.forbidden:
                    if flo <= freq_mhz < fhi:
                        note = " ".join(self.footnotes.get(n, "") for n in r.footnotes).strip()
                        return replace(r, is_forbidden=True, notes=note or f"usage forbidden in {flo}-{fhi} MHz")
                return r
        raise LookupError(f"no rule for {region} at {freq_mhz} MHz")

    def to_toml(self) -> str:
        data = {"footnotes": {str(k): v for k, v in sorted(self.footnotes.items())},
                "rule": [r.to_dict() for r in self.rules]}
        return tomli_w.dumps(data)


def canonical_region(name: str) -> str:
    for r in REGIONS:
        if r.lower() == name.strip().lower():
            return r
    raise ValueError(f"unknown region {name!r}; expected one of {', '.join(REGIONS)}")


def parse_regdb(text: str) -> RegDb:
    data = tomllib.loads(text)
    rules = tuple(RegRule.from_dict(d) for d in data["rule"])
    notes = {int(k): v for k, v in data.get("footnotes", {}).items()}
    return RegDb(rules, notes)


_DEFAULT: Optional[RegDb] = None


def load_regdb(path=None) -> RegDb:
    global _DEFAULT
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            return parse_regdb(fh.read())
    if _DEFAULT is None:
        text = resources.files("coexsim").joinpath("data/regulatory_5ghz.toml").read_text(encoding="utf-8")
        _DEFAULT = parse_regdb(text)
    return _DEFAULT


def lookup(region: str, freq_mhz: float) -> RegRule:
    return load_regdb().lookup(region, freq_mhz)


@dataclass(frozen=True)
class DeviceProfile:
    tx_power: float  # dBm at the antenna port
    psd: float  # dBm/MHz
    location: str  # "indoor" or "outdoor"
    implements_tpc: bool
    implements_dfs: bool
    implements_lbt: bool
    operating_band: tuple[float, float]
    antenna_gain: float = 0.0  # dBi, for EIRP limits
    bandwidth: Optional[float] = None  # MHz

    def __post_init__(self):
        lo, hi = self.operating_band
        if not (FREQ_MIN <= lo < hi <= FREQ_MAX):
            raise ValueError(f"operating band {self.operating_band} must lie within {FREQ_MIN}-{FREQ_MAX} MHz")
        if self.location not in ("indoor", "outdoor"):
            raise ValueError("location must be 'indoor' or 'outdoor'")

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceProfile":
        kw = dict(d)
        kw["operating_band"] = tuple(kw["operating_band"])
        return cls(**kw)


@dataclass(frozen=True)
class Verdict:
    constraint: str  # usage, power, psd, indoor, tpc, dfs, lbt
    outcome: str  # pass, fail, indeterminate
    band: tuple[int, int]
    limit: Optional[str] = None
    detail: str = ""

    def to_dict(self) -> dict:
        return {"constraint": self.constraint, "outcome": self.outcome, "band": list(self.band),
                "limit": self.limit, "detail": self.detail}


def _cell_verdicts(rule: RegRule, dev: DeviceProfile) -> list[Verdict]:
    band = rule.band
    lo, hi = max(dev.operating_band[0], band[0]), min(dev.operating_band[1], band[1])
    if rule.status == "not-applicable":
        return [Verdict("usage", "fail", band, None, "no rules defined for this sub-band")]
    for flo, fhi in rule.forbidden:
        if lo < fhi and flo < hi:
            return [Verdict("usage", "fail", band, f"forbidden {flo}-{fhi} MHz", rule.usage)]
    names = ("power", "psd", "indoor", "tpc", "dfs", "lbt")
    if rule.status == "under-consideration":
        return [Verdict(n, "indeterminate", band, None, f"cell is under consideration ({rule.usage})") for n in names]
    out = []
    if rule.power_depends_on_bw:
        out.append(Verdict("power", "indeterminate", band, "depends on bandwidth",
                           "no bandwidth formula is tabulated" if dev.bandwidth else "bandwidth not given"))
    elif rule.power_limit is not None:
        limit = rule.max_power_dbm
        value = dev.tx_power + dev.antenna_gain if rule.power_basis == "eirp" else dev.tx_power
        label = f"{rule.power_limit:g} {rule.power_unit} {'EIRP' if rule.power_basis == 'eirp' else 'Tx'}"
        out.append(Verdict("power", "pass" if value <= limit + 1e-9 else "fail", band, label,
                           f"device {value:g} dBm vs {limit:.2f} dBm"))
    else:
        out.append(Verdict("power", "indeterminate", band, None, "no power limit stated"))
    if rule.psd_limit is not None:
        limit = rule.max_psd_dbm_mhz
        value = dev.psd + (dev.antenna_gain if rule.power_basis == "eirp" else 0.0)
        out.append(Verdict("psd", "pass" if value <= limit + 1e-9 else "fail", band,
                           f"{rule.psd_limit:g} {rule.psd_unit}", f"device {value:g} dBm/MHz vs {limit:.2f} dBm/MHz"))
    elif not rule.power_depends_on_bw:
        out.append(Verdict("psd", "indeterminate", band, None, "no PSD limit stated"))
    if rule.indoor == "indoor":
        ok = dev.location == "indoor"
        out.append(Verdict("indoor", "pass" if ok else "fail", band, "indoor only", dev.location))
    else:
        out.append(Verdict("indoor", "pass", band, rule.indoor, dev.location))
    for name, has in (("tpc", dev.implements_tpc), ("dfs", dev.implements_dfs), ("lbt", dev.implements_lbt)):
        required = getattr(rule, name)
        if name == "dfs" and required and rule.dfs_exempt:
            elo, ehi = rule.dfs_exempt
            if elo <= lo and hi <= ehi:
                required = False
        if required is None:
            out.append(Verdict(name, "indeterminate", band, None, "requirement not stated"))
        elif required and not has:
            out.append(Verdict(name, "fail", band, f"{name.upper()} required", "device does not implement it"))
        else:
            out.append(Verdict(name, "pass", band, f"{name.upper()} {'required' if required else 'not required'}"))
    return out


def check_compliance(profile: DeviceProfile, region: str, db: Optional[RegDb] = None) -> list[Verdict]:
    """Verdicts for every sub-band cell the device's operating band touches."""
    db = db or load_regdb()
    lo, hi = profile.operating_band
    out = []
    for rule in db.cells(region):
        if rule.band[0] < hi and lo < rule.band[1]:
            out.extend(_cell_verdicts(rule, profile))
    return out


@dataclass(frozen=True)
class EtsiLbeParams:
    q: int
    cca_period: int  # us

    def __post_init__(self):
        if not 4 <= self.q <= 32:
            raise ValueError(f"q must lie in 4..32, got {self.q}")
        if not self.cca_period > 20:
            raise ValueError(f"CCA period must exceed 20 us, got {self.cca_period}")


def etsi_lbe_limits(p: EtsiLbeParams) -> tuple[float, int, int]:
    """(max channel occupancy us, min idle us, max idle us) for load-based equipment."""
    return 13_000 * p.q / 32, p.cca_period, p.cca_period * p.q
