"""Command-line entry point: ``coexsim run | trace | plotdata | regcheck | scenarios``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

from . import __version__
from .engine import run
from .kernel import ConfigError
from .metrics import ReplicaSummary, TttoReport, aggregate, compute_ttto
from .regdb import DeviceProfile, RangeError, canonical_region, check_compliance, load_regdb
from .scenario import ScenarioConfig, bundled_scenarios, load_scenario, parse_duration

RESULT_SCHEMA_VERSION = 1
CSV_COLUMNS = ("operator", "technology", "ttto_mean", "ttto_std", "replicas")
PLOT_COLUMNS = ("scenario", "operator", "technology", "ttto_mean", "ttto_std", "replicas")


class BundleError(ValueError):
    pass


@dataclass(frozen=True)
class ResultBundle:
    scenario: dict
    reports: list[TttoReport]
    summary: ReplicaSummary
    version: str
    runtime_s: float

    def to_dict(self) -> dict:
        return {
            "schema_version": RESULT_SCHEMA_VERSION,
            "version": self.version,
            "scenario": self.scenario,
            "reports": [r.to_dict() for r in self.reports],
            "summary": self.summary.to_dict(),
            "runtime_s": self.runtime_s,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def technologies(self) -> dict[str, str]:
        return {op["id"]: op["technology"] for op in self.scenario.get("operators", [])}

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema_version={RESULT_SCHEMA_VERSION}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        tech = self.technologies()
        for op, mean in self.summary.mean.items():
            w.writerow([op, tech.get(op, ""), f"{mean:.6f}", f"{self.summary.stddev[op]:.6f}",
                        self.summary.replica_count])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, d: dict) -> "ResultBundle":
        try:
            if d.get("schema_version") != RESULT_SCHEMA_VERSION:
                raise BundleError(f"unsupported schema_version {d.get('schema_version')!r}")
            reports = [TttoReport.from_dict(r) for r in d["reports"]]
            if not reports:
                raise BundleError("bundle contains no replica reports")
            s = d["summary"]
            summary = ReplicaSummary(s["mean"], s["stddev"], int(s["replica_count"]), list(s["seeds"]))
            return cls(d["scenario"], reports, summary, d.get("version", ""), float(d.get("runtime_s", 0.0)))
        except (KeyError, TypeError) as exc:
            raise BundleError(f"malformed result bundle: missing or bad field {exc}") from exc


def _replica(args) -> TttoReport:
    scenario, seed = args
    return compute_ttto(run(scenario, seed))


def run_replicas(scenario: ScenarioConfig, seeds: list[int], jobs: int = 1) -> list[TttoReport]:
    """Results come back in seed order whatever the worker scheduling."""
    work = [(scenario, s) for s in seeds]
    if jobs <= 1 or len(seeds) == 1:
        return [_replica(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_replica, work))


def run_bundle(scenario: ScenarioConfig, seeds: list[int], jobs: int = 1) -> ResultBundle:
    t0 = time.perf_counter()
    reports = run_replicas(scenario, seeds, jobs)
    return ResultBundle(scenario.to_dict(), reports, aggregate(reports), __version__, time.perf_counter() - t0)


def _emit(text: str, out: Optional[str]) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _load(args) -> ScenarioConfig:
    sc = load_scenario(args.scenario)
    if getattr(args, "horizon", None):
        sc = replace(sc, horizon=parse_duration(args.horizon, "--horizon")).validate()
    return sc


def cmd_run(args) -> int:
    sc = _load(args)
    base = args.seed if args.seed is not None else sc.base_seed
    n = args.replicas if args.replicas is not None else sc.replicas
    if n < 1:
        raise ConfigError("--replicas", "must be at least 1")
    bundle = run_bundle(sc, [base + k for k in range(n)], args.jobs)
    _emit(bundle.to_json() if args.format == "json" else bundle.to_csv(), args.out)
    print(f"{sc.name}: {n} replica(s) in {bundle.runtime_s:.2f} s", file=sys.stderr)
    return 0


def cmd_trace(args) -> int:
    sc = _load(args)
    _emit(run(sc, args.seed).to_json(), args.out)
    return 0


def plot_rows(bundles: list[ResultBundle]) -> list[dict]:
    rows = []
    for b in bundles:
        tech = b.technologies()
        name = b.scenario.get("name", "scenario")
        for op, mean in b.summary.mean.items():
            rows.append({"scenario": name, "operator": op, "technology": tech.get(op, ""),
                         "ttto_mean": mean, "ttto_std": b.summary.stddev[op],
                         "replicas": b.summary.replica_count})
    return rows


def cmd_plotdata(args) -> int:
    bundles = []
    for path in args.bundles:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise BundleError(f"{path}: not valid JSON ({exc})") from exc
        try:
            bundles.append(ResultBundle.from_dict(data))
        except BundleError as exc:
            raise BundleError(f"{path}: {exc}") from exc
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=PLOT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in plot_rows(bundles):
        row = dict(row, ttto_mean=f"{row['ttto_mean']:.6f}", ttto_std=f"{row['ttto_std']:.6f}")
        w.writerow(row)
    _emit(buf.getvalue(), args.out)
    return 0


def cmd_regcheck(args) -> int:
    db = load_regdb()
    region = canonical_region(args.region)
    if args.device:
        from .scenario import tomllib

        with open(args.device, "rb") as fh:
            profile = DeviceProfile.from_dict(tomllib.load(fh))
        verdicts = check_compliance(profile, region, db)
        if args.json:
            _emit(json.dumps({"region": region, "verdicts": [v.to_dict() for v in verdicts]}, indent=2), None)
        else:
            for v in verdicts:
                lo, hi = v.band
                limit = f" [{v.limit}]" if v.limit else ""
                print(f"{lo}-{hi} MHz  {v.constraint:<6} {v.outcome.upper():<13}{limit} {v.detail}".rstrip())
        return 0
    if args.freq is None:
        raise ConfigError("--freq", "required unless --device is given")
    rule = db.lookup(region, args.freq)
    if args.json:
        d = rule.to_dict()
        d["forbidden_here"] = rule.is_forbidden
        _emit(json.dumps(d, indent=2), None)
    else:
        print(rule.describe())
    return 0


def cmd_scenarios(args) -> int:
    for name in bundled_scenarios():
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coexsim", description=__doc__.split(":")[0])
    p.add_argument("--version", action="version", version=f"coexsim {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run replicas of a scenario and report TTTO per operator")
    r.add_argument("scenario", help="scenario TOML file or bundled scenario name")
    r.add_argument("--seed", type=int, default=None, help="first seed (default: scenario base_seed, 1)")
    r.add_argument("--replicas", type=int, default=None, help="number of seeds (default: scenario value, 20)")
    r.add_argument("--horizon", default=None, help="override the horizon, e.g. 10s")
    r.add_argument("--format", choices=("json", "csv"), default="json")
    r.add_argument("--out", default=None, help="output file (default: stdout)")
    r.add_argument("--jobs", type=int, default=1, help="worker processes")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("trace", help="dump the annotated transmission trace of one run as JSON")
    t.add_argument("scenario")
    t.add_argument("--seed", type=int, default=1)
    t.add_argument("--horizon", default=None)
    t.add_argument("--out", default=None)
    t.set_defaults(func=cmd_trace)

    pd = sub.add_parser("plotdata", help="grouped-bar table (scenario x operator x mean/std) from result bundles")
    pd.add_argument("bundles", nargs="+")
    pd.add_argument("--out", default=None)
    pd.set_defaults(func=cmd_plotdata)

    g = sub.add_parser("regcheck", help="look up 5 GHz regulatory rules or check a device profile")
    g.add_argument("--region", required=True)
    g.add_argument("--freq", type=float, default=None, help="frequency in MHz")
    g.add_argument("--device", default=None, help="device profile TOML")
    g.add_argument("--json", action="store_true")
    g.set_defaults(func=cmd_regcheck)

    s = sub.add_parser("scenarios", help="list bundled scenarios")
    s.set_defaults(func=cmd_scenarios)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, RangeError, BundleError, FileNotFoundError, ValueError) as exc:
        print(f"coexsim {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
