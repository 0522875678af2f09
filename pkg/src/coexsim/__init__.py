"""Coexistence simulator for Wi-Fi, LAA/MulteFire and LTE-U on one 5 GHz channel."""

from .channel import RadarConfig, RecordKind, SensingAssumption, TransmissionRecord, resolve_collisions
from .engine import run
from .kernel import ConfigError, RngStream, SimTrace, draw_uniform_int
from .metrics import ReplicaSummary, StateError, TttoReport, aggregate, airtime_breakdown, compute_ttto
from .scenario import OperatorConfig, ScenarioConfig, load_scenario, loads_scenario

__version__ = "0.1.0"
