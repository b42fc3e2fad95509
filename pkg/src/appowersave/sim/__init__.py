"""Discrete-event simulation of one BSS with optional overlapping contenders."""

from .core import Simulator, run
from .dcf import DcfState, freeze_backoffs, thaw_backoffs
from .events import Event, EventKind, EventQueue
from .report import Collision, FlowStats, FrameRecord, SimReport
from .scenario import (
    ApSpec, ObssSpec, ScenarioError, ScenarioSpec, SimConfig, StationSpec, load_scenario, parse_scenario,
)

__all__ = [
    "ApSpec", "Collision", "DcfState", "Event", "EventKind", "EventQueue", "FlowStats", "FrameRecord",
    "ObssSpec", "ScenarioError", "ScenarioSpec", "SimConfig", "SimReport", "Simulator", "StationSpec",
    "freeze_backoffs", "load_scenario", "parse_scenario", "run", "thaw_backoffs",
]
