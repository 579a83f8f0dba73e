"""Slotted-time simulator and analysis toolkit for backpressure routing in overlay networks."""

from .engine import ArrivalProcess, Packet, RunResult, Simulator, simulate
from .netmodel import (
    OverlayError,
    OverlaySpec,
    PhysicalNetwork,
    Session,
    ThresholdSet,
    Tunnel,
    build_overlay,
    full_overlay,
    shortest_path_overlay,
    thresholds,
    validate_non_overlapping,
)
from .policies import Policy, RoutingDecision
from .region import FlowDecomposition, boundary, decomposition_for_oracle, feasibility
from .schedulers import Discipline, allocate

__all__ = [
    "ArrivalProcess",
    "Discipline",
    "FlowDecomposition",
    "OverlayError",
    "OverlaySpec",
    "Packet",
    "PhysicalNetwork",
    "Policy",
    "RoutingDecision",
    "RunResult",
    "Session",
    "Simulator",
    "ThresholdSet",
    "Tunnel",
    "allocate",
    "boundary",
    "build_overlay",
    "decomposition_for_oracle",
    "feasibility",
    "full_overlay",
    "shortest_path_overlay",
    "simulate",
    "thresholds",
    "validate_non_overlapping",
]
