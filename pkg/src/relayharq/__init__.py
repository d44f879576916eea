"""Scheduling for relay-assisted HARQ downlinks.

Priority-index policies computed through a Klimov network transformation,
an exact MDP oracle for small instances, and a seeded slot simulator.
"""

from .channel import DecodeModel, RelayRanking, rank_relays, sample_outcome
from .klimov import (
    KlimovInstance,
    KlimovQueueLabel,
    PriorityOrdering,
    build_rdck,
    build_rlpak,
    expected_service_time,
    klimov_ordering,
    verify_lemma1,
)
from .model import (
    BS,
    BaseStationState,
    ConfigError,
    ContractViolation,
    RelayState,
    SchedulingDecision,
    SlotOutcome,
    SystemConfig,
    apply_outcome,
    instantaneous_cost_convex,
    instantaneous_cost_linear,
)
from .oracle import MdpSpec, StateSpaceTooLarge, solve_average_cost, solve_draining
from .policy import PolicyKind, Scheduler, decide, index_table, rlpa_index
from .simulator import SimMetrics, SimRun, run, run_many

__all__ = [
    "BS",
    "BaseStationState",
    "ConfigError",
    "ContractViolation",
    "DecodeModel",
    "KlimovInstance",
    "KlimovQueueLabel",
    "MdpSpec",
    "PolicyKind",
    "PriorityOrdering",
    "RelayRanking",
    "RelayState",
    "Scheduler",
    "SchedulingDecision",
    "SimMetrics",
    "SimRun",
    "SlotOutcome",
    "StateSpaceTooLarge",
    "SystemConfig",
    "apply_outcome",
    "build_rdck",
    "build_rlpak",
    "decide",
    "expected_service_time",
    "index_table",
    "instantaneous_cost_convex",
    "instantaneous_cost_linear",
    "klimov_ordering",
    "rank_relays",
    "rlpa_index",
    "run",
    "run_many",
    "sample_outcome",
    "solve_average_cost",
    "solve_draining",
    "verify_lemma1",
]
