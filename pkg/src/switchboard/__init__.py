"""Self-adaptive model-serving testbed.

A small numpy-based library for experimenting with runtime model
switching under load: an open-loop request generator feeds a FIFO
backlog, a worker drains it through calibrated stochastic model
profiles, and a MAPE-K control loop swaps the active model to hold a
response-time target.  Runs fully deterministically on a virtual clock
or against the wall clock.
"""

from switchboard.models import (
    ArrivalTrace,
    DetectionResult,
    ExperimentConfig,
    InvalidConfig,
    KnowledgeState,
    MetricsRecord,
    ModelProfile,
    ModelStats,
    Request,
    StrategyDecision,
    StrategySpec,
    SyntheticTraceSpec,
    TraceFileRef,
    Violation,
    config_violations,
    default_profiles,
    profiles_by_id,
    validate_config,
)

__all__ = [
    "ArrivalTrace",
    "DetectionResult",
    "ExperimentConfig",
    "InvalidConfig",
    "KnowledgeState",
    "MetricsRecord",
    "ModelProfile",
    "ModelStats",
    "Request",
    "StrategyDecision",
    "StrategySpec",
    "SyntheticTraceSpec",
    "TraceFileRef",
    "Violation",
    "config_violations",
    "default_profiles",
    "profiles_by_id",
    "validate_config",
]

__version__ = "0.1.0"
