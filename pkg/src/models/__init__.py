"""Data models package - Pydantic configuration and run schemas."""
from .schemas import (
    CopulaMode,
    CensoringKind,
    CoxBaseline,
    DgpTag,
    SmootherConfig,
    PairConfig,
    SurvivalConfig,
    VineConfig,
    EstimatorConfig,
    DgpSpec,
    EstimatorSpec,
    ExperimentConfig,
    RunConfig,
)

__all__ = [
    # Enums
    "CopulaMode",
    "CensoringKind",
    "CoxBaseline",
    "DgpTag",
    # Component configs
    "SmootherConfig",
    "PairConfig",
    "SurvivalConfig",
    "VineConfig",
    "EstimatorConfig",
    # Simulation / CLI
    "DgpSpec",
    "EstimatorSpec",
    "ExperimentConfig",
    "RunConfig",
]
