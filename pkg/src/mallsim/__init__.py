"""mallsim: tick-driven cluster simulator for malleable HPC job scheduling."""

from .engine import ClusterConfig, JobOutcome, SimResult, run_simulation
from .malleability import (
    EfficiencyThresholds,
    MalleableJobSpec,
    MixedWorkload,
    transform_workload,
)
from .speedup import AmdahlSpeedup, DowneySpeedup, SpeedupModel
from .strategies import StrategyId
from .workload import RigidJobSpec

__version__ = "0.1.0"

__all__ = [
    "AmdahlSpeedup",
    "ClusterConfig",
    "DowneySpeedup",
    "EfficiencyThresholds",
    "JobOutcome",
    "MalleableJobSpec",
    "MixedWorkload",
    "RigidJobSpec",
    "SimResult",
    "SpeedupModel",
    "StrategyId",
    "run_simulation",
    "transform_workload",
    "__version__",
]
