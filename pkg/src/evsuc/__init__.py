"""Frequency-secured stochastic unit commitment with aggregated EV fleets."""

from .backends import BranchAndBoundConic, HighsBackend, SolveResult, solve
from .config import ConfigError, RunConfig, config_hash, load_config
from .degradation import DegradationParams, fade_cubic, fade_linear
from .frequency import FrequencyParams, FrState, mstg_curve, nadir_ok, swing_nadir_oracle
from .system import (
    DemandTrace,
    EvFleetSpec,
    GeneratorSpec,
    Regime,
    StorageSpec,
    SystemSpec,
    synthetic_demand,
)
from .simulate import (
    SimulationLedger,
    SimulationOptions,
    StepRecord,
    emissions,
    marginal_value,
    run_config,
    simulate,
    value_per_ev,
)
from .uc import (
    NodeDecision,
    SystemState,
    UcOptions,
    UcProblem,
    build_problem,
    fr_capability,
    initial_state,
    verify_solution,
)
from .wind import LogisticTransform, ScenarioTree, WindModel, build_tree, sample_wind_path

__version__ = "0.1.0"

__all__ = [
    "BranchAndBoundConic",
    "HighsBackend",
    "SolveResult",
    "solve",
    "ConfigError",
    "RunConfig",
    "config_hash",
    "load_config",
    "DegradationParams",
    "fade_cubic",
    "fade_linear",
    "FrequencyParams",
    "FrState",
    "mstg_curve",
    "nadir_ok",
    "swing_nadir_oracle",
    "DemandTrace",
    "EvFleetSpec",
    "GeneratorSpec",
    "Regime",
    "StorageSpec",
    "SystemSpec",
    "synthetic_demand",
    "SimulationLedger",
    "SimulationOptions",
    "StepRecord",
    "emissions",
    "marginal_value",
    "run_config",
    "simulate",
    "value_per_ev",
    "NodeDecision",
    "SystemState",
    "UcOptions",
    "UcProblem",
    "build_problem",
    "fr_capability",
    "initial_state",
    "verify_solution",
    "LogisticTransform",
    "ScenarioTree",
    "WindModel",
    "build_tree",
    "sample_wind_path",
    "__version__",
]
