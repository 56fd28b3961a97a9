"""Joint beamforming, phase and position optimization for movable-IRS ISAC."""

from .channels import Scenario, build_cascaded_channels
from .config import DESK, FULL_SCALE, ScenarioConfig, generate_scenario, load_config, parse_config
from .experiments import RunSpec, ResultRow, run_scheme, run_sweep
from .initialization import InitConfig, init_point
from .manifold import ProductPoint, TangentVector
from .metrics import PenaltyParams, constraint_values, smoothed_objective
from .penalty import OuterConfig, SolveReport, solve
from .rbfgs import InnerConfig, solve_inner

__all__ = [
    "DESK", "FULL_SCALE", "InitConfig", "InnerConfig", "OuterConfig", "PenaltyParams",
    "ProductPoint", "ResultRow", "RunSpec", "Scenario", "ScenarioConfig", "SolveReport",
    "TangentVector", "build_cascaded_channels", "constraint_values", "generate_scenario",
    "init_point", "load_config", "parse_config", "run_scheme", "run_sweep",
    "smoothed_objective", "solve", "solve_inner",
]
