"""Distributionally robust model predictive control for wind farm power dispatch."""

from .ambiguity import AmbiguitySet, worst_case_cov
from .arma import ArmaModel, ArmaState, FarmPredictor, identify, whiten
from .config import Config, load_config
from .controller import ConstraintSpec, DRMPCController, Weights
from .farm_model import FarmModel, TurbineLTI, default_turbine, stack_farm, step
from .harness import SimTrace, compare, compute_metrics, run_drmpc, run_scheduler, run_swf_dispatch
from .prediction import SadfPolicy, build_horizon, build_output_prediction
from .turbine import SurrogateParams
from .wind import WindScenario, generate_wind

__version__ = "0.1.0"

__all__ = [
    "AmbiguitySet", "ArmaModel", "ArmaState", "Config", "ConstraintSpec", "DRMPCController",
    "FarmModel", "FarmPredictor", "SadfPolicy", "SimTrace", "SurrogateParams", "TurbineLTI",
    "Weights", "WindScenario", "build_horizon", "build_output_prediction", "compare",
    "compute_metrics", "default_turbine", "generate_wind", "identify", "load_config",
    "run_drmpc", "run_scheduler", "run_swf_dispatch", "stack_farm", "step", "whiten",
    "worst_case_cov",
]
