from .model import (
    Dataset,
    DesignError,
    FitError,
    FittedModel,
    ModelSpec,
    SarimaxParams,
    build_design,
    fit,
    forecast,
    r2_score,
    to_state_space,
)
from .search import AblationReport, ScenarioResult, SearchError, grid_search, run_ablation
from .statespace import KalmanError, StateSpace, kalman_loglik

__all__ = [
    "AblationReport",
    "ScenarioResult",
    "SearchError",
    "grid_search",
    "run_ablation",
    "Dataset",
    "DesignError",
    "FitError",
    "FittedModel",
    "KalmanError",
    "ModelSpec",
    "SarimaxParams",
    "StateSpace",
    "build_design",
    "fit",
    "forecast",
    "kalman_loglik",
    "r2_score",
    "to_state_space",
]
