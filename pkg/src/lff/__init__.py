"""Regression with linear factored functions.

A model is a linear combination of basis functions, each of which is a
product of one-dimensional cosine expansions.  The trainer builds the
basis functions greedily with a smoothness-regularized closed-form
coordinate descent; the resulting models support exact evaluation,
inner products, marginalization and point-wise products.
"""

from .basis import BasisKind, BasisSpec, covariance, derivative_covariance, evaluate_basis, mean_vector
from .crossval import (
    CvReport,
    GpLearner,
    LffLearner,
    default_gp_grid,
    default_sigma2_grid,
    kfold_cv,
    log_grid,
    train_on_raw,
)
from .data import (
    Dataset,
    InputTransform,
    fit_transform,
    generate_spiral,
    load_csv,
    rmse,
    save_csv,
)
from .gp import GpConfig, GpModel, gp_fit, gp_predict
from .model import Lff, ModelFormatError, dumps, from_dict, load, loads, save
from .trainer import (
    FitDiagnostics,
    TrainerConfig,
    compress,
    fit,
    inner_update,
    ols_refit,
    should_stop,
    surrogate_cost,
)

__version__ = "0.1.0"

__all__ = [
    "BasisKind",
    "BasisSpec",
    "CvReport",
    "Dataset",
    "FitDiagnostics",
    "GpConfig",
    "GpLearner",
    "GpModel",
    "InputTransform",
    "Lff",
    "LffLearner",
    "ModelFormatError",
    "TrainerConfig",
    "compress",
    "covariance",
    "default_gp_grid",
    "default_sigma2_grid",
    "derivative_covariance",
    "dumps",
    "evaluate_basis",
    "fit",
    "fit_transform",
    "from_dict",
    "generate_spiral",
    "gp_fit",
    "gp_predict",
    "inner_update",
    "kfold_cv",
    "load",
    "load_csv",
    "loads",
    "log_grid",
    "mean_vector",
    "ols_refit",
    "rmse",
    "save",
    "save_csv",
    "should_stop",
    "surrogate_cost",
    "train_on_raw",
    "__version__",
]
