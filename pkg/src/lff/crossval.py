"""Cross-validation over hyper-parameter grids, plus the benchmark grids.

Protocol: every grid point is scored on the same k-fold split, the grid
point with the best fold-mean RMSE wins, and its fold statistics are the
report.  Fold assignment is deterministic under the
seed.  Grid cells are independent, so they can run in worker processes.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import trainer
from .data import Dataset, fit_transform, rmse
from .gp import GpConfig, gp_fit, gp_predict
from .model import json_bytes
from .trainer import TrainerConfig


def log_grid(lo_exp, hi_exp, step):
    """The values 10**e for e from lo_exp to hi_exp inclusive, spaced by step."""
    if step <= 0:
        raise ValueError("step must be positive")
    count = int(round((hi_exp - lo_exp) / step)) + 1
    if count < 1:
        raise ValueError("empty exponent range")
    return [float(10.0 ** (lo_exp + step * i)) for i in range(count)]


def default_sigma2_grid():
    """Benchmark grid for the smoothness weight: 10^u, u = -10(0.25)10."""
    return log_grid(-10.0, 10.0, 0.25)


def default_gp_grid():
    """Benchmark grid for the GP: widths 10^v, v=-1(0.25)3; precisions 10^w, w=-2(1)10."""
    return log_grid(-1.0, 3.0, 0.25), log_grid(-2.0, 10.0, 1.0)


def train_on_raw(data, config=None, margin=0.05):
    """Box-transform raw data, train, and attach the transform to the model."""
    transform, boxed = fit_transform(data, margin)
    model, diagnostics = trainer.fit(boxed, config)
    return model.with_transform(transform), diagnostics


class LffLearner:
    """Factored-function learner scanning a sigma2 grid."""

    name = "lff"

    def __init__(self, sigma2_grid=None, config=None, margin=0.05):
        self.sigma2_grid = (
            list(sigma2_grid) if sigma2_grid is not None else default_sigma2_grid()
        )
        self.config = config if config is not None else TrainerConfig()
        self.margin = margin

    def param_grid(self):
        return [{"sigma2": float(s)} for s in self.sigma2_grid]

    def fit(self, train, params):
        config = replace(self.config, sigma2=params["sigma2"])
        if train.transformed:
            model, _ = trainer.fit(train, config)
            return model
        model, _ = train_on_raw(train, config, self.margin)
        return model

    def predict(self, model, X):
        return model.predict(X)

    def model_size(self, model):
        return model.m


class GpLearner:
    """Gaussian-process learner scanning kernel width and prior precision."""

    name = "gp"

    def __init__(self, width_grid=None, precision_grid=None, max_support=2000, seed=0):
        widths, precisions = default_gp_grid()
        self.width_grid = list(width_grid) if width_grid is not None else widths
        self.precision_grid = (
            list(precision_grid) if precision_grid is not None else precisions
        )
        self.max_support = max_support
        self.seed = seed

    def param_grid(self):
        return [
            {"kernel_width": float(w), "prior_precision": float(b)}
            for w in self.width_grid
            for b in self.precision_grid
        ]

    def fit(self, train, params):
        config = GpConfig(
            kernel_width=params["kernel_width"],
            prior_precision=params["prior_precision"],
            max_support=self.max_support,
            seed=self.seed,
        )
        return gp_fit(train, config)

    def predict(self, model, X):
        return gp_predict(model, X)

    def model_size(self, model):
        return model.n_support


@dataclass
class CvReport:
    """Fold statistics of the best grid point plus the full grid table."""

    learner: str
    folds: int
    seed: int
    best_params: dict
    best_grid_index: int
    fold_rmse: list
    fold_model_size: list
    fold_seconds: list
    table: list  # one row per grid point x fold

    @property
    def mean_rmse(self):
        return float(np.mean(self.fold_rmse))

    @property
    def std_rmse(self):
        return float(np.std(self.fold_rmse, ddof=1)) if self.folds > 1 else 0.0

    @property
    def mean_model_size(self):
        return float(np.mean(self.fold_model_size))

    def to_dict(self, include_timing=True):
        doc = {
            "format": "lff-cv-report",
            "version": 1,
            "learner": self.learner,
            "folds": self.folds,
            "seed": self.seed,
            "best_params": self.best_params,
            "best_grid_index": self.best_grid_index,
            "fold_rmse": list(self.fold_rmse),
            "fold_model_size": list(self.fold_model_size),
            "mean_rmse": self.mean_rmse,
            "std_rmse": self.std_rmse,
            "mean_model_size": self.mean_model_size,
            "table": [
                {k: v for k, v in row.items() if include_timing or k != "seconds"}
                for row in self.table
            ],
        }
        if include_timing:
            doc["fold_seconds"] = list(self.fold_seconds)
        return doc

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(json_bytes(self.to_dict()))

    def table_csv(self):
        """Flat export, one row per grid point x fold, for external tools."""
        param_keys = sorted({k for row in self.table for k in row["params"]})
        lines = ["grid_index,fold," + ",".join(param_keys) + ",rmse,model_size,seconds"]
        for row in self.table:
            params = ",".join(repr(row["params"][k]) for k in param_keys)
            lines.append(
                f"{row['grid_index']},{row['fold']},{params},"
                f"{row['rmse']!r},{row['model_size']},{row['seconds']!r}"
            )
        return "\n".join(lines) + "\n"

    def save_table(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.table_csv())


def fold_indices(n, folds, seed):
    """Deterministic fold assignment: a seeded permutation cut into k parts."""
    rng = np.random.default_rng(seed)
    return np.array_split(rng.permutation(n), folds)


def _run_cell(learner, data, params, train_idx, test_idx):
    start = time.perf_counter()
    model = learner.fit(data.subset(train_idx), params)
    pred = learner.predict(model, data.X[test_idx])
    err = rmse(pred, data.y[test_idx])
    return err, int(learner.model_size(model)), time.perf_counter() - start


def kfold_cv(data, folds, learner, seed=0, workers=1):
    """Score every grid point by k-fold RMSE and report the best one.

    Returns a CvReport whose fold statistics belong to the grid point with
    the smallest fold-mean RMSE (ties break toward the earlier grid
    point).  The full grid x fold table rides along for export.
    """
    if not isinstance(data, Dataset):
        raise TypeError("kfold_cv expects a Dataset")
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if data.n < folds:
        raise ValueError(f"need at least {folds} samples for {folds} folds")
    grid = learner.param_grid()
    if not grid:
        raise ValueError("hyper-parameter grid is empty")

    assignment = fold_indices(data.n, folds, seed)
    all_idx = np.arange(data.n)
    splits = []
    for fi, test_idx in enumerate(assignment):
        mask = np.ones(data.n, dtype=bool)
        mask[test_idx] = False
        splits.append((fi, all_idx[mask], test_idx))

    jobs = [
        (gi, params, fi, train_idx, test_idx)
        for gi, params in enumerate(grid)
        for fi, train_idx, test_idx in splits
    ]

    results = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                (gi, fi): pool.submit(_run_cell, learner, data, params, tr, te)
                for gi, params, fi, tr, te in jobs
            }
            for key, fut in futures.items():
                results[key] = fut.result()
    else:
        for gi, params, fi, tr, te in jobs:
            results[(gi, fi)] = _run_cell(learner, data, params, tr, te)

    table = [
        {
            "grid_index": gi,
            "fold": fi,
            "params": grid[gi],
            "rmse": results[(gi, fi)][0],
            "model_size": results[(gi, fi)][1],
            "seconds": results[(gi, fi)][2],
        }
        for gi in range(len(grid))
        for fi in range(folds)
    ]

    means = [
        float(np.mean([results[(gi, fi)][0] for fi in range(folds)]))
        for gi in range(len(grid))
    ]
    best = int(np.argmin(means))
    return CvReport(
        learner=learner.name,
        folds=folds,
        seed=seed,
        best_params=grid[best],
        best_grid_index=best,
        fold_rmse=[results[(best, fi)][0] for fi in range(folds)],
        fold_model_size=[results[(best, fi)][1] for fi in range(folds)],
        fold_seconds=[results[(best, fi)][2] for fi in range(folds)],
        table=table,
    )
