"""Command-line front door: train, predict, eval, cv, spiral, and the
model algebra (marginalize, product).

All numeric knobs of the trainer are flags with the library defaults, the
`--grid` flag uses the exponent syntax "10^a..10^b step s", and output
files are never overwritten without --force.  Every error exits nonzero
with a single line naming the module it came from.
"""

import argparse
import os
import re
import sys
import traceback

import numpy as np

from . import crossval, model as model_mod, trainer
from .crossval import GpLearner, LffLearner, kfold_cv, log_grid, train_on_raw
from .data import generate_spiral, load_csv, rmse, save_csv
from .trainer import TrainerConfig

_GRID_RE = re.compile(
    r"^\s*10\^(?P<lo>-?\d+(?:\.\d+)?)\s*\.\.\s*10\^(?P<hi>-?\d+(?:\.\d+)?)"
    r"\s+step\s+(?P<step>\d+(?:\.\d+)?)\s*$"
)


def parse_grid(text):
    """Parse the grid syntax "10^a..10^b step s" into a list of values."""
    match = _GRID_RE.match(text)
    if not match:
        raise ValueError(
            f'grid must look like "10^-10..10^10 step 0.25", got {text!r}'
        )
    return log_grid(
        float(match.group("lo")), float(match.group("hi")), float(match.group("step"))
    )


def parse_sigma2(text):
    values = [float(v) for v in text.split(",")]
    return values[0] if len(values) == 1 else values


def _check_out(path, force):
    if path is not None and os.path.exists(path) and not force:
        raise FileExistsError(f"{path} exists; pass --force to overwrite")


def _add_trainer_flags(p):
    p.add_argument("--sigma2", type=parse_sigma2, default=1e-4,
                   help="smoothness weight, single float or comma list per dimension")
    p.add_argument("--mk", type=int, default=50, help="cosine basis size per dimension")
    p.add_argument("--eps-inner", type=float, default=1e-6)
    p.add_argument("--eps-det", type=float, default=1e-12)
    p.add_argument("--max-outer", type=int, default=200)
    p.add_argument("--max-inner-sweeps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-cache", action="store_true",
                   help="recompute basis expansions instead of caching them")
    p.add_argument("--margin", type=float, default=0.05,
                   help="box margin of the input transform")


def _trainer_config(args):
    return TrainerConfig(
        sigma2=args.sigma2,
        eps_inner=args.eps_inner,
        eps_det=args.eps_det,
        basis_sizes=args.mk,
        max_outer=args.max_outer,
        max_inner_sweeps=args.max_inner_sweeps,
        seed=args.seed,
        cache_expansion=not args.no_cache,
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lff",
        description="Regression with linear factored functions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on a labeled CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", default=None, help="label column name or index")
    _add_trainer_flags(p)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--diagnostics", default=None,
                   help="diagnostics file (default: <out>.diag.json)")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("predict", help="predict a CSV's rows with a model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", default=None,
                   help="label column to drop before predicting (default: last)")
    p.add_argument("--no-label", action="store_true",
                   help="the file has no label column; use every column")
    p.add_argument("--out", default=None, help="default: stdout, one value per line")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("eval", help="RMSE of a model on a labeled CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", default=None)

    p = sub.add_parser("cv", help="k-fold cross-validation over a hyper grid")
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", default=None)
    p.add_argument("--learner", choices=["lff", "gp"], default="lff")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--grid", type=parse_grid, default=None,
                   help='sigma2 (lff) or kernel width (gp) grid, "10^a..10^b step s"')
    p.add_argument("--beta-grid", type=parse_grid, default=None,
                   help="gp prior precision grid, same syntax")
    p.add_argument("--max-support", type=int, default=2000)
    _add_trainer_flags(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="report prefix; writes .json and .csv")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("spiral", help="generate the synthetic spiral CSV")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--noise-dims", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("marginalize", help="integrate one input dimension out")
    p.add_argument("--model", required=True)
    p.add_argument("--dim", type=int, required=True, help="0-based input dimension")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("product", help="point-wise product of two models")
    p.add_argument("models", nargs=2, metavar="MODEL")
    p.add_argument("--lowpass", type=int, default=None,
                   help="keep at most this many bases per dimension")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")

    return parser


def _cmd_train(args):
    data = load_csv(args.data, args.label_col)
    _check_out(args.out, args.force)
    diag_path = args.diagnostics or args.out + ".diag.json"
    _check_out(diag_path, args.force)
    fitted, diagnostics = train_on_raw(data, _trainer_config(args), args.margin)
    model_mod.save(fitted, args.out)
    diagnostics.save(diag_path)
    print(f"wrote {args.out} (m={fitted.m}, train rmse={diagnostics.train_rmse:.6g})")
    return 0


def _load_features(args):
    if args.no_label:
        # every column is a feature: reuse the loader, then re-attach the label column
        data = load_csv(args.data, label_column=-1)
        return np.hstack([data.X, data.y[:, None]])
    return load_csv(args.data, args.label_col).X


def _cmd_predict(args):
    fitted = model_mod.load(args.model)
    X = _load_features(args)
    pred = fitted.predict(X)
    text = "\n".join(repr(v) for v in pred) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        _check_out(args.out, args.force)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


def _cmd_eval(args):
    fitted = model_mod.load(args.model)
    data = load_csv(args.data, args.label_col)
    print(repr(rmse(fitted.predict(data.X), data.y)))
    return 0


def _cmd_cv(args):
    data = load_csv(args.data, args.label_col)
    json_path, csv_path = args.out + ".json", args.out + ".csv"
    _check_out(json_path, args.force)
    _check_out(csv_path, args.force)
    if args.learner == "lff":
        learner = LffLearner(
            sigma2_grid=args.grid, config=_trainer_config(args), margin=args.margin
        )
    else:
        learner = GpLearner(
            width_grid=args.grid,
            precision_grid=args.beta_grid,
            max_support=args.max_support,
            seed=args.seed,
        )
    report = kfold_cv(data, args.folds, learner, seed=args.seed, workers=args.workers)
    report.save(json_path)
    report.save_table(csv_path)
    print(
        f"wrote {json_path} and {csv_path} "
        f"(best {report.best_params}, rmse {report.mean_rmse:.6g} "
        f"+- {report.std_rmse:.3g})"
    )
    return 0


def _cmd_spiral(args):
    _check_out(args.out, args.force)
    save_csv(generate_spiral(args.n, args.noise_dims, args.seed), args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_marginalize(args):
    fitted = model_mod.load(args.model)
    _check_out(args.out, args.force)
    model_mod.save(fitted.marginalize(args.dim), args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_product(args):
    left = model_mod.load(args.models[0])
    right = model_mod.load(args.models[1])
    _check_out(args.out, args.force)
    model_mod.save(left.pointwise_product(right, lowpass=args.lowpass), args.out)
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
    "cv": _cmd_cv,
    "spiral": _cmd_spiral,
    "marginalize": _cmd_marginalize,
    "product": _cmd_product,
}


def _origin_module(exc):
    """Name of the package module the exception came from, for error lines."""
    for frame in reversed(traceback.extract_tb(exc.__traceback__)):
        path = frame.filename.replace(os.sep, "/")
        if "/lff/" in path:
            stem = os.path.splitext(os.path.basename(path))[0]
            if stem != "cli":
                return f"lff.{stem}"
    return "lff.cli"


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # surface every module error as one parsable line
        message = str(exc).replace("\n", " ")
        print(f"error: {_origin_module(exc)}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
