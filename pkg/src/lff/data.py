"""Datasets, input transforms, synthetic generators and CSV ingestion.

Raw inputs live wherever the data came from; the cosine basis needs the
unit box.  `fit_transform` maps each training column affinely into
[margin, 1-margin] (min-max is invariant under per-column standardization,
so z-scoring first would change nothing) and the resulting transform is
stored with trained models so they stay self-contained.  Datasets carry a
`transformed` tag so a transform is never applied twice silently.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class Dataset:
    """n labeled d-dimensional samples.

    X is (n, d), y is (n,).  All entries must be finite.  `transformed`
    records whether X already lives in the unit box coordinates used by
    the cosine basis.
    """

    X: np.ndarray
    y: np.ndarray
    columns: list | None = None
    transformed: bool = False

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2:
            raise ValueError(f"X must be 2-D (n, d), got shape {self.X.shape}")
        if self.y.ndim != 1 or len(self.y) != self.X.shape[0]:
            raise ValueError(
                f"y must be 1-D with one label per row of X, got {self.y.shape} vs {self.X.shape}"
            )
        if self.X.shape[0] < 1:
            raise ValueError("dataset must contain at least one sample")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("X contains non-finite entries")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("y contains non-finite entries")
        if self.columns is not None and len(self.columns) != self.X.shape[1]:
            raise ValueError("column names do not match the number of feature columns")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def subset(self, idx):
        """Row subset as a new Dataset (same transform tag)."""
        return Dataset(self.X[idx], self.y[idx], self.columns, self.transformed)


@dataclass(frozen=True, eq=False)
class InputTransform:
    """Per-dimension affine map raw -> unit box: x' = (x - shift) * scale."""

    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "shift", np.asarray(self.shift, dtype=float))
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=float))
        if self.shift.shape != self.scale.shape or self.shift.ndim != 1:
            raise ValueError("shift and scale must be 1-D arrays of equal length")
        if np.any(self.scale <= 0):
            raise ValueError("transform scale must be positive in every dimension")

    @property
    def d(self):
        return len(self.shift)

    def apply(self, X):
        X = np.asarray(X, dtype=float)
        return (X - self.shift) * self.scale

    def invert(self, Z):
        Z = np.asarray(Z, dtype=float)
        return Z / self.scale + self.shift

    def drop(self, dim):
        """Transform with dimension `dim` removed (for marginalized models)."""
        keep = [k for k in range(self.d) if k != dim]
        return InputTransform(self.shift[keep], self.scale[keep])

    def __eq__(self, other):
        if not isinstance(other, InputTransform):
            return NotImplemented
        return np.array_equal(self.shift, other.shift) and np.array_equal(
            self.scale, other.scale
        )


def fit_transform(data, margin=0.05):
    """Fit the affine box transform on training data and apply it.

    Each column is mapped so the training minimum and maximum land exactly
    on margin and 1-margin.  Constant columns get unit scale, centered at
    0.5.  Returns (transform, transformed dataset).
    """
    if data.transformed:
        raise ValueError("dataset is already transformed; refusing to transform twice")
    if not 0.0 <= margin < 0.5:
        raise ValueError(f"margin must be in [0, 0.5), got {margin}")
    lo = data.X.min(axis=0)
    hi = data.X.max(axis=0)
    span = hi - lo
    constant = span <= 0
    with np.errstate(divide="ignore"):
        scale = np.where(constant, 1.0, (1.0 - 2.0 * margin) / np.where(constant, 1.0, span))
    shift = np.where(constant, lo - 0.5, lo - margin / scale)
    transform = InputTransform(shift, scale)
    transformed = Dataset(transform.apply(data.X), data.y, data.columns, transformed=True)
    return transform, transformed


def generate_spiral(n, noise_dims=0, seed=0):
    """Sample the noisy-spiral regression task.

    Sample t of n sits at radius 6t/n, angle 6*pi*t/n, plus Gaussian
    position noise with standard deviation t/(2n) per coordinate; the
    label is sin(4*pi*t/n) and carries no noise.  `noise_dims` extra
    columns are standard normal draws independent of the label.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    s = np.arange(1, n + 1) / n
    angle = 6.0 * np.pi * s
    base = 6.0 * s[:, None] * np.column_stack([np.cos(angle), np.sin(angle)])
    base += rng.standard_normal((n, 2)) * (s / 2.0)[:, None]
    y = np.sin(4.0 * np.pi * s)
    columns = ["x1", "x2"]
    if noise_dims > 0:
        extra = rng.standard_normal((n, noise_dims))
        base = np.hstack([base, extra])
        columns += [f"noise{i + 1}" for i in range(noise_dims)]
    return Dataset(base, y, columns)


def rmse(pred, truth):
    """Root mean squared error between two equal-length vectors."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def load_csv(path, label_column=None):
    """Load a delimited numeric text file into a Dataset.

    The delimiter is a comma when the first data line contains one,
    whitespace otherwise.  A header row is detected by failing to parse
    its cells as numbers.  `label_column` selects the label by header
    name or integer position; the default is the last column.  Rows with
    missing or non-numeric cells abort the load with their line numbers.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw_lines = fh.read().splitlines()
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc}") from exc

    lines = [(i + 1, ln.strip()) for i, ln in enumerate(raw_lines) if ln.strip()]
    if not lines:
        raise ValueError(f"{path} contains no data")

    delim = "," if "," in lines[0][1] else None

    def split(text):
        cells = [c.strip() for c in text.split(delim)]
        return [c for c in cells if c != ""] if delim is None else cells

    first = split(lines[0][1])
    header = None
    try:
        [float(c) for c in first]
    except ValueError:
        header = first
        lines = lines[1:]
        if not lines:
            raise ValueError(f"{path} contains a header but no data rows")

    width = len(split(lines[0][1]))
    rows = []
    bad = []
    for lineno, text in lines:
        cells = split(text)
        if len(cells) != width:
            bad.append(lineno)
            continue
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            bad.append(lineno)
    if bad:
        shown = ", ".join(str(b) for b in bad[:10])
        more = "" if len(bad) <= 10 else f" (+{len(bad) - 10} more)"
        raise ValueError(f"{path}: malformed rows at lines {shown}{more}")

    table = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(table)):
        raise ValueError(f"{path}: non-finite values in parsed data")

    label_idx = _resolve_label(label_column, header, width, path)
    feature_idx = [j for j in range(width) if j != label_idx]
    columns = [header[j] for j in feature_idx] if header else None
    return Dataset(table[:, feature_idx], table[:, label_idx], columns)


def _resolve_label(label_column, header, width, path):
    if label_column is None:
        return width - 1
    if isinstance(label_column, str):
        if header and label_column in header:
            return header.index(label_column)
        try:
            label_column = int(label_column)
        except ValueError:
            raise ValueError(f"{path}: no column named {label_column!r}") from None
    idx = int(label_column)
    if idx < 0:
        idx += width
    if not 0 <= idx < width:
        raise ValueError(f"{path}: label column {label_column} out of range for {width} columns")
    return idx


def save_csv(data, path):
    """Write a Dataset as comma-separated text with a header row."""
    columns = data.columns or [f"x{j + 1}" for j in range(data.d)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join([*columns, "y"]) + "\n")
        for row, label in zip(data.X, data.y):
            fh.write(",".join(repr(v) for v in row) + f",{label!r}\n")


def train_test_indices(n, test_fraction, seed):
    """Deterministic shuffled split, returned as (train_idx, test_idx)."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    cut = int(round(n * (1.0 - test_fraction)))
    return np.sort(perm[:cut]), np.sort(perm[cut:])
