"""Linear factored functions and their algebra.

A model with m basis functions over d inputs is

    f(x) = sum_i a_i * prod_k ( B^k[:, i] . phi^k(x_k) ),

with one coefficient matrix B^k of shape (m_k, m) per input dimension and
phi^k the cosine basis of that dimension.  Because the uniform product
measure factorizes, inner products reduce to per-dimension dot products,
marginals drop a dimension in closed form, and point-wise products turn
into index convolutions of cosine coefficients.

Trained models keep every factor at unit norm per dimension; values
produced by the algebra (products, marginals) do not, and carry
``normalized=False``.
"""

import base64
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import basis
from .basis import SQRT2, BasisSpec
from .data import InputTransform

FORMAT_NAME = "lff-model"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """A model document failed to parse; the message names the field."""


@dataclass(frozen=True)
class Lff:
    """Immutable linear factored function.

    a         -- linear weights, shape (m,)
    B         -- list of d coefficient matrices, B[k] of shape (m_k, m)
    specs     -- list of d BasisSpec
    transform -- optional raw-to-box InputTransform, kept so a serialized
                 model is self-contained
    normalized -- whether every column of every B[k] has unit norm
    """

    a: np.ndarray
    B: list
    specs: list
    transform: InputTransform | None = None
    normalized: bool = True

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "B", [np.asarray(b, dtype=float) for b in self.B])
        if self.a.ndim != 1:
            raise ValueError(f"a must be 1-D, got shape {self.a.shape}")
        if len(self.B) != len(self.specs):
            raise ValueError("one coefficient matrix per basis spec is required")
        m = len(self.a)
        for k, (b, spec) in enumerate(zip(self.B, self.specs)):
            if b.shape != (spec.size, m):
                raise ValueError(
                    f"B[{k}] must have shape ({spec.size}, {m}), got {b.shape}"
                )
        if self.transform is not None and self.transform.d != len(self.specs):
            raise ValueError("transform dimension does not match the model")

    # ---- shape ----

    @property
    def d(self):
        return len(self.specs)

    @property
    def m(self):
        return len(self.a)

    @property
    def basis_sizes(self):
        return [spec.size for spec in self.specs]

    # ---- evaluation ----

    def evaluate(self, X):
        """Predictions at points already in unit-box coordinates.

        X has shape (n, d); coordinates outside [0, 1] are clamped by the
        basis.  Returns a vector of n values.
        """
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise ValueError(f"expected X of shape (n, {self.d}), got {X.shape}")
        n = X.shape[0]
        if self.m == 0:
            return np.zeros(n)
        psi = np.ones((self.m, n))
        for k, spec in enumerate(self.specs):
            psi *= self.B[k].T @ basis.sample_matrix(spec, X[:, k])
        return psi.T @ self.a

    def predict(self, X):
        """Predictions at raw points; applies the stored transform first."""
        X = np.asarray(X, dtype=float)
        if self.transform is not None:
            X = self.transform.apply(X)
        return self.evaluate(X)

    # ---- algebra ----

    def inner_product(self, other):
        """<f, g> under the uniform product measure on the unit box.

        Factorizes into a product of per-dimension dot products because
        the basis Gram matrices are the identity.
        """
        self._check_same_specs(other)
        if self.m == 0 or other.m == 0:
            return 0.0
        M = np.ones((self.m, other.m))
        for k in range(self.d):
            M *= self.B[k].T @ other.B[k]
        return float(self.a @ M @ other.a)

    def norm(self):
        return float(np.sqrt(max(self.inner_product(self), 0.0)))

    def marginalize(self, dim):
        """Integrate out input dimension `dim` (0-based).

        Only the constant coefficient of each factor survives the uniform
        average, so the new weights are a_i * B[dim][0, i] and all other
        coefficient matrices are unchanged.  The result is unnormalized.
        """
        if not 0 <= dim < self.d:
            raise ValueError(f"dimension {dim} out of range for d={self.d}")
        new_a = self.a * self.B[dim][0, :]
        keep = [k for k in range(self.d) if k != dim]
        return Lff(
            new_a,
            [self.B[k] for k in keep],
            [self.specs[k] for k in keep],
            self.transform.drop(dim) if self.transform is not None else None,
            normalized=False,
        )

    def pointwise_product(self, other, lowpass=None):
        """The function x -> f(x) * g(x), again a linear factored function.

        The result has m*m' basis functions and doubled per-dimension basis
        sizes; with `lowpass` set, per-dimension coefficients beyond that
        size are dropped (a projection, so applying it twice is a no-op).
        Without lowpass the product is exact.
        """
        self._check_same_specs(other)
        if lowpass is not None and lowpass < 1:
            raise ValueError(f"lowpass cutoff must be >= 1, got {lowpass}")
        transform = self._merge_transform(other)
        new_a = np.outer(self.a, other.a).ravel()
        new_B = []
        new_specs = []
        for k, spec in enumerate(self.specs):
            W = _product_columns(_to_plain(self.B[k]), _to_plain(other.B[k]))
            if lowpass is not None:
                W = W[: min(lowpass, W.shape[0])]
            new_B.append(_from_plain(W))
            new_specs.append(BasisSpec(W.shape[0]))
        return Lff(new_a, new_B, new_specs, transform, normalized=False)

    def _check_same_specs(self, other):
        if self.specs != other.specs:
            raise ValueError(
                f"operands use different bases: {self.basis_sizes} vs {other.basis_sizes}"
            )

    def _merge_transform(self, other):
        if self.transform is None:
            return other.transform
        if other.transform is None or other.transform == self.transform:
            return self.transform
        raise ValueError("operands carry different input transforms")

    def with_transform(self, transform):
        return replace(self, transform=transform)

    # ---- serialization ----

    def to_dict(self, binary=False):
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "kind": "cosine",
            "d": self.d,
            "m": self.m,
            "basis_sizes": self.basis_sizes,
            "normalized": bool(self.normalized),
            "a": _encode_array(self.a, binary),
            "B": [_encode_array(b, binary) for b in self.B],
            "transform": None
            if self.transform is None
            else {
                "shift": _encode_array(self.transform.shift, binary),
                "scale": _encode_array(self.transform.scale, binary),
            },
        }


def _to_plain(B):
    """Orthonormal coefficients -> plain cos((j-1) pi x) coefficients."""
    P = B.copy()
    P[1:] *= SQRT2
    return P


def _from_plain(P):
    B = P.copy()
    B[1:] /= SQRT2
    return B


def _product_columns(U, V):
    """Plain-cosine coefficients of all pairwise products of the columns.

    cos(q pi x) cos(r pi x) = (cos((q-r) pi x) + cos((q+r) pi x)) / 2, so
    each output column is half the convolution of the inputs (frequency
    sums) plus half their correlation folded onto nonnegative lags
    (frequency differences).  Output has 2*m_k rows; the last row is
    always zero but keeps the documented doubled size.
    """
    m_k, m = U.shape
    mbar = V.shape[1]
    out = np.zeros((2 * m_k, m * mbar))
    s = np.arange(1, m_k)
    for i in range(m):
        u = U[:, i]
        for j in range(mbar):
            v = V[:, j]
            conv = np.convolve(u, v)
            cross = np.convolve(u, v[::-1])
            w = np.zeros(2 * m_k)
            w[: 2 * m_k - 1] = 0.5 * conv
            w[0] += 0.5 * cross[m_k - 1]
            if m_k > 1:
                w[1:m_k] += 0.5 * (cross[m_k - 1 + s] + cross[m_k - 1 - s])
            out[:, i * mbar + j] = w
    return out


# ---- model documents ----


def _encode_array(arr, binary):
    arr = np.asarray(arr, dtype=float)
    if not binary:
        return arr.tolist()
    return {
        "dtype": "<f8",
        "shape": list(arr.shape),
        "data": base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode(
            "ascii"
        ),
    }


def _decode_array(value, field_name, shape=None):
    if isinstance(value, dict):
        for key in ("dtype", "shape", "data"):
            if key not in value:
                raise ModelFormatError(f"field '{field_name}': missing '{key}' entry")
        if value["dtype"] != "<f8":
            raise ModelFormatError(
                f"field '{field_name}': unsupported dtype {value['dtype']!r}"
            )
        try:
            buf = base64.b64decode(value["data"], validate=True)
            arr = np.frombuffer(buf, dtype="<f8").reshape(value["shape"]).astype(float)
        except (ValueError, TypeError) as exc:
            raise ModelFormatError(f"field '{field_name}': {exc}") from exc
    else:
        try:
            arr = np.asarray(value, dtype=float)
        except (ValueError, TypeError) as exc:
            raise ModelFormatError(f"field '{field_name}': not a numeric array") from exc
    if shape is not None and arr.shape != shape:
        raise ModelFormatError(
            f"field '{field_name}': expected shape {shape}, got {arr.shape}"
        )
    return arr


def _require(doc, field_name, kind):
    if field_name not in doc:
        raise ModelFormatError(f"field '{field_name}': missing")
    value = doc[field_name]
    if kind is int and isinstance(value, bool):
        raise ModelFormatError(f"field '{field_name}': expected integer")
    if kind is not None and not isinstance(value, kind):
        raise ModelFormatError(
            f"field '{field_name}': expected {getattr(kind, '__name__', kind)}"
        )
    return value


def from_dict(doc):
    """Rebuild a model from its document form, validating field by field."""
    if not isinstance(doc, dict):
        raise ModelFormatError("field 'format': document is not a mapping")
    fmt = _require(doc, "format", str)
    if fmt != FORMAT_NAME:
        raise ModelFormatError(f"field 'format': expected {FORMAT_NAME!r}, got {fmt!r}")
    version = _require(doc, "version", int)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"field 'version': unsupported version {version}")
    kind = _require(doc, "kind", str)
    if kind != "cosine":
        raise ModelFormatError(f"field 'kind': unsupported basis kind {kind!r}")
    d = _require(doc, "d", int)
    m = _require(doc, "m", int)
    if d < 0:
        raise ModelFormatError("field 'd': must be nonnegative")
    if m < 0:
        raise ModelFormatError("field 'm': must be nonnegative")
    sizes = _require(doc, "basis_sizes", list)
    if len(sizes) != d or not all(isinstance(s, int) and s >= 1 for s in sizes):
        raise ModelFormatError("field 'basis_sizes': needs one positive size per dimension")
    normalized = _require(doc, "normalized", bool)
    a = _decode_array(_require(doc, "a", None), "a", shape=(m,))
    B_doc = _require(doc, "B", list)
    if len(B_doc) != d:
        raise ModelFormatError(f"field 'B': expected {d} matrices, got {len(B_doc)}")
    B = [
        _decode_array(entry, f"B[{k}]", shape=(sizes[k], m))
        for k, entry in enumerate(B_doc)
    ]
    transform_doc = _require(doc, "transform", None)
    transform = None
    if transform_doc is not None:
        if not isinstance(transform_doc, dict):
            raise ModelFormatError("field 'transform': expected mapping or null")
        shift = _decode_array(
            _require(transform_doc, "shift", None), "transform.shift", shape=(d,)
        )
        scale = _decode_array(
            _require(transform_doc, "scale", None), "transform.scale", shape=(d,)
        )
        if np.any(scale <= 0):
            raise ModelFormatError("field 'transform.scale': entries must be positive")
        transform = InputTransform(shift, scale)
    specs = [BasisSpec(int(s)) for s in sizes]
    return Lff(a, B, specs, transform, normalized=normalized)


def json_bytes(doc):
    """Deterministic UTF-8 JSON used for every document this package writes."""
    return (json.dumps(doc, indent=1, sort_keys=True) + "\n").encode("utf-8")


def dumps(model, binary=False):
    """Serialize a model to bytes (UTF-8 JSON; arrays base64 when binary)."""
    return json_bytes(model.to_dict(binary=binary))


def loads(data):
    """Inverse of dumps.  Raises ModelFormatError on malformed input."""
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"field 'format': truncated or malformed JSON ({exc})") from exc
    return from_dict(doc)


def save(model, path, binary=False):
    with open(path, "wb") as fh:
        fh.write(dumps(model, binary=binary))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
