"""Greedy regression over linear factored functions.

Outer loop: one factored basis function is fit to the current residual,
appended to the basis, and the linear weights are refit by ordinary least
squares; training stops when the Gram determinant of the sample-evaluated
basis collapses (the new basis is no longer linearly independent) or a
cap is reached.  Inner loop: coordinate descent over input dimensions in
a fresh random order per sweep; with all other factors fixed, the optimal
factor of one dimension solves a small regularized linear system in
closed form and is renormalized to unit length.

Empirical inner products are means over samples (1/n sums) throughout, so
the smoothness weights sigma2 keep the same meaning at every sample size.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import basis as basis_mod
from .basis import BasisSpec
from .data import Dataset, rmse
from .model import Lff, json_bytes


@dataclass
class TrainerConfig:
    """Knobs of the greedy trainer.

    sigma2 may be a scalar (shared by all dimensions) or one value per
    dimension.  eps_inner stops the inner loop once no dimension improves
    the surrogate cost by more than it; eps_det stops the outer loop once
    the basis Gram determinant det((1/n) Psi Psi^T) falls below it.
    max_inner_sweeps bounds the inner loop because the factor parameters
    can wander chaotically near convergence.
    """

    sigma2: float | list = 1e-4
    eps_inner: float = 1e-6
    eps_det: float = 1e-12
    basis_sizes: int | list = 50
    max_outer: int = 200
    max_inner_sweeps: int = 1000
    seed: int = 0
    cache_expansion: bool = True

    def __post_init__(self):
        if self.eps_inner <= 0 or self.eps_det <= 0:
            raise ValueError("eps_inner and eps_det must be positive")
        if self.max_outer < 1 or self.max_inner_sweeps < 1:
            raise ValueError("iteration caps must be >= 1")

    def sigma2_vector(self, d):
        sig = np.atleast_1d(np.asarray(self.sigma2, dtype=float))
        if sig.size == 1:
            sig = np.full(d, float(sig[0]))
        if sig.shape != (d,):
            raise ValueError(f"sigma2 must be scalar or length {d}, got {sig.shape}")
        if np.any(sig < 0):
            raise ValueError("sigma2 must be nonnegative")
        return sig

    def specs(self, d):
        sizes = np.atleast_1d(np.asarray(self.basis_sizes, dtype=int))
        if sizes.size == 1:
            sizes = np.full(d, int(sizes[0]))
        if sizes.shape != (d,):
            raise ValueError(f"basis_sizes must be scalar or length {d}, got {sizes.shape}")
        return [BasisSpec(int(s)) for s in sizes]


@dataclass
class FitDiagnostics:
    """Per-run training record; serializes to the same JSON family as models."""

    records: list
    final_m: int
    train_rmse: float
    stop_reason: str
    jitter_events: int
    rejected_steps: int
    fallback_steps: int
    seed: int
    sigma2: list
    basis_sizes: list
    n: int

    def to_dict(self):
        return {
            "format": "lff-diagnostics",
            "version": 1,
            "records": self.records,
            "final_m": self.final_m,
            "train_rmse": self.train_rmse,
            "stop_reason": self.stop_reason,
            "jitter_events": self.jitter_events,
            "rejected_steps": self.rejected_steps,
            "fallback_steps": self.fallback_steps,
            "seed": self.seed,
            "sigma2": list(self.sigma2),
            "basis_sizes": list(self.basis_sizes),
            "n": self.n,
        }

    def dumps(self):
        return json_bytes(self.to_dict())

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.dumps())


@dataclass
class TrainerState:
    """Mutable working set of one fit.

    Accepted model: B (one (m_k, m) matrix per dimension), weights a,
    sample values f and the basis evaluation matrix Psi (m, n).
    Candidate basis function: factor coefficients b[k] (unit norm) and
    their sample values g[k].
    """

    X: np.ndarray
    y: np.ndarray
    specs: list
    sigma2: np.ndarray
    dot_diag: list
    B: list
    a: np.ndarray
    Psi: np.ndarray
    f: np.ndarray
    b: list = field(default_factory=list)
    g: list = field(default_factory=list)
    cache: list | None = None
    jitter_events: int = 0
    rejected_steps: int = 0
    fallback_steps: int = 0

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def m(self):
        return len(self.a)

    def expansion(self, k):
        """Basis evaluations Phi^k of shape (m_k, n), cached when enabled."""
        if self.cache is not None:
            return self.cache[k]
        return basis_mod.sample_matrix(self.specs[k], self.X[:, k])

    def others_product(self, k):
        p = np.ones(self.n)
        for l in range(self.d):
            if l != k:
                p = p * self.g[l]
        return p

    def reset_candidate(self):
        self.b = []
        self.g = []
        for spec in self.specs:
            e1 = np.zeros(spec.size)
            e1[0] = 1.0
            self.b.append(e1)
            self.g.append(np.ones(self.n))

    def set_factor(self, k, b_new):
        self.b[k] = b_new
        self.g[k] = self.expansion(k).T @ b_new

    def candidate_values(self):
        p = np.ones(self.n)
        for gk in self.g:
            p = p * gk
        return p

    def set_model(self, B, a):
        """Install an accepted model and recompute Psi and f from it."""
        self.B = [np.asarray(bk, dtype=float) for bk in B]
        self.a = np.asarray(a, dtype=float)
        m = len(self.a)
        psi = np.ones((m, self.n))
        for k in range(self.d):
            psi *= self.B[k].T @ self.expansion(k)
        self.Psi = psi
        self.f = psi.T @ self.a if m else np.zeros(self.n)


def make_state(X, y, specs, sigma2, cache_expansion=True):
    """Fresh trainer state with an empty model and a constant candidate."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    sigma2 = np.asarray(sigma2, dtype=float)
    dot_diag = [basis_mod.derivative_gram_diagonal(spec) for spec in specs]
    cache = None
    if cache_expansion:
        cache = [basis_mod.sample_matrix(specs[k], X[:, k]) for k in range(d)]
    state = TrainerState(
        X=X,
        y=y,
        specs=specs,
        sigma2=sigma2,
        dot_diag=dot_diag,
        B=[np.zeros((spec.size, 0)) for spec in specs],
        a=np.zeros(0),
        Psi=np.zeros((0, n)),
        f=np.zeros(n),
        cache=cache,
    )
    state.reset_candidate()
    return state


# ---- linear algebra with the shared jitter policy ----


def solve_psd(A, rhs):
    """Cholesky solve; escalating diagonal jitter when pivots fail.

    Returns (solution, jittered).  The starting jitter is
    1e-10 * trace(A)/m as a scale-free perturbation.
    """
    try:
        return cho_solve(cho_factor(A, lower=True), rhs), False
    except np.linalg.LinAlgError:
        pass
    m = A.shape[0]
    trace = float(np.trace(A))
    jitter = 1e-10 * (trace / m if trace > 0 else 1.0)
    eye = np.eye(m)
    for _ in range(8):
        try:
            return cho_solve(cho_factor(A + jitter * eye, lower=True), rhs), True
        except np.linalg.LinAlgError:
            jitter *= 10.0
    x, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return x, True


def sphere_minimizer(C, w):
    """Global minimizer of b^T C b - 2 b^T w over the unit sphere.

    Standard trust-region subproblem at radius 1: b = (C - lam I)^{-1} w
    with lam below the smallest eigenvalue chosen so the norm is one, or,
    when w has no component on the bottom eigenspace and the rest stays
    inside the sphere, the bottom eigenvector fills the missing norm.
    """
    C = 0.5 * (C + C.T)
    evals, V = np.linalg.eigh(C)
    wt = V.T @ w
    dmin = float(evals[0])
    scale = max(1.0, float(np.linalg.norm(wt)), float(abs(dmin)))

    # norm at lam -> dmin using only eigendirections above the bottom
    bottom = evals <= dmin + 1e-12 * scale
    rest = ~bottom
    b_at_dmin = np.zeros_like(wt)
    b_at_dmin[rest] = wt[rest] / (evals[rest] - dmin)
    s2 = float(np.sum(b_at_dmin**2))
    if np.all(np.abs(wt[bottom]) <= 1e-12 * scale) and s2 <= 1.0:
        idx = int(np.argmax(bottom))
        b_at_dmin[idx] = np.sqrt(max(1.0 - s2, 0.0))
        b = V @ b_at_dmin
        return b / np.linalg.norm(b)

    def norm2(lam):
        return float(np.sum((wt / (evals - lam)) ** 2))

    lo = dmin - max(float(np.linalg.norm(wt)), 1e-30)
    hi = dmin - 1e-18 * scale
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if norm2(mid) > 1.0:
            hi = mid
        else:
            lo = mid
    b = V @ (wt / (evals - lo))
    return b / np.linalg.norm(b)


def _ols(Psi, y):
    if Psi.shape[0] > Psi.shape[1]:
        raise ValueError("more basis functions than samples")
    return solve_psd(Psi @ Psi.T, Psi @ y)


def ols_refit(Psi, y):
    """Least-squares weights for basis rows Psi (m, n) against labels y."""
    a, _ = _ols(Psi, np.asarray(y, dtype=float))
    return a


def gram_logdet(Psi, n):
    """log det((1/n) Psi Psi^T); -inf for a singular or indefinite Gram."""
    sign, logdet = np.linalg.slogdet(Psi @ Psi.T / n)
    return float(logdet) if sign > 0 else -math.inf


def should_stop(Psi, n, eps_det):
    """True when the basis Gram determinant signals linear dependence."""
    if Psi.shape[0] == 0:
        raise ValueError("Psi must contain at least one basis row")
    return gram_logdet(Psi, n) < math.log(eps_det)


# ---- inner loop ----


def compute_regularizer_gradient(state, k):
    """Gradient of each smoothness cross term w.r.t. the k-th factor.

    Returns R of shape (m_k, d); column l is the derivative of
    <d_l g, d_l f> under the uniform measure.  Zero when no basis has
    been accepted yet.
    """
    m_k = state.specs[k].size
    R = np.zeros((m_k, state.d))
    if state.m == 0:
        return R
    u = [state.B[l].T @ state.b[l] for l in range(state.d)]
    udot = [state.B[l].T @ (state.dot_diag[l] * state.b[l]) for l in range(state.d)]
    for l in range(state.d):
        if l == k:
            w = state.a.copy()
            for s in range(state.d):
                if s != k:
                    w = w * u[s]
            R[:, l] = state.dot_diag[k] * (state.B[k] @ w)
        else:
            w = state.a * udot[l]
            for s in range(state.d):
                if s != k and s != l:
                    w = w * u[s]
            R[:, l] = state.B[k] @ w
    return R


def inner_update(state, k):
    """Closed-form update of factor k with all other factors fixed.

    Builds the regularized covariance (empirical Gram of the basis
    modulated by the other factors, plus sigma2_k times the derivative
    Gram), solves for the unconstrained optimum, renormalizes, and
    returns (new factor, improvement).  The improvement is the exact
    decrease of the surrogate cost; both the old and new factor have unit
    norm, so terms contributed by the other dimensions cancel.  The
    renormalized solution is not always the constrained sphere optimum:
    steps are accepted down to one nano-unit of cost increase (round-off
    chatter near convergence), and a step that would increase the cost
    beyond that falls back to the exact sphere minimizer, which can never
    increase it; when even that offers no improvement, the old factor is
    already optimal for this dimension and is kept with zero improvement.
    """
    phi = state.expansion(k)
    p = state.others_product(k)
    n = state.n
    weighted = phi * p
    C_bar = weighted @ weighted.T / n
    C_bar[np.diag_indices_from(C_bar)] += state.sigma2[k] * state.dot_diag[k]
    v = weighted @ (state.y - state.f) / n
    R = compute_regularizer_gradient(state, k)
    rhs = v - R @ state.sigma2
    b_old = state.b[k]

    def decrease(b):
        return float(
            b_old @ C_bar @ b_old - b @ C_bar @ b - 2.0 * (b_old - b) @ rhs
        )

    b_uc, jittered = solve_psd(C_bar, rhs)
    if jittered:
        state.jitter_events += 1
    nrm = float(np.linalg.norm(b_uc))
    if not np.isfinite(nrm) or nrm < 1e-12:
        # the residual no longer pulls the factor anywhere at unit scale
        return b_old.copy(), 0.0
    b_new = b_uc / nrm
    h = decrease(b_new)
    if h >= -1e-9:
        return b_new, max(h, 0.0)
    state.fallback_steps += 1
    b_star = sphere_minimizer(C_bar, rhs)
    h = decrease(b_star)
    if h <= 0.0:
        state.rejected_steps += 1
        return b_old.copy(), 0.0
    return b_star, h


def surrogate_cost(state, candidate=None):
    """Regularized cost of a candidate basis function against the residual.

    Mean squared data term over the samples plus, per dimension, sigma2_k
    times the squared derivative norm of candidate-plus-model.  Used by
    tests and diagnostics, not on the hot path.
    """
    bs = state.b if candidate is None else candidate
    gvals = np.ones(state.n)
    for l in range(state.d):
        gvals = gvals * (state.expansion(l).T @ bs[l])
    resid = state.y - state.f
    cost = float(np.mean((gvals - resid) ** 2))

    norms = [float(bk @ bk) for bk in bs]
    if state.m:
        u = [state.B[l].T @ bs[l] for l in range(state.d)]
        udot = [state.B[l].T @ (state.dot_diag[l] * bs[l]) for l in range(state.d)]
        M = [state.B[l].T @ state.B[l] for l in range(state.d)]
        Mdot = [
            state.B[l].T @ (state.dot_diag[l][:, None] * state.B[l])
            for l in range(state.d)
        ]
    for k in range(state.d):
        quad = float(bs[k] @ (state.dot_diag[k] * bs[k]))
        for l in range(state.d):
            if l != k:
                quad *= norms[l]
        term = quad
        if state.m:
            cross = state.a * udot[k]
            ff = Mdot[k].copy()
            for l in range(state.d):
                if l != k:
                    cross = cross * u[l]
                    ff = ff * M[l]
            term += 2.0 * float(np.sum(cross)) + float(state.a @ ff @ state.a)
        cost += state.sigma2[k] * term
    return cost


# ---- outer loop ----


def fit(data, config=None):
    """Train a linear factored function on a dataset in box coordinates.

    The dataset must already live in [0, 1]^d (use fit_transform from the
    data module; the returned transform is attached by the harness, not
    here).  Returns (model, diagnostics).
    """
    if config is None:
        config = TrainerConfig()
    if not isinstance(data, Dataset):
        raise TypeError("fit expects a Dataset")
    X, y = data.X, data.y
    if not data.transformed and (X.min() < 0.0 or X.max() > 1.0):
        raise ValueError(
            "inputs are outside [0, 1] and not tagged as transformed; "
            "apply fit_transform first"
        )
    n, d = X.shape
    sigma2 = config.sigma2_vector(d)
    specs = config.specs(d)
    state = make_state(X, y, specs, sigma2, config.cache_expansion)
    rng = np.random.default_rng(config.seed)
    log_eps_det = math.log(config.eps_det)

    records = []
    stop_reason = "max_outer"
    train_rmse = rmse(state.f, y)

    while state.m < config.max_outer:
        state.reset_candidate()
        h = np.full(d, np.inf)
        sweeps = 0
        converged = False
        while sweeps < config.max_inner_sweeps:
            sweeps += 1
            for k in rng.permutation(d):
                b_new, h[k] = inner_update(state, k)
                state.set_factor(k, b_new)
            if h.max() <= config.eps_inner:
                converged = True
                break

        g_row = state.candidate_values()
        Psi_new = np.vstack([state.Psi, g_row[None, :]])
        logdet = gram_logdet(Psi_new, n)
        if logdet < log_eps_det:
            # the converged basis is linearly dependent on the accepted ones;
            # drop it and stop
            stop_reason = "dependent_basis"
            break

        cost = surrogate_cost(state)
        a_new, jittered = _ols(Psi_new, y)
        if jittered:
            state.jitter_events += 1
        f_new = Psi_new.T @ a_new
        rmse_new = rmse(f_new, y)
        if state.m > 0 and rmse_new > train_rmse:
            # refit can only be worse through round-off; extending the old
            # weights with zero keeps the residual exactly non-increasing
            a_new = np.append(state.a, 0.0)
            f_new = state.f
            rmse_new = train_rmse

        state.B = [
            np.hstack([state.B[k], state.b[k][:, None]]) for k in range(d)
        ]
        state.a = a_new
        state.Psi = Psi_new
        state.f = f_new
        train_rmse = rmse_new
        records.append(
            {
                "m": state.m,
                "inner_sweeps": sweeps,
                "inner_converged": converged,
                "surrogate_cost": cost,
                "train_rmse": rmse_new,
                "gram_logdet": logdet,
                "ols_jittered": jittered,
            }
        )

    model = Lff(state.a, state.B, specs, transform=None, normalized=True)
    diagnostics = FitDiagnostics(
        records=records,
        final_m=state.m,
        train_rmse=train_rmse,
        stop_reason=stop_reason,
        jitter_events=state.jitter_events,
        rejected_steps=state.rejected_steps,
        fallback_steps=state.fallback_steps,
        seed=config.seed,
        sigma2=[float(s) for s in sigma2],
        basis_sizes=[spec.size for spec in specs],
        n=n,
    )
    return model, diagnostics


def compress(model, config=None, n_samples=4096, seed=0):
    """Refit a (typically product-grown) model with a fresh small basis.

    Samples the model on uniform box points and trains a new function on
    those values; the convenience counterpart of growing models through
    point-wise products.  Returns (model, diagnostics).
    """
    rng = np.random.default_rng(seed)
    X = rng.random((n_samples, model.d))
    y = model.evaluate(X)
    compressed, diagnostics = fit(Dataset(X, y, transformed=True), config)
    if model.transform is not None:
        compressed = compressed.with_transform(model.transform)
    return compressed, diagnostics
