import math

import numpy as np
import pytest

from lff.basis import BasisSpec, sample_matrix
from lff.data import Dataset, rmse
from lff.model import loads, dumps
from lff.trainer import (
    TrainerConfig,
    compress,
    compute_regularizer_gradient,
    fit,
    gram_logdet,
    inner_update,
    make_state,
    ols_refit,
    should_stop,
    solve_psd,
    sphere_minimizer,
    surrogate_cost,
)

SQRT2 = math.sqrt(2.0)


def build_state(rng, n=40, d=2, m_k=5, m=3, sigma2=(1e-3, 1e-2)):
    """Random state with an accepted model of unit-norm columns installed."""
    X = rng.random((n, d))
    y = rng.standard_normal(n)
    specs = [BasisSpec(m_k) for _ in range(d)]
    state = make_state(X, y, specs, np.asarray(sigma2, dtype=float)[:d])
    if m:
        B = []
        for _ in range(d):
            Bk = rng.standard_normal((m_k, m))
            Bk /= np.linalg.norm(Bk, axis=0, keepdims=True)
            B.append(Bk)
        state.set_model(B, rng.standard_normal(m))
    for k in range(d):
        b = rng.standard_normal(m_k)
        state.set_factor(k, b / np.linalg.norm(b))
    return state


def naive_dl_inner(state, l, bs):
    """<d_l g, d_l f> by explicit sums, independent of the production path."""
    total = 0.0
    for i in range(state.m):
        term = state.a[i]
        for s in range(state.d):
            col = state.B[s][:, i]
            if s == l:
                term *= sum(
                    bs[s][j] * state.dot_diag[s][j] * col[j] for j in range(len(col))
                )
            else:
                term *= float(bs[s] @ col)
        total += term
    return total


def naive_surrogate_cost(state, bs):
    """Per-sample and per-index loops mirroring the cost definition."""
    n, d = state.n, state.d
    data = 0.0
    for t in range(n):
        g = 1.0
        for k in range(d):
            xk = state.X[t, k]
            val = 0.0
            for j in range(state.specs[k].size):
                base = 1.0 if j == 0 else SQRT2 * math.cos(j * math.pi * xk)
                val += bs[k][j] * base
            g *= val
        data += (g - (state.y[t] - state.f[t])) ** 2
    cost = data / n
    for k in range(d):
        quad = sum(bs[k][j] ** 2 * state.dot_diag[k][j] for j in range(len(bs[k])))
        for l in range(d):
            if l != k:
                quad *= float(bs[l] @ bs[l])
        term = quad + 2.0 * naive_dl_inner(state, k, bs)
        # || d_k f ||^2 with explicit sums over basis pairs
        ff = 0.0
        for i in range(state.m):
            for j in range(state.m):
                piece = state.a[i] * state.a[j]
                for s in range(d):
                    ci, cj = state.B[s][:, i], state.B[s][:, j]
                    if s == k:
                        piece *= float(np.sum(ci * state.dot_diag[s] * cj))
                    else:
                        piece *= float(ci @ cj)
                ff += piece
        cost += state.sigma2[k] * (term + ff)
    return cost


# ---- least squares and stopping ----


def test_ols_constant_row_gives_mean(rng):
    y = rng.standard_normal(30)
    a = ols_refit(np.ones((1, 30)), y)
    assert a[0] == pytest.approx(float(np.mean(y)), rel=1e-12)


def test_ols_residual_orthogonality(rng):
    Psi = rng.standard_normal((3, 50))
    y = rng.standard_normal(50)
    a = ols_refit(Psi, y)
    assert np.linalg.norm(Psi @ (Psi.T @ a - y)) <= 1e-8


def test_ols_duplicate_rows_jittered(rng):
    row = rng.standard_normal(20)
    Psi = np.vstack([row, row])
    a, jittered = solve_psd(Psi @ Psi.T, Psi @ rng.standard_normal(20))
    assert jittered
    assert np.all(np.isfinite(a))
    assert np.all(np.isfinite(ols_refit(Psi, rng.standard_normal(20))))


def test_ols_rejects_more_rows_than_samples(rng):
    with pytest.raises(ValueError):
        ols_refit(rng.standard_normal((5, 3)), rng.standard_normal(3))


def test_should_stop_on_duplicate_rows(rng):
    row = rng.standard_normal(25)
    assert should_stop(np.vstack([row, row]), 25, 1e-12)


def test_should_stop_keeps_orthonormal_rows():
    n = 16
    Psi = np.zeros((2, n))
    Psi[0, :] = 1.0
    Psi[1, :] = np.tile([1.0, -1.0], n // 2)
    # (1/n) Psi Psi^T is the identity here
    assert gram_logdet(Psi, n) == pytest.approx(0.0, abs=1e-12)
    assert not should_stop(Psi, n, 0.5)


# ---- regularizer gradient ----


def test_regularizer_gradient_zero_without_model(rng):
    state = build_state(rng, m=0)
    np.testing.assert_array_equal(
        compute_regularizer_gradient(state, 0), np.zeros((5, 2))
    )


@pytest.mark.parametrize("d,k", [(1, 0), (2, 0), (2, 1)])
def test_regularizer_gradient_matches_finite_differences(rng, d, k):
    state = build_state(rng, d=d, m=2, sigma2=(1e-3, 1e-2)[:d])
    R = compute_regularizer_gradient(state, k)
    eps = 1e-6
    for l in range(d):
        for j in range(state.specs[k].size):
            bs_hi = [b.copy() for b in state.b]
            bs_lo = [b.copy() for b in state.b]
            bs_hi[k][j] += eps
            bs_lo[k][j] -= eps
            fd = (naive_dl_inner(state, l, bs_hi) - naive_dl_inner(state, l, bs_lo)) / (
                2.0 * eps
            )
            assert R[j, l] == pytest.approx(fd, rel=1e-4, abs=1e-8)


# ---- inner update ----


def test_inner_update_degenerate_single_sample():
    state = make_state(
        np.array([[0.3]]), np.array([0.0]), [BasisSpec(4)], np.array([1e-2])
    )
    b, h = inner_update(state, 0)
    assert np.isfinite(h)
    assert float(b @ b) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("labels", [(1, 1), (1, -1), (-1, 1), (-1, -1)])
def test_inner_update_matches_sphere_search(labels):
    # two symmetric samples, m_k = 2: brute-force the unit sphere by angle
    sigma2 = 1e-6
    X = np.array([[0.25], [0.75]])
    y = np.asarray(labels, dtype=float)
    state = make_state(X, y, [BasisSpec(2)], np.array([sigma2]))

    phi = sample_matrix(BasisSpec(2), X[:, 0])  # columns are the two samples

    def direct_cost(theta):
        b = np.array([np.cos(theta), np.sin(theta)])
        g = phi.T @ b
        return float(np.mean((g - y) ** 2)) + sigma2 * (np.pi**2) * b[1] ** 2

    thetas = np.arange(0.0, 2.0 * np.pi, 1e-3)
    costs = [direct_cost(t) for t in thetas]
    best = thetas[int(np.argmin(costs))]
    b_star = np.array([np.cos(best), np.sin(best)])

    b, h = inner_update(state, 0)
    angle = np.arccos(np.clip(float(b @ b_star), -1.0, 1.0))
    assert angle <= 2e-3
    assert h >= 0.0


def test_inner_update_improvement_equals_cost_decrease(rng):
    for trial in range(5):
        state = build_state(rng, m=3 if trial % 2 else 0)
        for k in range(state.d):
            before = surrogate_cost(state)
            b_new, h = inner_update(state, k)
            candidate = [b.copy() for b in state.b]
            candidate[k] = b_new
            after = surrogate_cost(state, candidate)
            assert h == pytest.approx(before - after, rel=1e-6, abs=1e-9)
            state.set_factor(k, b_new)


def test_inner_update_never_needs_jitter_with_positive_sigma2(rng):
    state = build_state(rng, m=2)
    for k in range(state.d):
        inner_update(state, k)
    assert state.jitter_events == 0


def test_sphere_minimizer_beats_grid(rng):
    # global sphere optimum in 2-D against an angle sweep
    for _ in range(5):
        A = rng.standard_normal((2, 2))
        C = A @ A.T + 0.1 * np.eye(2)
        w = rng.standard_normal(2)
        b = sphere_minimizer(C, w)
        assert float(b @ b) == pytest.approx(1.0, abs=1e-10)
        val = float(b @ C @ b - 2.0 * b @ w)
        thetas = np.arange(0.0, 2.0 * np.pi, 1e-4)
        bs = np.column_stack([np.cos(thetas), np.sin(thetas)])
        grid = np.einsum("ij,jk,ik->i", bs, C, bs) - 2.0 * bs @ w
        assert val <= float(grid.min()) + 1e-6


def test_sphere_minimizer_zero_moment_returns_bottom_eigenvector():
    C = np.diag([3.0, 1.0, 2.0])
    b = sphere_minimizer(C, np.zeros(3))
    assert abs(b[1]) == pytest.approx(1.0, abs=1e-12)


# ---- surrogate cost ----


def test_cost_of_zero_candidate_is_mean_square_labels(rng):
    state = build_state(rng, m=0)
    zero = [np.zeros(spec.size) for spec in state.specs]
    assert surrogate_cost(state, zero) == pytest.approx(float(np.mean(state.y**2)))


def test_cost_of_matching_constant_is_zero(rng):
    n, d = 25, 2
    X = rng.random((n, d))
    c = 1.7
    state = make_state(
        X, np.full(n, c), [BasisSpec(4)] * d, np.array([1e-2, 1e-3])
    )
    bs = []
    for k in range(d):
        e1 = np.zeros(4)
        e1[0] = c if k == 0 else 1.0
        bs.append(e1)
    assert surrogate_cost(state, bs) == pytest.approx(0.0, abs=1e-25)


def test_cost_matches_naive_reimplementation(rng):
    for m in (0, 3):
        state = build_state(rng, n=20, m=m)
        assert surrogate_cost(state) == pytest.approx(
            naive_surrogate_cost(state, state.b), abs=1e-10, rel=1e-10
        )


# ---- monotonicity ----


def test_inner_loop_cost_is_monotone(rng):
    state = build_state(rng, n=60, d=2, m_k=6, m=2)
    order = list(range(state.d)) * 20
    rng.shuffle(order)
    cost = surrogate_cost(state)
    for k in order:
        b_new, h = inner_update(state, k)
        state.set_factor(k, b_new)
        new_cost = surrogate_cost(state)
        assert new_cost <= cost + 1e-9
        cost = new_cost


# ---- fit ----


def test_fit_constant_labels(rng):
    X = rng.random((80, 2))
    data = Dataset(X, np.full(80, 5.0), transformed=True)
    model, diag = fit(data, TrainerConfig(sigma2=1e-3, basis_sizes=8))
    assert model.m == 1
    assert diag.train_rmse <= 1e-8
    np.testing.assert_allclose(model.evaluate(rng.random((10, 2))), 5.0, atol=1e-8)


def test_fit_sine_beats_tolerance_and_tracks_direct_fit(rng):
    n, m_k = 200, 16
    X = rng.random((n, 1))
    y = np.sin(2.0 * np.pi * X[:, 0])
    model, diag = fit(
        Dataset(X, y, transformed=True), TrainerConfig(sigma2=1e-5, basis_sizes=m_k)
    )
    Xt = rng.random((400, 1))
    yt = np.sin(2.0 * np.pi * Xt[:, 0])
    test_err = rmse(model.evaluate(Xt), yt)

    # independent oracle: ordinary least squares on the fixed cosine basis
    Phi = sample_matrix(BasisSpec(m_k), X[:, 0])
    coef, *_ = np.linalg.lstsq(Phi.T, y, rcond=None)
    oracle_err = rmse(sample_matrix(BasisSpec(m_k), Xt[:, 0]).T @ coef, yt)

    assert oracle_err <= 0.05  # the target is near the basis span
    assert test_err <= 0.05


def test_fit_validates_inputs(rng):
    X = rng.standard_normal((30, 2)) * 4.0
    with pytest.raises(ValueError):
        fit(Dataset(X, np.zeros(30)), TrainerConfig())
    with pytest.raises(TypeError):
        fit((X, np.zeros(30)), TrainerConfig())


def test_fit_diagnostics_are_consistent(rng):
    X = rng.random((120, 2))
    y = np.sin(2 * np.pi * X[:, 0]) * X[:, 1] + 0.05 * rng.standard_normal(120)
    model, diag = fit(
        Dataset(X, y, transformed=True),
        TrainerConfig(sigma2=1e-4, basis_sizes=10, seed=3),
    )
    assert diag.final_m == model.m == len(diag.records)
    assert diag.records[-1]["train_rmse"] == diag.train_rmse
    assert diag.stop_reason in ("dependent_basis", "max_outer")
    # training RMSE is exactly non-increasing in m
    trace = [r["train_rmse"] for r in diag.records]
    assert all(b <= a for a, b in zip(trace, trace[1:]))


def test_fit_enforces_unit_norm_columns(rng):
    X = rng.random((100, 2))
    y = np.cos(np.pi * X[:, 0]) + X[:, 1] ** 2
    model, _ = fit(
        Dataset(X, y, transformed=True), TrainerConfig(sigma2=1e-4, basis_sizes=9)
    )
    for Bk in model.B:
        norms = np.linalg.norm(Bk, axis=0)
        np.testing.assert_allclose(norms, 1.0, atol=1e-8)


def test_fit_is_deterministic_under_seed(rng):
    X = rng.random((90, 2))
    y = np.sin(3 * X[:, 0]) + 0.1 * rng.standard_normal(90)
    data = Dataset(X, y, transformed=True)
    config = TrainerConfig(sigma2=1e-4, basis_sizes=8, seed=11)
    m1, d1 = fit(data, config)
    m2, d2 = fit(data, config)
    np.testing.assert_array_equal(m1.a, m2.a)
    for b1, b2 in zip(m1.B, m2.B):
        np.testing.assert_array_equal(b1, b2)
    assert d1.to_dict() == d2.to_dict()


def test_trained_model_round_trips_and_reevaluates(rng):
    X = rng.random((60, 2))
    y = X[:, 0] * X[:, 1]
    model, _ = fit(
        Dataset(X, y, transformed=True), TrainerConfig(sigma2=1e-4, basis_sizes=6)
    )
    back = loads(dumps(model))
    pts = rng.random((100, 2))
    np.testing.assert_array_equal(back.evaluate(pts), model.evaluate(pts))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainerConfig(eps_inner=0.0)
    with pytest.raises(ValueError):
        TrainerConfig(max_outer=0)
    with pytest.raises(ValueError):
        TrainerConfig(sigma2=-1.0).sigma2_vector(2)
    assert TrainerConfig(sigma2=[1e-3, 1e-2]).sigma2_vector(2).tolist() == [1e-3, 1e-2]
    with pytest.raises(ValueError):
        TrainerConfig(sigma2=[1e-3, 1e-2]).sigma2_vector(3)


def test_cache_and_no_cache_agree(rng):
    X = rng.random((60, 2))
    y = np.sin(2 * X[:, 0] + 1) + X[:, 1]
    data = Dataset(X, y, transformed=True)
    m1, _ = fit(data, TrainerConfig(sigma2=1e-4, basis_sizes=6, cache_expansion=True))
    m2, _ = fit(data, TrainerConfig(sigma2=1e-4, basis_sizes=6, cache_expansion=False))
    np.testing.assert_array_equal(m1.a, m2.a)


# ---- the jitter-noise Taylor property ----


def test_taylor_scaling_of_jittered_inner_product(rng):
    # smooth pair whose Laplacian interference term integrates to zero, so
    # the sigma^2 coefficient of the jittered product is exactly the sum of
    # per-dimension derivative inner products
    def f(P):
        return (P[:, 0] - 0.5) ** 4 + P[:, 0] + P[:, 1]

    def g(P):
        return P[:, 0] + 0.5 * P[:, 1] - 0.75

    limit = 1.5  # <d1 f, d1 g> + <d2 f, d2 g> = 1 + 0.5

    n, reps = 4000, 64
    Z = rng.random((n, 2))
    U = rng.standard_normal((reps, n, 2))
    base = float(np.mean(g(Z) * f(Z)))

    def jittered(sigma):
        # antithetic pairs kill the odd Taylor terms
        total = 0.0
        for r in range(reps):
            for sgn in (1.0, -1.0):
                P = Z + sgn * sigma * U[r]
                total += float(np.mean(g(P) * f(P)))
        return total / (2 * reps)

    sigma = 0.05
    d1 = jittered(sigma) - base
    d2 = jittered(sigma / 2) - base
    ratio = d1 / d2
    assert 3.0 <= ratio <= 6.0
    assert d2 / (sigma / 2) ** 2 == pytest.approx(limit, rel=0.05)


# ---- compression ----


def test_compress_refits_a_product(rng):
    X = rng.random((80, 2))
    y1 = np.sin(np.pi * X[:, 0]) + X[:, 1]
    y2 = X[:, 0] + 0.5
    m1, _ = fit(Dataset(X, y1, transformed=True), TrainerConfig(sigma2=1e-4, basis_sizes=6))
    m2, _ = fit(Dataset(X, y2, transformed=True), TrainerConfig(sigma2=1e-4, basis_sizes=6))
    grown = m1.pointwise_product(m2)
    small, _ = compress(grown, TrainerConfig(sigma2=1e-6, basis_sizes=8), seed=5)
    pts = rng.random((200, 2))
    err = rmse(small.evaluate(pts), grown.evaluate(pts))
    scale = float(np.std(grown.evaluate(pts)))
    assert err <= 0.05 * max(scale, 1.0)
