import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from helpers import make_library
from pdekd.errors import ConfigError, SolverError, ValidationError
from pdekd.kernel_model import (
    CoupledProblem,
    KernelConfig,
    ReconstructionSpec,
    build_kernel_graph,
    cgls,
    fit,
    kernel_weight,
    predict,
    smooth_parameters,
)


def random_problem(seed, n_blocks=30, per_block=4, k=2, noise=0.05, side=6.0):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0, side, size=(n_blocks, 2))
    block_index = np.repeat(np.arange(n_blocks), per_block)
    X = rng.normal(size=(block_index.size, k))
    xi = 1.0 + 0.3 * np.sin(coords[:, :1] + np.arange(k))
    y = np.einsum("nk,nk->n", X, xi[block_index]) + noise * rng.normal(size=block_index.size)
    return make_library(X, y, block_index, coords), xi


def oracle_solution(lib, graph, active, ridge):
    """Independent dense construction of the normal equations, column by column."""
    S = graph.normalized.toarray()
    n, B, k = lib.n_samples, graph.n_blocks, len(active)
    A = np.zeros((n, B * k))
    for j in range(n):
        b = lib.block_index[j]
        for bp in range(B):
            for i, term in enumerate(active):
                A[j, bp * k + i] = lib.design[j, term] * S[b, bp]
    W = np.linalg.solve(A.T @ A + ridge * np.eye(B * k), A.T @ lib.target).reshape(B, k)
    return S @ W


class TestConfig:
    @pytest.mark.parametrize("kw,key", [({"radius": 0}, "radius"), ({"gamma": -1}, "gamma"),
                                        ({"ridge": -1}, "ridge"), ({"solver_tol": 0}, "solver_tol"),
                                        ({"solver": "magic"}, "solver")])
    def test_invalid(self, kw, key):
        with pytest.raises(ConfigError) as info:
            KernelConfig(**kw)
        assert info.value.key == key


class TestGraph:
    def test_self_weight_one(self):
        g = build_kernel_graph(np.array([[0.0, 0.0], [5.0, 5.0]]), KernelConfig(radius=1.0))
        assert g.weights[0, 0] == 1.0

    def test_closed_form_weight(self):
        assert kernel_weight(2.0, 1.0) == pytest.approx(np.exp(-1.0), abs=1e-15)
        g = build_kernel_graph(np.array([[0.0, 0.0], [1.0, 1.0]]), KernelConfig(radius=2.0, gamma=1.0))
        assert g.weights[0, 1] == pytest.approx(0.36787944117144233, abs=1e-15)

    def test_isolated_block(self):
        g = build_kernel_graph(np.array([[0.0, 0.0], [10.0, 0.0]]), KernelConfig(radius=1.0))
        assert g.normalized[0, 0] == 1.0
        assert g.normalized[0, 1] == 0.0

    def test_radius_is_inclusive(self):
        g = build_kernel_graph(np.array([[0.0], [2.0]]), KernelConfig(radius=2.0))
        assert g.weights[0, 1] > 0

    @given(st.integers(1, 60), st.floats(0.3, 5.0), st.floats(0.01, 10.0), st.integers(0, 10_000))
    def test_invariants(self, n, radius, gamma, seed):
        rng = np.random.default_rng(seed)
        coords = rng.uniform(0, 5, size=(n, 2))
        g = build_kernel_graph(coords, KernelConfig(radius=radius, gamma=gamma))
        rows = np.asarray(g.normalized.sum(axis=1)).ravel()
        assert np.all(np.abs(rows - 1.0) <= 1e-12)
        K = g.weights.toarray()
        assert np.array_equal(K, K.T)
        assert np.all(np.diag(K) == 1.0)
        assert g.normalized.min() >= 0


class TestSmoothing:
    @given(st.integers(1, 50), st.floats(-1e300, 1e300), st.integers(0, 10_000))
    def test_constant_preservation_is_exact(self, n, c, seed):
        rng = np.random.default_rng(seed)
        g = build_kernel_graph(rng.uniform(0, 4, size=(n, 2)), KernelConfig(radius=1.5, gamma=0.5))
        W = np.full((n, 3), c)
        assert np.array_equal(smooth_parameters(g, W), W)

    @given(st.integers(1, 40), st.integers(0, 10_000))
    def test_matches_matrix_product(self, n, seed):
        rng = np.random.default_rng(seed)
        g = build_kernel_graph(rng.uniform(0, 4, size=(n, 2)), KernelConfig(radius=1.5, gamma=0.5))
        W = rng.normal(size=(n, 2))
        assert np.allclose(smooth_parameters(g, W), g.normalized @ W, atol=1e-13)

    @given(st.integers(1, 50), st.integers(0, 10_000))
    def test_convex_combination_range(self, n, seed):
        rng = np.random.default_rng(seed)
        g = build_kernel_graph(rng.uniform(0, 4, size=(n, 2)), KernelConfig(radius=1.5, gamma=0.5))
        W = rng.normal(size=(n, 2)) * 10
        Xi = smooth_parameters(g, W)
        tol = 1e-12 * np.abs(W).max()
        assert np.all(Xi.max(axis=0) <= W.max(axis=0) + tol)
        assert np.all(Xi.min(axis=0) >= W.min(axis=0) - tol)

    def test_colocated_pair(self):
        g = build_kernel_graph(np.array([[0.0, 0.0], [0.0, 0.0]]), KernelConfig(radius=1.0))
        assert np.allclose(smooth_parameters(g, np.array([[1.0], [3.0]])), 2.0)

    def test_tiny_bandwidth_is_identity(self):
        rng = np.random.default_rng(0)
        coords = np.arange(10.0)[:, None] * 1.0
        g = build_kernel_graph(coords, KernelConfig(radius=3.0, gamma=1e-12))
        W = rng.normal(size=(10, 2))
        assert np.allclose(smooth_parameters(g, W), W, atol=1e-9)

    def test_dimension_mismatch(self):
        g = build_kernel_graph(np.zeros((3, 1)) + np.arange(3.0)[:, None], KernelConfig())
        with pytest.raises(ValueError):
            smooth_parameters(g, np.zeros((4, 1)))


class TestFit:
    def test_constant_coefficients_recovered(self):
        rng = np.random.default_rng(1)
        coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 1.0]])
        block_index = np.repeat(np.arange(5), 6)
        X = rng.normal(size=(30, 2))
        y = X @ np.array([1.5, -0.75])
        lib = make_library(X, y, block_index, coords)
        cfg = KernelConfig(radius=1.5, gamma=1.0, ridge=0.0)
        g = build_kernel_graph(lib, cfg)
        field = fit(lib, g, (0, 1), cfg)
        assert np.allclose(field.xi, [1.5, -0.75], atol=1e-6)
        assert np.allclose(oracle_solution(lib, g, (0, 1), 1e-12), [1.5, -0.75], atol=1e-6)

    def test_intercept_only(self):
        coords = np.arange(6.0)[:, None]
        block_index = np.repeat(np.arange(6), 3)
        lib = make_library(np.ones((18, 1)), np.full(18, 2.5), block_index, coords, names=["1"])
        cfg = KernelConfig(radius=2.0, ridge=0.0)
        field = fit(lib, build_kernel_graph(lib, cfg), (0,), cfg)
        assert np.allclose(field.xi, 2.5, atol=1e-9)

    @given(st.integers(0, 10_000))
    def test_dense_matches_independent_oracle(self, seed):
        lib, _ = random_problem(seed, n_blocks=12, per_block=3)
        cfg = KernelConfig(radius=2.5, gamma=1.0, ridge=1e-3, solver="dense")
        g = build_kernel_graph(lib, cfg)
        field = fit(lib, g, (0, 1), cfg)
        assert np.allclose(field.xi, oracle_solution(lib, g, (0, 1), 1e-3), atol=1e-8)

    @pytest.mark.parametrize("seed", range(5))
    def test_iterative_and_dual_match_dense(self, seed):
        lib, _ = random_problem(seed, n_blocks=400, per_block=3, k=3, side=20.0)
        base = dict(radius=2.0, gamma=1.0, ridge=1e-4, solver_tol=1e-13, solver_max_iter=100000)
        g = build_kernel_graph(lib, KernelConfig(**base))
        dense = fit(lib, g, (0, 1, 2), KernelConfig(solver="dense", **base))
        assert dense.n_blocks * 3 <= 2000
        for solver in ("iterative", "dual"):
            other = fit(lib, g, (0, 1, 2), KernelConfig(solver=solver, **base))
            assert np.max(np.abs(other.xi - dense.xi)) <= 1e-6, solver

    def test_auto_rule(self):
        small, _ = random_problem(0, n_blocks=20)
        cfg = KernelConfig(radius=2.0)
        assert fit(small, build_kernel_graph(small, cfg), (0, 1), cfg).diagnostics["solver"] == "dense"
        big, _ = random_problem(0, n_blocks=1100, per_block=2, side=40.0)
        assert fit(big, build_kernel_graph(big, cfg), (0, 1), cfg).diagnostics["solver"] == "dual"

    def test_cgls_residual_non_increasing(self):
        lib, _ = random_problem(3, n_blocks=200, side=15.0)
        g = build_kernel_graph(lib, KernelConfig(radius=2.0))
        prob = CoupledProblem(lib, (0, 1), g.normalized, ridge=1e-4)
        history = []
        _, it, _, ok = cgls(prob, 1e-10, 10000, history)
        assert ok and it > 1
        assert np.all(np.diff(history) <= 1e-12 * history[0])

    def test_non_convergence_raises_with_residual(self):
        lib, _ = random_problem(4, n_blocks=200, side=15.0)
        cfg = KernelConfig(radius=2.0, solver="iterative", solver_max_iter=2, solver_tol=1e-14)
        with pytest.raises(SolverError) as info:
            fit(lib, build_kernel_graph(lib, cfg), (0, 1), cfg)
        assert info.value.residual is not None and info.value.residual > 0

    def test_nan_rejected(self):
        with pytest.raises(ValidationError):
            make_library(np.array([[np.nan]]), np.array([1.0]), np.array([0]), np.array([[0.0]]))

    def test_smoothing_relation_holds(self):
        lib, _ = random_problem(5)
        cfg = KernelConfig(radius=2.0)
        g = build_kernel_graph(lib, cfg)
        field = fit(lib, g, (0, 1), cfg)
        assert field.check_smoothing(g)

    def test_predict_matches_reported_residual(self):
        lib, _ = random_problem(6)
        cfg = KernelConfig(radius=2.0)
        field = fit(lib, build_kernel_graph(lib, cfg), (0, 1), cfg)
        r = lib.target - predict(field, lib)
        assert abs(r @ r - field.diagnostics["residual_sq"]) <= 1e-12 * max(1.0, r @ r)

    def test_predict_zero_and_constant(self):
        lib, _ = random_problem(7)
        cfg = KernelConfig(radius=2.0)
        field = fit(lib, build_kernel_graph(lib, cfg), (0, 1), cfg)
        from dataclasses import replace

        assert np.all(predict(replace(field, xi=np.zeros_like(field.xi)), lib) == 0)

    def test_unscaled_coefficients(self):
        lib, _ = random_problem(8)
        cfg = KernelConfig(radius=2.0)
        field = fit(lib, build_kernel_graph(lib, cfg), (0, 1), cfg)
        un = field.unscaled(np.array([2.0, 4.0]))
        assert np.allclose(un.xi, field.xi / [2.0, 4.0])


class TestReconstruction:
    def test_penalty_changes_nothing_when_consistent(self):
        # u_t = c * u_x exactly with u(t + dt) = u(t) + dt * c * u_x: the penalty is satisfied by the truth
        n_blocks, nt, dt, c = 6, 5, 0.1, 0.7
        coords = np.arange(float(n_blocks))[:, None]
        block_index = np.tile(np.arange(n_blocks), nt)
        t = np.repeat(np.arange(nt) * dt, n_blocks)
        rng = np.random.default_rng(0)
        ux = rng.normal(size=block_index.size)
        state = np.zeros(block_index.size)
        for s in range(1, nt):
            cur, prev = slice(s * n_blocks, (s + 1) * n_blocks), slice((s - 1) * n_blocks, s * n_blocks)
            state[cur] = state[prev] + dt * c * ux[prev]
        lib = make_library(ux[:, None], c * ux, block_index, coords, t=t)
        from dataclasses import replace

        lib = replace(lib, state=state)
        cfg = KernelConfig(radius=1.5, ridge=0.0, beta=10.0)
        g = build_kernel_graph(lib, cfg)
        field = fit(lib, g, (0,), cfg, ReconstructionSpec(enabled=True, dt=dt))
        assert np.allclose(field.xi, c, atol=1e-8)
        assert field.diagnostics["reconstruction_sq"] < 1e-16

    def test_requires_dt(self):
        lib, _ = random_problem(0)
        cfg = KernelConfig(beta=1.0)
        g = build_kernel_graph(lib, cfg)
        with pytest.raises(ConfigError):
            fit(lib, g, (0,), cfg, ReconstructionSpec(enabled=True))


def test_sparse_operator_matches_dense():
    lib, _ = random_problem(9, n_blocks=15)
    g = build_kernel_graph(lib, KernelConfig(radius=2.0))
    prob = CoupledProblem(lib, (0, 1), g.normalized, ridge=0.5)
    A = prob.dense_matrix()
    rng = np.random.default_rng(0)
    w = rng.normal(size=prob.n_unknowns)
    r = rng.normal(size=A.shape[0])
    assert np.allclose(prob.matvec(w), A @ w)
    assert np.allclose(prob.rmatvec(r), A.T @ r)
    assert np.allclose(prob.column_sq_norms(), (A**2).sum(axis=0))
    assert sp.issparse(g.normalized)
