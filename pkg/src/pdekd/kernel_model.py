"""Spatial-kernel coupled least squares for spatially varying PDE coefficients.

Each block's coefficient vector is a kernel-weighted average of free
parameters at nearby blocks,

    Xi_i[b] = sum_b' K(b, b') W_i[b'] / sum_b' K(b, b'),
    K(b, b') = exp(-|s_b - s_b'|^2 / (2 gamma)),   |s_b - s_b'| <= r,

and W is chosen to minimise ``|Y - X Xi|^2 + beta |recon|^2 + ridge |W|^2``.
The problem is linear in W; it is solved by Jacobi-preconditioned CGLS
on the sparse coupled operator, or densely when it is small.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .errors import ConfigError, SolverError, ValidationError
from .term_library import TermLibrary

log = logging.getLogger(__name__)

DENSE_LIMIT = 2000
DUAL_LIMIT = 6000  # max rows for the row-space solve


@dataclass(frozen=True)
class KernelConfig:
    radius: float = 10.0
    gamma: float = 1.0
    ridge: float = 1e-6
    beta: float = 0.0
    solver_tol: float = 1e-10
    solver_max_iter: int = 20000
    solver: str = "auto"  # auto | dense | dual | iterative

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError("radius must be > 0", key="radius")
        if not self.gamma > 0:
            raise ConfigError("gamma must be > 0", key="gamma")
        if self.ridge < 0:
            raise ConfigError("ridge must be >= 0", key="ridge")
        if self.beta < 0:
            raise ConfigError("beta must be >= 0", key="beta")
        if not self.solver_tol > 0:
            raise ConfigError("solver_tol must be > 0", key="solver_tol")
        if self.solver not in ("auto", "dense", "dual", "iterative"):
            raise ConfigError(f"unknown solver {self.solver!r}", key="solver")


@dataclass(frozen=True, eq=False)
class KernelGraph:
    """Neighbour structure of the blocks with raw and row-normalised kernel weights."""

    block_coords: np.ndarray
    weights: sp.csr_matrix  # raw K(b, b'), symmetric
    normalized: sp.csr_matrix  # K / row sums, row-stochastic
    radius: float
    gamma: float

    @property
    def n_blocks(self) -> int:
        return int(self.block_coords.shape[0])

    def neighbor_counts(self) -> np.ndarray:
        return np.diff(self.weights.indptr)


def kernel_weight(sq_dist, gamma: float):
    return np.exp(-np.asarray(sq_dist) / (2.0 * gamma))


def build_kernel_graph(lib_or_coords, cfg: KernelConfig) -> KernelGraph:
    """Neighbours within ``cfg.radius`` (squared spatial distance <= r^2) and their weights."""
    coords = lib_or_coords.block_coords if isinstance(lib_or_coords, TermLibrary) else np.asarray(lib_or_coords, float)
    if coords.ndim == 1:
        coords = coords[:, None]
    tree = cKDTree(coords)
    dist = tree.sparse_distance_matrix(tree, cfg.radius, output_type="coo_matrix")
    rows, cols, d = dist.row, dist.col, dist.data
    # sparse_distance_matrix drops zero distances (the diagonal and any coincident blocks)
    n = coords.shape[0]
    keep = rows != cols
    rows = np.concatenate([rows[keep], np.arange(n)])
    cols = np.concatenate([cols[keep], np.arange(n)])
    sq = np.concatenate([d[keep] ** 2, np.zeros(n)])
    K = sp.csr_matrix((kernel_weight(sq, cfg.gamma), (rows, cols)), shape=(n, n))
    K.sum_duplicates()
    K.sort_indices()
    rowsum = np.asarray(K.sum(axis=1)).ravel()
    S = sp.diags(1.0 / rowsum) @ K
    return KernelGraph(block_coords=coords, weights=K, normalized=sp.csr_matrix(S), radius=cfg.radius, gamma=cfg.gamma)


def smooth_parameters(graph: KernelGraph, W: np.ndarray) -> np.ndarray:
    """Xi = normalised kernel operator applied to each term's parameter field (B x k).

    Evaluated as ``W + S (W - W_b)`` row by row, which equals ``S W`` for a
    row-stochastic ``S`` and returns a constant field bit for bit.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.shape[0] != graph.n_blocks:
        raise ValueError(f"W has {W.shape[0]} rows, graph has {graph.n_blocks} blocks")
    S = graph.normalized.tocoo()
    diff = S.data[:, None] * (W[S.col] - W[S.row])
    out = W.copy()
    np.add.at(out, S.row, diff)
    return out


@dataclass(frozen=True)
class ReconstructionSpec:
    """One-step-ahead reconstruction penalty: u(t + dt) ~ u(t) + dt * X Xi."""

    enabled: bool = False
    dt: float | None = None


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Estimated coefficients per block for the active terms.

    ``xi[:, j]`` is the coefficient field of term ``active[j]``; ``params``
    holds the free parameters W (equal to ``xi`` for estimators without a
    smoothing operator).
    """

    active: tuple
    term_names: tuple
    block_coords: np.ndarray
    xi: np.ndarray
    params: np.ndarray
    method: str = "kernel"
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_blocks(self) -> int:
        return int(self.block_coords.shape[0])

    def coefficient(self, name: str) -> np.ndarray:
        return self.xi[:, self.term_names.index(name)]

    def check_smoothing(self, graph: KernelGraph, tol: float = 1e-9) -> bool:
        """True when xi equals the graph smoothing of params."""
        return bool(np.allclose(smooth_parameters(graph, self.params), self.xi, atol=tol, rtol=tol))

    def unscaled(self, scales: np.ndarray) -> CoefficientField:
        """Coefficients for the original (un-normalised) columns."""
        s = np.asarray(scales)[list(self.active)]
        return CoefficientField(
            active=self.active, term_names=self.term_names, block_coords=self.block_coords,
            xi=self.xi / s, params=self.params / s, method=self.method, diagnostics=dict(self.diagnostics),
        )


def predict(coef: CoefficientField, lib: TermLibrary) -> np.ndarray:
    """Sum over active terms of X[j, i] * Xi_i[block(j)]."""
    if lib.n_samples and lib.block_index.max() >= coef.n_blocks:
        raise ValueError("library references blocks absent from the coefficient field")
    if lib.block_coords.shape != coef.block_coords.shape:
        raise ValueError("library and coefficient field use different block tables")
    X = lib.design[:, list(coef.active)]
    return np.einsum("nk,nk->n", X, coef.xi[lib.block_index])


# -- the coupled linear operator ---------------------------------------------------


def reconstruction_pairs(lib: TermLibrary, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (j, j2) of samples at the same block with t[j2] = t[j] + dt."""
    if lib.state is None:
        raise ValidationError("reconstruction needs the state field in the library")
    t = lib.t
    key = {}
    steps = np.rint((t - t.min()) / dt).astype(np.int64)
    for j, (b, s) in enumerate(zip(lib.block_index, steps)):
        key[(int(b), int(s))] = j
    src, dst = [], []
    for j, (b, s) in enumerate(zip(lib.block_index, steps)):
        j2 = key.get((int(b), int(s) + 1))
        if j2 is not None and abs(t[j2] - t[j] - dt) <= 1e-6 * dt:
            src.append(j)
            dst.append(j2)
    return np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64)


class CoupledProblem:
    """Least-squares problem in the parameters W (B x k, flattened row-major).

    Rows: data fit, optional reconstruction penalty, ridge damping.
    """

    def __init__(self, lib: TermLibrary, active, smoother: sp.spmatrix, ridge: float,
                 beta: float = 0.0, recon: ReconstructionSpec | None = None):
        self.active = tuple(int(i) for i in active)
        if not self.active:
            raise ValueError("active term set is empty")
        if not (np.all(np.isfinite(lib.design)) and np.all(np.isfinite(lib.target))):
            raise ValidationError("NaN or inf in library")
        self.X = np.ascontiguousarray(lib.design[:, list(self.active)])
        self.y = lib.target
        self.blocks = lib.block_index
        self.B = lib.n_blocks
        self.k = len(self.active)
        self.S = sp.csr_matrix(smoother)
        self.ST = sp.csr_matrix(self.S.T)
        n = lib.n_samples
        self.P_T = sp.csr_matrix((np.ones(n), (self.blocks, np.arange(n))), shape=(self.B, n))
        self.ridge = float(ridge)
        self.sqrt_ridge = np.sqrt(self.ridge)
        self.beta = float(beta)
        self.rec_src = self.rec_dst = np.zeros(0, dtype=np.int64)
        self.rec_rhs = np.zeros(0)
        self.rec_dt = 0.0
        if recon is not None and recon.enabled and self.beta > 0:
            if recon.dt is None:
                raise ConfigError("reconstruction requires dt")
            self.rec_src, self.rec_dst = reconstruction_pairs(lib, recon.dt)
            self.rec_dt = recon.dt
            sb = np.sqrt(self.beta)
            self.rec_rhs = sb * (lib.state[self.rec_dst] - lib.state[self.rec_src])
        self.n_rec = self.rec_src.size

    @property
    def n_unknowns(self) -> int:
        return self.B * self.k

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate([self.y, self.rec_rhs, np.zeros(self.n_unknowns)])

    def predict_rows(self, W: np.ndarray) -> np.ndarray:
        Xi = self.S @ W
        return np.einsum("nk,nk->n", self.X, Xi[self.blocks])

    def matvec(self, w: np.ndarray) -> np.ndarray:
        W = w.reshape(self.B, self.k)
        pred = self.predict_rows(W)
        parts = [pred]
        if self.n_rec:
            parts.append(np.sqrt(self.beta) * self.rec_dt * pred[self.rec_src])
        parts.append(self.sqrt_ridge * w)
        return np.concatenate(parts)

    def rmatvec(self, r: np.ndarray) -> np.ndarray:
        n = self.X.shape[0]
        rd = r[:n].copy()
        if self.n_rec:
            np.add.at(rd, self.rec_src, np.sqrt(self.beta) * self.rec_dt * r[n : n + self.n_rec])
        G = self.P_T @ (self.X * rd[:, None])
        out = (self.ST @ G).ravel()
        return out + self.sqrt_ridge * r[n + self.n_rec :]

    def column_sq_norms(self) -> np.ndarray:
        """diag(A^T A) including penalty rows, for Jacobi scaling."""
        X2 = self.X**2
        if self.n_rec:
            w = np.ones(self.X.shape[0])
            np.add.at(w, self.rec_src, self.beta * self.rec_dt**2)
            X2 = X2 * w[:, None]
        Q = self.P_T @ X2  # per block sums of X^2
        S2T = self.ST.multiply(self.ST)
        return (sp.csr_matrix(S2T) @ Q).ravel() + self.ridge

    def dense_matrix(self) -> np.ndarray:
        Sd = self.S.toarray()[self.blocks]  # N x B
        A = (Sd[:, :, None] * self.X[:, None, :]).reshape(self.X.shape[0], -1)
        rows = [A]
        if self.n_rec:
            rows.append(np.sqrt(self.beta) * self.rec_dt * A[self.rec_src])
        rows.append(self.sqrt_ridge * np.eye(self.n_unknowns))
        return np.vstack(rows)


def cgls(problem: CoupledProblem, tol: float, max_iter: int, history: list | None = None):
    """Jacobi-preconditioned CGLS on the augmented operator.

    Minimises |b - A w|; the residual norm is non-increasing across
    iterations. Stops when |A^T r| <= tol |A^T b| (in scaled variables).
    Returns (w, iterations, residual_norm, converged).
    """
    b = problem.rhs
    d = problem.column_sq_norms()
    d = np.where(d > 0, 1.0 / np.sqrt(d), 1.0)
    z = np.zeros(problem.n_unknowns)
    r = b.copy()
    s = d * problem.rmatvec(r)
    p = s.copy()
    gamma = s @ s
    gamma0 = gamma
    rnorm = np.linalg.norm(r)
    if history is not None:
        history.append(rnorm)
    if gamma0 == 0:
        return z, 0, rnorm, True
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        q = problem.matvec(d * p)
        delta = q @ q
        if delta <= 0:
            break
        alpha = gamma / delta
        z += alpha * p
        r -= alpha * q
        s = d * problem.rmatvec(r)
        gamma_new = s @ s
        rnorm = np.linalg.norm(r)
        if history is not None:
            history.append(rnorm)
        if np.sqrt(gamma_new) <= tol * np.sqrt(gamma0):
            converged = True
            break
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
    return d * z, it, rnorm, converged


def dense_solve(problem: CoupledProblem) -> np.ndarray:
    """Direct solve of the normal equations (the oracle for small problems)."""
    A = problem.dense_matrix()
    b = problem.rhs
    AtA = A.T @ A
    Atb = A.T @ b
    try:
        return scipy.linalg.solve(AtA, Atb, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        return np.linalg.lstsq(A, b, rcond=None)[0]


def dual_solve(problem: CoupledProblem) -> np.ndarray:
    """Exact solve in row space; cheap whenever the row count is moderate.

    Every data or reconstruction row has the form ``c_r * (x_r kron S[b_r, :])``,
    so the Gram matrix is ``(c c^T) * (X X^T) * (S S^T)[b, b]`` elementwise.
    The solution is ``A^T (A A^T + ridge I)^-1 y``; with zero ridge this is
    the minimum-norm least-squares solution (``A^T (A A^T)^+ y = A^+ y``),
    so the route is valid for any problem shape.
    """
    X, blocks, c = problem.X, problem.blocks, np.ones(problem.X.shape[0])
    y = problem.y
    if problem.n_rec:
        X = np.vstack([X, X[problem.rec_src]])
        blocks = np.concatenate([blocks, blocks[problem.rec_src]])
        c = np.concatenate([c, np.full(problem.n_rec, np.sqrt(problem.beta) * problem.rec_dt)])
        y = np.concatenate([y, problem.rec_rhs])
    M = sp.csr_matrix(problem.S @ problem.ST)
    G = M[blocks][:, blocks].toarray()
    G *= X @ X.T
    G *= np.outer(c, c)
    if problem.ridge > 0:
        G[np.diag_indices_from(G)] += problem.ridge
        try:
            alpha = scipy.linalg.solve(G, y, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            alpha = np.linalg.lstsq(G, y, rcond=None)[0]
    else:
        alpha = np.linalg.lstsq(G, y, rcond=None)[0]
    P = np.zeros((problem.B, problem.k))
    np.add.at(P, blocks, (alpha * c)[:, None] * X)
    return (problem.ST @ P).ravel()


def solve_problem(problem: CoupledProblem, cfg: KernelConfig):
    method = cfg.solver
    rows = problem.X.shape[0] + problem.n_rec
    if method == "auto":
        if problem.n_unknowns <= DENSE_LIMIT:
            method = "dense"
        elif rows <= DUAL_LIMIT:
            method = "dual"
        else:
            method = "iterative"
    if method == "dense":
        w = dense_solve(problem)
        return w, {"solver": "dense", "iterations": 0}
    if method == "dual":
        return dual_solve(problem), {"solver": "dual", "iterations": 0}
    w, it, rnorm, ok = cgls(problem, cfg.solver_tol, cfg.solver_max_iter)
    if not ok:
        raise SolverError(f"CGLS did not converge in {it} iterations (residual {rnorm:.3e})", residual=rnorm)
    return w, {"solver": "cgls", "iterations": it}


def fit_with_smoother(lib: TermLibrary, smoother, active, cfg: KernelConfig,
                      recon: ReconstructionSpec | None = None, method: str = "kernel") -> CoefficientField:
    problem = CoupledProblem(lib, active, smoother, cfg.ridge, cfg.beta, recon)
    w, info = solve_problem(problem, cfg)
    W = w.reshape(problem.B, problem.k)
    Xi = problem.S @ W
    resid = lib.target - np.einsum("nk,nk->n", problem.X, Xi[lib.block_index])
    info.update(residual_sq=float(resid @ resid), n_samples=lib.n_samples)
    if problem.n_rec:
        rec = problem.matvec(w)[lib.n_samples : lib.n_samples + problem.n_rec] - problem.rec_rhs
        info["reconstruction_sq"] = float(rec @ rec)
    return CoefficientField(
        active=problem.active,
        term_names=tuple(lib.terms[i].name for i in problem.active),
        block_coords=lib.block_coords,
        xi=Xi,
        params=W,
        method=method,
        diagnostics=info,
    )


def fit(lib: TermLibrary, graph: KernelGraph, active, cfg: KernelConfig,
        recon: ReconstructionSpec | None = None) -> CoefficientField:
    """Kernel-coupled least-squares fit of the ``active`` terms."""
    if graph.n_blocks != lib.n_blocks:
        raise ValueError(f"graph has {graph.n_blocks} blocks, library has {lib.n_blocks}")
    return fit_with_smoother(lib, graph.normalized, active, cfg, recon, method="kernel")
