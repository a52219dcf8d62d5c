"""Comparison estimators for spatially varying coefficients.

* pointwise ridge: an independent regression in every block, followed by
  one group-thresholding pass;
* local average: the kernel model with uniform weights inside the radius;
* coarsening: blocks merged into square cells that share one coefficient.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .errors import ConfigError, ModeError
from .kernel_model import CoefficientField, KernelConfig, ReconstructionSpec, fit_with_smoother
from .term_library import TermLibrary

log = logging.getLogger(__name__)

KINDS = ("pointwise-ridge", "local-average", "coarsen")


@dataclass(frozen=True)
class BaselineConfig:
    kind: str = "pointwise-ridge"
    ridge: float = 1e-6
    threshold: float = 0.0
    radius: float = 10.0
    coarsen_factor: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown baseline kind {self.kind!r}", key="kind")
        if self.ridge < 0:
            raise ConfigError("ridge must be >= 0", key="ridge")
        if self.threshold < 0:
            raise ConfigError("threshold must be >= 0", key="threshold")
        if not self.radius > 0:
            raise ConfigError("radius must be > 0", key="radius")
        if int(self.coarsen_factor) != self.coarsen_factor or self.coarsen_factor < 1:
            raise ConfigError("coarsen_factor must be a positive integer", key="coarsen_factor")


def _blockwise_solve(X: np.ndarray, y: np.ndarray, groups: np.ndarray, n_groups: int, ridge: float) -> np.ndarray:
    """Per-group ridge solutions (minimum-norm least squares when ``ridge == 0``)."""
    k = X.shape[1]
    G = np.zeros((n_groups, k, k))
    np.add.at(G, groups, X[:, :, None] * X[:, None, :])
    rhs = np.zeros((n_groups, k))
    np.add.at(rhs, groups, X * y[:, None])
    if ridge > 0:
        G = G + ridge * np.eye(k)
        return np.linalg.solve(G, rhs[:, :, None])[:, :, 0]
    # (X^T X)^+ X^T y is the minimum-norm least-squares solution
    return np.einsum("gij,gj->gi", np.linalg.pinv(G, hermitian=True), rhs)


def _field(lib: TermLibrary, active, xi, method, diagnostics) -> CoefficientField:
    active = tuple(int(i) for i in active)
    return CoefficientField(
        active=active,
        term_names=tuple(lib.terms[i].name for i in active),
        block_coords=lib.block_coords,
        xi=xi,
        params=xi.copy(),
        method=method,
        diagnostics=diagnostics,
    )


def _residual_sq(lib: TermLibrary, active, xi) -> float:
    X = lib.design[:, list(active)]
    r = lib.target - np.einsum("nk,nk->n", X, xi[lib.block_index])
    return float(r @ r)


def fit_pointwise(lib: TermLibrary, cfg: BaselineConfig | None = None, active=None) -> CoefficientField:
    """Independent ridge regression per block, then one thresholding pass.

    Terms whose root-mean-square coefficient across blocks falls below
    ``cfg.threshold`` are dropped and the rest are refit. Blocks without
    samples keep zero coefficients.
    """
    cfg = cfg or BaselineConfig()
    active = tuple(range(lib.n_terms)) if active is None else tuple(sorted(int(i) for i in active))
    if not active:
        raise ValueError("active term set is empty")

    def solve(act):
        return _blockwise_solve(lib.design[:, list(act)], lib.target, lib.block_index, lib.n_blocks, cfg.ridge)

    xi = solve(active)
    pruned = ()
    if cfg.threshold > 0:
        rms = np.sqrt(np.mean(xi**2, axis=0))
        keep = tuple(a for a, m in zip(active, rms) if m >= cfg.threshold)
        pruned = tuple(lib.terms[a].name for a in active if a not in keep)
        if not keep:
            keep = (active[int(np.argmax(rms))],)
        if pruned:
            active = keep
            xi = solve(active)
    diag = {"solver": "blockwise", "residual_sq": _residual_sq(lib, active, xi), "n_samples": lib.n_samples,
            "pruned": list(pruned)}
    return _field(lib, active, xi, "pointwise", diag)


def uniform_smoother(block_coords: np.ndarray, radius: float) -> sp.csr_matrix:
    """Row-normalised indicator of ``|s_b - s_b'| <= radius`` (self included)."""
    coords = np.asarray(block_coords, dtype=np.float64)
    B = coords.shape[0]
    tree = cKDTree(coords)
    pairs = tree.query_pairs(radius, output_type="ndarray")
    rows = np.concatenate([pairs[:, 0], pairs[:, 1], np.arange(B)])
    cols = np.concatenate([pairs[:, 1], pairs[:, 0], np.arange(B)])
    A = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(B, B))
    deg = np.asarray(A.sum(axis=1)).ravel()
    return sp.csr_matrix(sp.diags(1.0 / deg) @ A)


def fit_local_average(lib: TermLibrary, graph_or_radius, cfg: KernelConfig | None = None, active=None,
                      recon: ReconstructionSpec | None = None) -> CoefficientField:
    """Kernel-model fit with uniform neighbour weights inside the radius.

    ``graph_or_radius`` is a KernelGraph (its radius is used) or a radius.
    """
    radius = getattr(graph_or_radius, "radius", graph_or_radius)
    cfg = cfg or KernelConfig(radius=float(radius))
    active = tuple(range(lib.n_terms)) if active is None else active
    S = uniform_smoother(lib.block_coords, float(radius))
    return fit_with_smoother(lib, S, active, cfg, recon, method="average")


def coarse_cells(block_coords: np.ndarray, factor: int, spacing=None) -> np.ndarray:
    """Cell id per block when grid blocks are merged in ``factor``-wide squares."""
    coords = np.asarray(block_coords, dtype=np.float64)
    if spacing is None:
        spacing = []
        for d in range(coords.shape[1]):
            u = np.unique(coords[:, d])
            if u.size > 1:
                steps = np.diff(u)
                if not np.allclose(steps, steps[0], rtol=1e-6, atol=1e-12 * max(1.0, np.abs(u).max())):
                    raise ModeError("coarsening needs blocks on a regular grid")
                spacing.append(steps[0])
            else:
                spacing.append(1.0)
    spacing = np.asarray(spacing, dtype=np.float64)
    idx = np.rint((coords - coords.min(axis=0)) / spacing).astype(np.int64) // int(factor)
    _, cell = np.unique(idx, axis=0, return_inverse=True)
    return cell.ravel()


def fit_coarsened(lib: TermLibrary, cfg: BaselineConfig | None = None, active=None) -> CoefficientField:
    """One coefficient vector per merged cell, broadcast back to member blocks."""
    cfg = cfg or BaselineConfig(kind="coarsen")
    active = tuple(range(lib.n_terms)) if active is None else tuple(sorted(int(i) for i in active))
    cell_of_block = coarse_cells(lib.block_coords, cfg.coarsen_factor)
    n_cells = int(cell_of_block.max()) + 1
    groups = cell_of_block[lib.block_index]
    xi_cells = _blockwise_solve(lib.design[:, list(active)], lib.target, groups, n_cells, cfg.ridge)
    xi = xi_cells[cell_of_block]
    diag = {"solver": "blockwise", "residual_sq": _residual_sq(lib, active, xi), "n_samples": lib.n_samples,
            "n_cells": n_cells}
    return _field(lib, active, xi, "coarsen", diag)
