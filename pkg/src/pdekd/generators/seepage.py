"""Transient 2D saturated groundwater flow through a heterogeneous conductivity field.

    S_s u_t = d/dx (K u_x) + d/dy (K u_y)

Cell-centred finite volumes with harmonic-mean face conductivities,
constant heads on the left/right columns, no-flow top/bottom, and
backward-Euler time stepping. Output coordinates are cell indices
(x, y in 0..n-1) with time in the physical unit; the ground truth is
expressed in those coordinates.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import SolverError
from ..field_data import GridMeta, from_grid
from .kle import ConductivityField
from .truth import GroundTruth


def _face_transmissivity(k_a, k_b):
    return 2.0 * k_a * k_b / (k_a + k_b)


def darcy_operator(K: np.ndarray, h: float) -> sp.csr_matrix:
    """Discrete div(K grad .) on a (ny, nx) cell grid with no-flow outer faces."""
    ny, nx = K.shape
    idx = np.arange(nx * ny).reshape(ny, nx)
    rows, cols, vals = [], [], []
    diag = np.zeros((ny, nx))
    tx = _face_transmissivity(K[:, :-1], K[:, 1:]) / h**2
    ty = _face_transmissivity(K[:-1, :], K[1:, :]) / h**2
    for a, b, t in ((idx[:, :-1], idx[:, 1:], tx), (idx[:-1, :], idx[1:, :], ty)):
        rows += [a.ravel(), b.ravel()]
        cols += [b.ravel(), a.ravel()]
        vals += [t.ravel(), t.ravel()]
    diag[:, :-1] -= tx
    diag[:, 1:] -= tx
    diag[:-1, :] -= ty
    diag[1:, :] -= ty
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    n = nx * ny
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def solve_seepage(K: np.ndarray, h: float, specific_storage: float, t_end: float, n_steps: int,
                  left_head: float, right_head: float, initial: np.ndarray, substeps: int = 10) -> np.ndarray:
    """Backward-Euler integration; returns heads at the ``n_steps + 1`` output times, shape (nt, ny, nx)."""
    ny, nx = K.shape
    L = darcy_operator(K, h)
    dt = t_end / (n_steps * substeps)
    n = nx * ny
    fixed = np.zeros((ny, nx), dtype=bool)
    fixed[:, 0] = fixed[:, -1] = True
    fixed = fixed.ravel()
    A = sp.identity(n, format="csr") * (specific_storage / dt) - L
    A = sp.lil_matrix(A)
    for i in np.flatnonzero(fixed):
        A.rows[i] = [i]
        A.data[i] = [1.0]
    try:
        lu = spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise SolverError(f"seepage system factorisation failed: {exc}") from None
    bc = np.zeros((ny, nx))
    bc[:, 0], bc[:, -1] = left_head, right_head
    bc = bc.ravel()
    u = initial.astype(np.float64).ravel().copy()
    out = [u.reshape(ny, nx).copy()]
    for _ in range(n_steps):
        for _ in range(substeps):
            rhs = u * (specific_storage / dt)
            rhs[fixed] = bc[fixed]
            u = lu.solve(rhs)
        if not np.all(np.isfinite(u)):
            raise SolverError("seepage solve produced non-finite heads")
        out.append(u.reshape(ny, nx).copy())
    return np.array(out)


def gen_seepage(field: ConductivityField, specific_storage: float = 1e-4, nt: int = 51, t_end: float = 10.0,
                boundary_heads=(202.0, 200.0), seed: int = 0, substeps: int = 10):
    """Head field on the conductivity grid plus the expanded four-term ground truth.

    ``seed`` is accepted for interface uniformity; the solve is deterministic.
    """
    del seed
    K = field.conductivity
    ny, nx = K.shape
    h = field.domain_length / nx
    left, right = boundary_heads
    init = np.full((ny, nx), float(right))
    init[:, 0] = left
    heads = solve_seepage(K, h, specific_storage, t_end, nt - 1, left, right, init, substeps=substeps)
    grid = GridMeta(nx=nx, ny=ny, nt=nt, dx=1.0, dy=1.0, dt=t_end / (nt - 1))
    samples = from_grid(grid, {"u": heads})
    # expand div(K grad u) / S_s into cell-index coordinates (one cell = h)
    diff = K / (specific_storage * h**2)
    truth = GroundTruth(
        equations={"u_t": {
            "u_x": diff * field.grad_x * h,
            "u_y": diff * field.grad_y * h,
            "u_xx": diff,
            "u_yy": diff,
        }},
        axes=(grid.axis("x"), grid.axis("y")),
        description=f"seepage: S_s u_t = div(K grad u), KLE seed {field.seed}",
    )
    return samples, truth
