"""Chafee-Infante reaction-diffusion equation u_t = u_xx - u + u^3 with Dirichlet walls."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import SolverError
from ..field_data import GridMeta, from_grid
from .truth import GroundTruth


def gen_chafee_infante(nx: int = 301, nt: int = 201, seed: int = 0, length: float = 20.0, t_end: float = 1.0,
                       amplitude: float = 1.0, modes: int = 16, substeps: int = 10, initial=None):
    """Semi-implicit integration: implicit diffusion, explicit reaction, u = 0 at both ends.

    The default initial condition superposes sine modes ``1..modes`` with
    seeded normal weights scaled by ``m**-0.5``, rescaled to peak
    ``amplitude``. A domain long enough to carry many modes keeps ``u`` and
    ``u_xx`` from collapsing onto one decaying eigenmode.
    """
    if nx < 16 or nt < 16:
        raise ValueError("grid sizes must be >= 16")
    x = np.linspace(0.0, length, nx)
    h = x[1] - x[0]
    if initial is None:
        rng = np.random.default_rng(seed)
        u0 = np.zeros(nx)
        for m in range(1, modes + 1):
            u0 += rng.normal() / np.sqrt(m) * np.sin(m * np.pi * x / length)
        peak = np.abs(u0).max()
        u0 *= amplitude / peak if peak > 0 else 0.0
    else:
        u0 = np.asarray(initial, dtype=np.float64)
    dt_out = t_end / (nt - 1)
    dt = dt_out / substeps
    n_in = nx - 2
    D2 = sp.diags([np.ones(n_in - 1), -2 * np.ones(n_in), np.ones(n_in - 1)], [-1, 0, 1]) / h**2
    lu = spla.splu(sp.csc_matrix(sp.identity(n_in) - dt * D2))
    u = u0.copy()
    u[0] = u[-1] = 0.0
    peak0 = np.abs(u0).max()
    U = [u0.copy()]
    for _ in range(nt - 1):
        for _ in range(substeps):
            inner = u[1:-1]
            inner = lu.solve(inner + dt * (-inner + inner**3))
            u = np.concatenate([[0.0], inner, [0.0]])
        if not np.all(np.isfinite(u)) or (peak0 > 0 and np.abs(u).max() > 10 * peak0):
            raise SolverError("Chafee-Infante solution grew more than 10x; reduce the time step")
        U.append(u.copy())
    grid = GridMeta(nx=nx, nt=nt, dx=float(h), dt=dt_out)
    samples = from_grid(grid, {"u": np.array(U)})
    truth = GroundTruth(
        equations={"u_t": {"u_xx": 1.0, "u": -1.0, "u^3": 1.0}},
        description=f"Chafee-Infante, seed {seed}",
    )
    return samples, truth
