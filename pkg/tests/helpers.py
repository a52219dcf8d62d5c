"""Shared builders for the test suite."""

import numpy as np

from pdekd.field_data import from_grid
from pdekd.term_library import TermDescriptor, TermLibrary, parse_deriv, parse_poly


def make_library(X, y, block_index, block_coords, names=None, t=None):
    """Small hand-built library (terms named after derivative columns)."""
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    names = names or ["u_x", "u_y", "u_xx", "u_yy", "u_xxx", "u_yyy"][:p]
    terms = [TermDescriptor(parse_poly("1"), parse_deriv(nm)) if nm != "1"
             else TermDescriptor((), None) for nm in names]
    block_coords = np.asarray(block_coords, dtype=np.float64)
    if block_coords.ndim == 1:
        block_coords = block_coords[:, None]
    block_index = np.asarray(block_index)
    t = np.zeros(n) if t is None else np.asarray(t, dtype=np.float64)
    coords = np.column_stack([block_coords[block_index], t])
    return TermLibrary(terms=terms, design=X, target=np.asarray(y, dtype=np.float64), coords=coords,
                       block_index=block_index, block_coords=block_coords, target_name="u_t",
                       state=np.zeros(n))


def field_on(grid, fn):
    """Evaluate fn(x, y, t) (or fn(x, t) in 1D) on a grid and return a SampleSet with field u."""
    x, y, t = grid.lattice()
    u = fn(x, y, t) if grid.is_2d else fn(x, t)
    return from_grid(grid, {"u": np.asarray(u).reshape(grid.shape)})
