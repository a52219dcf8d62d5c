"""Derivatives of sampled fields.

Three routes: finite differences on gridded sets (second-order accurate,
one-sided stencils at the edges), tensor-product Savitzky-Golay fits on
gridded sets, and weighted local polynomial fits on scattered sets.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.signal import savgol_filter
from scipy.spatial import cKDTree

from .errors import ConfigError, ModeError
from .field_data import SampleSet

log = logging.getLogger(__name__)

AXES = ("x", "y", "t", "lap")
MODES = ("grid-central", "grid-polynomial", "local-polynomial")


@dataclass(frozen=True)
class DerivSpec:
    """Derivative of ``field`` of ``order`` along ``axis``.

    ``axis="lap"`` denotes the spatial Laplacian (order 2 only).
    """

    field: str
    axis: str
    order: int = 1

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"unknown derivative axis {self.axis!r}")
        if self.order < 1:
            raise ConfigError("derivative order must be >= 1")
        if self.axis in ("x", "y") and self.order > 3:
            raise ConfigError("spatial derivatives are limited to third order")
        if self.axis == "lap" and self.order != 2:
            raise ConfigError("the Laplacian is a second-order operator")

    @property
    def name(self) -> str:
        if self.axis == "lap":
            return f"lap({self.field})"
        return f"{self.field}_{self.axis * self.order}"


@dataclass(frozen=True)
class DiffConfig:
    """How derivatives are obtained.

    ``grid-central``: finite differences, optionally after a moving average
    of width ``smoothing_window``. ``grid-polynomial``: a polynomial of
    ``poly_degree`` fitted over a ``smoothing_window``-wide window along
    every grid axis. ``local-polynomial``: weighted fits over the
    ``neighbor_count`` nearest scattered samples.
    """

    mode: str = "grid-central"
    poly_degree: int = 4
    neighbor_count: int = 30
    smoothing_window: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown differentiation mode {self.mode!r}")
        if self.smoothing_window < 1 or self.smoothing_window % 2 == 0:
            raise ConfigError("smoothing_window must be odd and >= 1")
        if self.poly_degree < 1 or self.neighbor_count < 1:
            raise ConfigError("poly_degree and neighbor_count must be positive")
        if self.mode == "grid-polynomial" and self.smoothing_window <= self.poly_degree:
            raise ConfigError("grid-polynomial needs smoothing_window > poly_degree")


# -- finite differences --------------------------------------------------------


def fd_weights(offsets, order: int) -> np.ndarray:
    """Weights w with sum_k w_k f(x + o_k h) ~ h**order f^(order)(x) on the given integer offsets."""
    offsets = np.asarray(offsets, dtype=np.float64)
    m = offsets.size
    if m <= order:
        raise ValueError("need more stencil points than the derivative order")
    vander = np.vstack([offsets**k / math.factorial(k) for k in range(m)])
    rhs = np.zeros(m)
    rhs[order] = 1.0
    return np.linalg.solve(vander, rhs)


def _central_halfwidth(order: int) -> int:
    # narrowest symmetric stencil with second-order accuracy
    return (order + 1) // 2


def fd_derivative(arr: np.ndarray, axis: int, order: int, h: float) -> np.ndarray:
    """Second-order accurate derivative of ``arr`` along ``axis``."""
    a = np.moveaxis(np.asarray(arr, dtype=np.float64), axis, -1)
    n = a.shape[-1]
    npts = order + 2
    if n < npts:
        raise ValueError(f"need at least {npts} points for an order-{order} derivative, got {n}")
    half = _central_halfwidth(order)
    out = np.empty_like(a)
    wc = fd_weights(np.arange(-half, half + 1), order)
    interior = slice(half, n - half)
    acc = np.zeros(a[..., interior].shape)
    for k, w in zip(range(-half, half + 1), wc):
        if w != 0.0:
            acc += w * a[..., half + k : n - half + k]
    out[..., interior] = acc
    for i in list(range(half)) + list(range(n - half, n)):
        start = min(max(i - npts // 2, 0), n - npts)
        idx = np.arange(start, start + npts)
        w = fd_weights(idx - i, order)
        out[..., i] = a[..., idx] @ w
    out /= h**order
    return np.moveaxis(out, -1, axis)


def differentiate_grid(samples: SampleSet, spec: DerivSpec, *, values: np.ndarray | None = None) -> np.ndarray:
    """Finite-difference derivative at every sample of a gridded set (sample order).

    ``values`` substitutes pre-processed (e.g. smoothed) field values.
    """
    g = samples.grid
    if g is None:
        raise ModeError("grid differentiation requires grid metadata; use differentiate_scattered")
    if spec.axis in ("y", "lap") and not g.is_2d:
        raise ValueError(f"axis {spec.axis!r} is not available on 1D data")
    v = samples.values[spec.field] if values is None else np.asarray(values)
    arr = v.reshape(g.shape)
    if spec.axis == "lap":
        out = fd_derivative(arr, g.array_axis("x"), 2, g.dx) + fd_derivative(arr, g.array_axis("y"), 2, g.dy)
    else:
        out = fd_derivative(arr, g.array_axis(spec.axis), spec.order, g.spacing(spec.axis))
    return out.ravel()


def differentiate_grid_polynomial(samples: SampleSet, spec: DerivSpec, window: int, degree: int, *,
                                  values: np.ndarray | None = None, periodic=()) -> np.ndarray:
    """Savitzky-Golay derivative: least-squares polynomial fits over a tensor window.

    The fit of ``degree`` is taken over ``window`` points along every grid
    axis (smoothing along the axes that are not differentiated). Edge
    windows are shifted inwards rather than padded, except along axes named
    in ``periodic``, which wrap around.
    """
    g = samples.grid
    if g is None:
        raise ModeError("grid differentiation requires grid metadata; use differentiate_scattered")
    if spec.axis in ("y", "lap") and not g.is_2d:
        raise ValueError(f"axis {spec.axis!r} is not available on 1D data")
    if window % 2 == 0 or window <= degree:
        raise ValueError("window must be odd and larger than the degree")
    if spec.order > degree:
        raise ValueError(f"degree {degree} cannot represent an order-{spec.order} derivative")
    v = samples.values[spec.field] if values is None else np.asarray(values)
    arr = np.asarray(v, dtype=np.float64).reshape(g.shape)
    names = ("t", "y", "x") if g.is_2d else ("t", "x")

    def along(orders: dict) -> np.ndarray:
        out = arr
        for name in names:
            ax = g.array_axis(name)
            if out.shape[ax] < window:
                raise ValueError(f"axis {name!r} has fewer than {window} points")
            out = savgol_filter(out, window, degree, deriv=orders.get(name, 0), delta=g.spacing(name),
                                axis=ax, mode="wrap" if name in periodic else "interp")
        return out

    if spec.axis == "lap":
        res = along({"x": 2}) + along({"y": 2})
    else:
        res = along({spec.axis: spec.order})
    return res.ravel()


def smooth_field(values: np.ndarray, samples: SampleSet, window: int, axes=None) -> np.ndarray:
    """Moving average of width ``window`` along each grid axis (truncated at the edges)."""
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 1, got {window}")
    g = samples.grid
    if g is None:
        raise ModeError("smoothing requires grid metadata")
    arr = np.asarray(values, dtype=np.float64).reshape(g.shape)
    if window == 1:
        return arr.ravel().copy()
    axes = axes or (("x", "y", "t") if g.is_2d else ("x", "t"))
    for name in axes:
        arr = _box_filter(arr, g.array_axis(name), window // 2)
    return arr.ravel()


def _box_filter(arr: np.ndarray, axis: int, half: int) -> np.ndarray:
    a = np.moveaxis(arr, axis, -1)
    n = a.shape[-1]
    c = np.concatenate([np.zeros(a.shape[:-1] + (1,)), np.cumsum(a, axis=-1)], axis=-1)
    lo = np.clip(np.arange(n) - half, 0, n)
    hi = np.clip(np.arange(n) + half + 1, 0, n)
    out = (c[..., hi] - c[..., lo]) / (hi - lo)
    return np.moveaxis(out, -1, axis)


# -- local polynomial fits on scattered data -------------------------------------


def monomial_exponents(dim: int, degree: int) -> list[tuple[int, ...]]:
    exps = [e for e in product(range(degree + 1), repeat=dim) if sum(e) <= degree]
    return sorted(exps, key=lambda e: (sum(e), tuple(-k for k in e)))


def differentiate_scattered(
    samples: SampleSet,
    spec: DerivSpec,
    cfg: DiffConfig,
    *,
    values: np.ndarray | None = None,
    report: dict | None = None,
) -> np.ndarray:
    """Derivative at each sample from a distance-weighted local polynomial fit.

    Spatial derivatives are fitted within each time slice when every slice
    holds at least ``cfg.neighbor_count`` samples; otherwise (and for time
    derivatives) the fit is over space-time neighbours. Weights follow
    ``exp(-d^2 / (2 h^2))`` with ``h`` the distance to the farthest neighbour.
    Samples whose local system is rank deficient take the value of the
    nearest successful sample; their count is stored in ``report``.
    """
    if spec.axis == "lap":
        if not samples.is_2d:
            raise ValueError("axis 'lap' is not available on 1D data")
        kw = dict(values=values, report=report)
        return (differentiate_scattered(samples, DerivSpec(spec.field, "x", 2), cfg, **kw)
                + differentiate_scattered(samples, DerivSpec(spec.field, "y", 2), cfg, **kw))
    if spec.axis == "y" and not samples.is_2d:
        raise ValueError("axis 'y' is not available on 1D data")
    if spec.order > cfg.poly_degree:
        raise ConfigError(f"poly_degree {cfg.poly_degree} cannot represent an order-{spec.order} derivative")
    v = samples.values[spec.field] if values is None else np.asarray(values, dtype=np.float64)
    space = ["x", "y"] if samples.is_2d else ["x"]

    times, inverse = np.unique(samples.t, return_inverse=True)
    per_slice = np.bincount(inverse)
    if spec.axis != "t" and per_slice.min() >= cfg.neighbor_count:
        names = space
        groups = [np.flatnonzero(inverse == k) for k in range(times.size)]
    else:
        names = space + ["t"]
        groups = [np.arange(samples.n)]

    exps = monomial_exponents(len(names), cfg.poly_degree)
    if cfg.neighbor_count < len(exps):
        raise ConfigError(
            f"neighbor_count {cfg.neighbor_count} < {len(exps)} monomials of degree {cfg.poly_degree} in {len(names)}D"
        )
    target = tuple(spec.order if nm == spec.axis else 0 for nm in names)
    col = exps.index(target)
    fact = float(np.prod([math.factorial(k) for k in target]))

    coords = np.column_stack([samples.coord(nm) for nm in names])
    # put axes on comparable scales before the isotropic neighbour search
    axis_scale = np.ptp(coords, axis=0)
    axis_scale[axis_scale == 0] = 1.0
    out = np.full(samples.n, np.nan)
    ok = np.zeros(samples.n, dtype=bool)
    for idx in groups:
        pts = coords[idx] / axis_scale
        k = min(cfg.neighbor_count, idx.size)
        tree = cKDTree(pts)
        dist, nb = tree.query(pts, k=k)
        if k == 1:
            dist, nb = dist[:, None], nb[:, None]
        h = np.maximum(dist[:, -1], 1e-300)
        z = (pts[nb] - pts[:, None, :]) / h[:, None, None]
        w = np.sqrt(np.exp(-0.5 * (dist / h[:, None]) ** 2))
        A = np.stack([np.prod(z ** np.array(e), axis=-1) for e in exps], axis=-1) * w[..., None]
        b = v[idx][nb] * w
        U, S, Vt = np.linalg.svd(A, full_matrices=False)
        if k >= len(exps):
            good = S[:, -1] > 1e-10 * S[:, 0]
        else:
            good = np.zeros(idx.size, dtype=bool)
        Sinv = np.where(S > 1e-10 * S[:, :1], 1.0 / np.where(S == 0, 1.0, S), 0.0)
        coef = np.einsum("nji,nj,nkj,nk->ni", Vt, Sinv, U, b)
        deriv_scale = fact / np.prod((h[:, None] * axis_scale[None, :]) ** np.array(target), axis=-1)
        out[idx] = coef[:, col] * deriv_scale
        ok[idx] = good
    bad = np.flatnonzero(~ok)
    if bad.size:
        if not ok.any():
            raise ConfigError("every local polynomial fit was rank deficient")
        good_idx = np.flatnonzero(ok)
        tree = cKDTree(coords[good_idx] / axis_scale)
        _, j = tree.query(coords[bad] / axis_scale)
        out[bad] = out[good_idx[j]]
        log.warning("%d of %d local fits were rank deficient; used nearest neighbour values", bad.size, samples.n)
    if report is not None:
        report["rank_deficient"] = report.get("rank_deficient", 0) + int(bad.size)
    return out
