"""Candidate term libraries: the design matrix Theta(u) and the target u_t."""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .differentiation import (
    DerivSpec,
    DiffConfig,
    differentiate_grid,
    differentiate_grid_polynomial,
    differentiate_scattered,
    smooth_field,
)
from .errors import ConfigError, ValidationError
from .field_data import GridMeta, SampleSet

COLUMN_PREFIX = "lib:"  # fields named "lib:<term>" hold precomputed library columns

Poly = tuple  # tuple of (field, exponent) pairs sorted by field name; () is the constant


def parse_poly(spec) -> Poly:
    """``"1"``, ``"u"``, ``"u^2"``, ``"u*v"`` or a mapping ``{"u": 2}`` -> canonical poly tuple."""
    if isinstance(spec, dict):
        items = spec.items()
    elif isinstance(spec, tuple):
        items = spec
    else:
        s = str(spec).replace(" ", "")
        if s in ("", "1"):
            return ()
        items = []
        for f in s.split("*"):
            name, _, exp = f.partition("^")
            items.append((name, int(exp) if exp else 1))
    acc: dict[str, int] = {}
    for name, e in items:
        if e:
            acc[name] = acc.get(name, 0) + int(e)
    return tuple(sorted(acc.items()))


_DERIV_RE = re.compile(r"^([A-Za-z]\w*?)_([xyt])\2*$")
_LAP_RE = re.compile(r"^lap\((\w+)\)$")


def parse_deriv(spec) -> DerivSpec | None:
    """``"1"`` -> None, ``"u_xx"`` -> DerivSpec("u", "x", 2), ``"lap(u)"`` -> Laplacian."""
    if spec is None or isinstance(spec, DerivSpec):
        return spec
    s = str(spec).replace(" ", "")
    if s == "1":
        return None
    m = _LAP_RE.match(s)
    if m:
        return DerivSpec(m.group(1), "lap", 2)
    m = _DERIV_RE.match(s)
    if not m:
        raise ConfigError(f"cannot parse derivative {spec!r}")
    name, axis = m.group(1), m.group(2)
    order = len(s) - len(name) - 1
    return DerivSpec(name, axis, order)


def poly_name(poly: Poly) -> str:
    if not poly:
        return "1"
    return "*".join(f if e == 1 else f"{f}^{e}" for f, e in poly)


@dataclass(frozen=True)
class TermDescriptor:
    poly: Poly
    deriv: DerivSpec | None

    @property
    def name(self) -> str:
        if self.deriv is None:
            return poly_name(self.poly)
        if not self.poly:
            return self.deriv.name
        return f"{poly_name(self.poly)}*{self.deriv.name}"

    @property
    def degree(self) -> int:
        return sum(e for _, e in self.poly)

    @property
    def deriv_order(self) -> int:
        return 0 if self.deriv is None else self.deriv.order

    def sort_key(self):
        const = self.deriv is None and not self.poly
        return (not const, self.degree, self.deriv_order, self.name)


def canonical_term(name: str) -> str:
    """Order-insensitive canonical form of a product term name ("u_x*u" == "u*u_x")."""
    s = name.replace(" ", "").replace("·", "*")
    if s == "1":
        return "1"
    acc: dict[str, int] = {}
    for f in s.split("*"):
        if f == "1":
            continue
        base, _, exp = f.partition("^")
        acc[base] = acc.get(base, 0) + (int(exp) if exp else 1)
    if not acc:
        return "1"
    return "*".join(b if e == 1 else f"{b}^{e}" for b, e in sorted(acc.items()))


@dataclass(frozen=True, eq=False)
class TermLibrary:
    """Per-sample candidate term values and regression target.

    ``block_index`` maps samples to rows of ``block_coords``; several
    libraries (train/dev/test) may share one block table.
    """

    terms: list
    design: np.ndarray
    target: np.ndarray
    coords: np.ndarray  # N x (d + 1): spatial coordinates then t
    block_index: np.ndarray
    block_coords: np.ndarray
    target_name: str = "u_t"
    state: np.ndarray | None = None  # values of the target field, for reconstruction penalties

    def __post_init__(self):
        n, p = self.design.shape
        names = [t.name for t in self.terms]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate term names")
        if p != len(self.terms):
            raise ValidationError(f"design has {p} columns for {len(self.terms)} terms")
        if self.target.shape != (n,) or self.block_index.shape != (n,) or self.coords.shape[0] != n:
            raise ValidationError("library arrays disagree on sample count")
        if not (np.all(np.isfinite(self.design)) and np.all(np.isfinite(self.target))):
            raise ValidationError("library contains non-finite entries")
        if n and (self.block_index.min() < 0 or self.block_index.max() >= self.block_coords.shape[0]):
            raise ValidationError("block index out of range")

    @property
    def n_samples(self) -> int:
        return int(self.design.shape[0])

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @property
    def n_blocks(self) -> int:
        return int(self.block_coords.shape[0])

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.terms]

    @property
    def spatial_dim(self) -> int:
        return self.coords.shape[1] - 1

    @property
    def t(self) -> np.ndarray:
        return self.coords[:, -1]

    def index(self, name: str) -> int:
        want = canonical_term(name)
        for i, t in enumerate(self.terms):
            if canonical_term(t.name) == want:
                return i
        raise KeyError(f"term {name!r} not in library")

    def subset(self, rows) -> TermLibrary:
        rows = np.asarray(rows)
        return replace(
            self,
            design=self.design[rows],
            target=self.target[rows],
            coords=self.coords[rows],
            block_index=self.block_index[rows],
            state=None if self.state is None else self.state[rows],
        )

    def select_terms(self, idx) -> TermLibrary:
        idx = list(idx)
        return replace(self, terms=[self.terms[i] for i in idx], design=self.design[:, idx])


def _derivative_values(samples: SampleSet, spec: DerivSpec, cfg: DiffConfig, cache: dict) -> np.ndarray:
    if spec.name in samples.values:
        return samples.values[spec.name]
    if spec.name in cache:
        return cache[spec.name]
    if cfg.mode == "grid-central" and samples.grid is not None:
        v = samples.values[spec.field]
        if cfg.smoothing_window > 1:
            v = smooth_field(v, samples, cfg.smoothing_window)
        out = differentiate_grid(samples, spec, values=v)
    elif cfg.mode == "grid-polynomial":
        out = differentiate_grid_polynomial(samples, spec, cfg.smoothing_window, cfg.poly_degree)
    else:
        out = differentiate_scattered(samples, spec, cfg)
    cache[spec.name] = out
    return out


def build_library(
    samples: SampleSet,
    polys,
    derivs,
    cfg: DiffConfig | None = None,
    target: str | DerivSpec = "u_t",
) -> TermLibrary:
    """Cartesian product of polynomial and derivative specs, evaluated per sample.

    Derivative columns already present in ``samples`` (a field named like
    ``u_xx``) are used as given; others are computed according to ``cfg``.
    Fields named ``lib:<term name>`` (and ``lib:<target>``) replace the
    computed column outright; see :func:`smooth_library`. Every sample is its
    own block until :func:`group_blocks` is applied.
    """
    cfg = cfg or DiffConfig()
    polys = [parse_poly(p) for p in polys]
    derivs = [parse_deriv(d) for d in derivs]
    target = parse_deriv(target)
    if not polys or not derivs:
        raise ConfigError("polynomial and derivative lists must be non-empty")
    if target is None or target.axis != "t" or target.order != 1:
        raise ConfigError("target must be a first-order time derivative")
    for p in polys:
        for f, _ in p:
            if f not in samples.values:
                raise ConfigError(f"polynomial references unknown field {f!r}")
    for d in derivs:
        if d is not None and d.field not in samples.values:
            raise ConfigError(f"derivative references unknown field {d.field!r}")

    terms = {}
    for p in polys:
        for d in derivs:
            td = TermDescriptor(p, d)
            terms.setdefault(td.name, td)
    terms = sorted(terms.values(), key=TermDescriptor.sort_key)

    cache: dict = {}
    cols = []
    for td in terms:
        pre = samples.values.get(COLUMN_PREFIX + td.name)
        if pre is not None:
            cols.append(pre)
            continue
        col = np.ones(samples.n)
        for f, e in td.poly:
            col = col * samples.values[f] ** e
        if td.deriv is not None:
            col = col * _derivative_values(samples, td.deriv, cfg, cache)
        cols.append(col)
    design = np.column_stack(cols)
    y = samples.values.get(COLUMN_PREFIX + target.name)
    if y is None:
        y = _derivative_values(samples, target, cfg, cache)
    coords = samples.coords()
    return TermLibrary(
        terms=terms,
        design=design,
        target=np.array(y, dtype=np.float64),
        coords=coords,
        block_index=np.arange(samples.n),
        block_coords=coords[:, :-1].copy(),
        target_name=target.name,
        state=np.array(samples.values[target.field], dtype=np.float64),
    )


def normalize_columns(lib: TermLibrary) -> tuple[TermLibrary, np.ndarray]:
    """Divide each design column by its root-mean-square.

    Returns the scaled library and the scale factors; a coefficient ``c``
    fitted on the scaled column corresponds to ``c / scale`` on the original.
    All-zero columns keep scale 1.
    """
    rms = np.sqrt(np.mean(lib.design**2, axis=0))
    zero = rms == 0
    scales = np.where(zero, 1.0, rms)
    return replace(lib, design=lib.design / scales), scales


def scale_library(lib: TermLibrary, scales: np.ndarray) -> TermLibrary:
    """Apply scale factors computed on another library (e.g. train scales to a test split)."""
    return replace(lib, design=lib.design / scales)


def group_blocks(lib: TermLibrary, quantization: float = 0.0) -> TermLibrary:
    """Assign samples to spatial blocks; see :func:`assign_blocks`."""
    return assign_blocks([lib], quantization)[0]


def assign_blocks(libs: list[TermLibrary], quantization: float = 0.0) -> list[TermLibrary]:
    """Group samples of several libraries into one shared table of spatial blocks.

    Samples whose spatial coordinates agree after rounding to multiples of
    ``quantization`` share a block (``0`` means exact coordinates). Block
    coordinates are the centroids of their members.
    """
    if quantization < 0:
        raise ConfigError("quantization must be >= 0")
    spatial = np.vstack([lib.coords[:, :-1] for lib in libs])
    keys = spatial if quantization == 0 else np.round(spatial / quantization)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    counts = np.bincount(inverse, minlength=uniq.shape[0]).astype(np.float64)
    centroids = np.zeros((uniq.shape[0], spatial.shape[1]))
    for d in range(spatial.shape[1]):
        centroids[:, d] = np.bincount(inverse, weights=spatial[:, d], minlength=uniq.shape[0]) / counts
    if quantization == 0:
        centroids = uniq.astype(np.float64)
    out, start = [], 0
    for lib in libs:
        stop = start + lib.n_samples
        out.append(replace(lib, block_index=inverse[start:stop].copy(), block_coords=centroids))
        start = stop
    return out


def smooth_library(lib: TermLibrary, grid: GridMeta, sigma, periodic=()) -> TermLibrary:
    """Gaussian-filter every design column and the target over the grid.

    ``lib`` must hold one sample per lattice point in grid order. ``sigma``
    gives the filter width in cells per array axis ``(t[, y], x)``; axes
    named in ``periodic`` wrap around, the rest repeat their edge values.
    Because the same linear filter is applied to both sides, a
    constant-coefficient relation ``u_t = sum_k xi_k theta_k`` holds exactly
    for the filtered columns, while noise in the high-order derivative
    columns is averaged away after the products are formed.
    """
    if lib.n_samples != grid.size:
        raise ValidationError("smooth_library needs one sample per lattice point")
    names = ("t", "y", "x") if grid.is_2d else ("t", "x")
    sigma = tuple(float(s) for s in sigma)
    if len(sigma) != len(names) or min(sigma) < 0:
        raise ConfigError(f"sigma needs {len(names)} non-negative widths (t, space...)")
    modes = tuple("wrap" if n in periodic else "nearest" for n in names)

    def filt(col):
        return gaussian_filter(col.reshape(grid.shape), sigma, mode=modes).ravel()

    design = np.column_stack([filt(lib.design[:, j]) for j in range(lib.n_terms)])
    return replace(lib, design=design, target=filt(lib.target))
