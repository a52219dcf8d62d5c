"""Spatiotemporal sample sets: validation, I/O, noise, splitting and subsampling.

Samples are stored column-wise as numpy arrays. Gridded sets are ordered
row-major over ``(t, y, x)`` (``(t, x)`` in 1D), so ``x`` varies fastest.
"""

from __future__ import annotations

import csv
import math
import struct
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, ValidationError

MAGIC = b"PDEKD1"
COORD_NAMES = ("x", "y", "t")


def lattice_axis(origin: float, spacing: float, n: int) -> np.ndarray:
    """Canonical construction of one lattice axis (kept in one place so round trips are exact)."""
    return origin + spacing * np.arange(n, dtype=np.float64)


@dataclass(frozen=True)
class GridMeta:
    nx: int
    nt: int
    dx: float
    dt: float
    ny: int | None = None
    dy: float | None = None
    x0: float = 0.0
    y0: float = 0.0
    t0: float = 0.0

    @property
    def is_2d(self) -> bool:
        return self.ny is not None

    @property
    def shape(self) -> tuple[int, ...]:
        """Array shape of one field, ``(nt, ny, nx)`` or ``(nt, nx)``."""
        if self.is_2d:
            return (self.nt, self.ny, self.nx)
        return (self.nt, self.nx)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis(self, name: str) -> np.ndarray:
        if name == "x":
            return lattice_axis(self.x0, self.dx, self.nx)
        if name == "y":
            if not self.is_2d:
                raise ValueError("1D grid has no y axis")
            return lattice_axis(self.y0, self.dy, self.ny)
        if name == "t":
            return lattice_axis(self.t0, self.dt, self.nt)
        raise ValueError(f"unknown axis {name!r}")

    def spacing(self, name: str) -> float:
        return {"x": self.dx, "y": self.dy, "t": self.dt}[name]

    def array_axis(self, name: str) -> int:
        """Index of a coordinate axis in the field array."""
        if name == "t":
            return 0
        if name == "x":
            return 2 if self.is_2d else 1
        if name == "y" and self.is_2d:
            return 1
        raise ValueError(f"axis {name!r} not present on this grid")

    def lattice(self) -> tuple[np.ndarray, np.ndarray | None, np.ndarray]:
        """Flattened (x, y, t) coordinates of every lattice point in sample order."""
        if self.is_2d:
            tt, yy, xx = np.meshgrid(self.axis("t"), self.axis("y"), self.axis("x"), indexing="ij")
            return xx.ravel(), yy.ravel(), tt.ravel()
        tt, xx = np.meshgrid(self.axis("t"), self.axis("x"), indexing="ij")
        return xx.ravel(), None, tt.ravel()


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Observations of one or more scalar fields at (x[, y], t) points.

    ``y`` is ``None`` for problems with one spatial dimension. ``grid`` is set
    when the samples are exactly the points of a regular lattice.
    """

    x: np.ndarray
    t: np.ndarray
    values: dict[str, np.ndarray]
    y: np.ndarray | None = None
    grid: GridMeta | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x))
        object.__setattr__(self, "t", _frozen(self.t))
        if self.y is not None:
            object.__setattr__(self, "y", _frozen(self.y))
        object.__setattr__(self, "values", {k: _frozen(v) for k, v in self.values.items()})
        self._validate()

    def _validate(self):
        n = self.x.shape[0]
        if n < 1:
            raise ValidationError("sample set is empty")
        arrays = {"x": self.x, "t": self.t, **({"y": self.y} if self.y is not None else {})}
        arrays.update(self.values)
        for name, a in arrays.items():
            if a.ndim != 1 or a.shape[0] != n:
                raise ValidationError(f"column {name!r} has shape {a.shape}, expected ({n},)")
            if not np.all(np.isfinite(a)):
                bad = int(np.flatnonzero(~np.isfinite(a))[0])
                raise ValidationError(f"non-finite value in column {name!r} at sample {bad}")
        if not self.values:
            raise ValidationError("sample set has no fields")
        for name in self.values:
            if name in COORD_NAMES:
                raise ValidationError(f"field name {name!r} clashes with a coordinate")
        g = self.grid
        if g is not None:
            if g.is_2d != (self.y is not None):
                raise ValidationError("grid dimensionality does not match coordinates")
            if g.size != n:
                raise ValidationError(f"grid has {g.size} points but set has {n} samples")
            lx, ly, lt = g.lattice()
            pairs = [(self.x, lx, g.dx), (self.t, lt, g.dt)]
            if ly is not None:
                pairs.append((self.y, ly, g.dy))
            for got, want, h in pairs:
                if np.max(np.abs(got - want)) > 1e-9 * abs(h):
                    raise ValidationError("coordinates are not the lattice points of grid_meta")

    # -- convenience ---------------------------------------------------------

    @property
    def n(self) -> int:
        return int(self.x.shape[0])

    def __len__(self) -> int:
        return self.n

    @property
    def is_2d(self) -> bool:
        return self.y is not None

    @property
    def field_names(self) -> list[str]:
        return list(self.values)

    def coord(self, name: str) -> np.ndarray:
        if name == "y" and self.y is None:
            raise ValueError("1D sample set has no y coordinate")
        return {"x": self.x, "y": self.y, "t": self.t}[name]

    def coords(self) -> np.ndarray:
        """N x d array of (x[, y], t)."""
        cols = [self.x, self.y, self.t] if self.is_2d else [self.x, self.t]
        return np.column_stack(cols)

    def spatial_coords(self) -> np.ndarray:
        cols = [self.x, self.y] if self.is_2d else [self.x]
        return np.column_stack(cols)

    def grid_values(self, name: str) -> np.ndarray:
        if self.grid is None:
            raise ValueError("sample set is not gridded")
        return self.values[name].reshape(self.grid.shape)

    def subset(self, index) -> SampleSet:
        """Samples at ``index`` (integer array or boolean mask); grid metadata is dropped."""
        index = np.asarray(index)
        return SampleSet(
            x=self.x[index],
            t=self.t[index],
            y=None if self.y is None else self.y[index],
            values={k: v[index] for k, v in self.values.items()},
        )

    def with_values(self, values: dict[str, np.ndarray]) -> SampleSet:
        return replace(self, values=dict(values))

    def equals(self, other: SampleSet) -> bool:
        """Exact (bitwise-value) equality of coordinates, fields and grid metadata."""
        if self.grid != other.grid or self.field_names != other.field_names:
            return False
        if (self.y is None) != (other.y is None):
            return False
        same = np.array_equal(self.x, other.x) and np.array_equal(self.t, other.t)
        if self.y is not None:
            same = same and np.array_equal(self.y, other.y)
        return same and all(np.array_equal(self.values[k], other.values[k]) for k in self.values)


def from_grid(grid: GridMeta, fields: dict[str, np.ndarray]) -> SampleSet:
    """Build a gridded set from field arrays shaped ``grid.shape``."""
    x, y, t = grid.lattice()
    vals = {}
    for k, v in fields.items():
        v = np.asarray(v, dtype=np.float64)
        if v.shape != grid.shape:
            raise ValidationError(f"field {k!r} has shape {v.shape}, grid expects {grid.shape}")
        vals[k] = v.ravel()
    return SampleSet(x=x, y=y, t=t, values=vals, grid=grid)


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.3
    dev_frac: float = 0.3
    test_frac: float = 0.4

    def __post_init__(self):
        fr = (self.train_frac, self.dev_frac, self.test_frac)
        if any(not (0.0 < f <= 1.0) for f in fr):
            raise ConfigError(f"split fractions must lie in (0, 1], got {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {sum(fr)}")


@dataclass(frozen=True)
class NoiseSpec:
    level: float
    seed: int = 0

    def __post_init__(self):
        if not self.level >= 0:
            raise ConfigError(f"noise level must be >= 0, got {self.level}")


# -- noise ---------------------------------------------------------------------

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix64(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arithmetic wraps
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def keyed_normals(seed: int, name: str, coords: list[np.ndarray]) -> np.ndarray:
    """Standard normal draws keyed by (seed, field name, coordinate tuple).

    The draw for a sample depends only on its coordinates, so it is the same
    whatever the order of the samples or which subset they came from.
    """
    with np.errstate(over="ignore"):
        base = _mix64(np.array([(seed & 0xFFFFFFFFFFFFFFFF)], dtype=np.uint64))[0]
        h = np.full(coords[0].shape, base ^ np.uint64(zlib.crc32(name.encode())), dtype=np.uint64)
        for c in coords:
            bits = (np.asarray(c, dtype=np.float64) + 0.0).view(np.uint64)  # + 0.0 folds -0.0
            h = _mix64(h ^ (bits + _GOLDEN))
        u1 = (_mix64(h ^ np.uint64(1)) >> np.uint64(11)).astype(np.float64)
        u2 = (_mix64(h ^ np.uint64(2)) >> np.uint64(11)).astype(np.float64)
    u1 = (u1 + 1.0) * 2.0**-53  # (0, 1]
    u2 = u2 * 2.0**-53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def add_noise(samples: SampleSet, spec: NoiseSpec, scale: dict[str, float] | None = None) -> SampleSet:
    """Add Gaussian noise of relative level ``spec.level`` to every field.

    Each field gets ``level * std(field) * g``, with ``std`` taken over the
    whole set unless ``scale`` pins it, and ``g`` drawn by :func:`keyed_normals`.
    """
    if spec.level == 0:
        return samples
    coords = [samples.x, samples.t] if samples.y is None else [samples.x, samples.y, samples.t]
    noisy = {}
    for name, v in samples.values.items():
        s = float(np.std(v)) if scale is None else float(scale[name])
        noisy[name] = v + spec.level * s * keyed_normals(spec.seed, name, coords)
    return samples.with_values(noisy)


# -- splitting / subsampling -----------------------------------------------------


def split_counts(h: int, spec: SplitSpec) -> tuple[int, int, int]:
    n_train = int(math.floor(spec.train_frac * h + 0.5))
    n_dev = int(math.floor(spec.dev_frac * h + 0.5))
    n_test = h - n_train - n_dev
    if min(n_train, n_dev, n_test) < 1:
        raise ConfigError(f"split {spec} of {h} time slices leaves an empty part ({n_train}/{n_dev}/{n_test})")
    return n_train, n_dev, n_test


def split_temporal(samples: SampleSet, spec: SplitSpec) -> tuple[SampleSet, SampleSet, SampleSet]:
    """Partition by ascending time slice into train / dev / test sets."""
    times = np.unique(samples.t)
    if times.size < 3:
        raise ConfigError(f"need at least 3 distinct times to split, got {times.size}")
    n_train, n_dev, _ = split_counts(times.size, spec)
    t_dev = times[n_train]
    t_test = times[n_train + n_dev]
    parts = (samples.t < t_dev, (samples.t >= t_dev) & (samples.t < t_test), samples.t >= t_test)
    return tuple(_subset_keep_grid(samples, m) for m in parts)


def _subset_keep_grid(samples: SampleSet, mask: np.ndarray) -> SampleSet:
    # a contiguous block of whole time slices of a grid is itself a grid
    g = samples.grid
    if g is None:
        return samples.subset(mask)
    idx = np.flatnonzero(mask)
    per_slice = g.size // g.nt
    sub = replace(g, nt=idx.size // per_slice, t0=float(samples.t[idx[0]]))
    try:
        return SampleSet(
            x=samples.x[idx], y=None if samples.y is None else samples.y[idx], t=samples.t[idx],
            values={k: v[idx] for k, v in samples.values.items()}, grid=sub,
        )
    except ValidationError:  # t0 + k*dt drifted from the parent lattice
        return samples.subset(idx)


def subsample_irregular(samples: SampleSet, count: int, seed: int) -> SampleSet:
    """Uniform random subset of ``count`` samples without replacement (original order kept)."""
    return samples.subset(subsample_indices(samples.n, count, seed))


def subsample_indices(n: int, count: int, seed: int) -> np.ndarray:
    """Sorted indices of the subset drawn by :func:`subsample_irregular`."""
    if count > n or count < 1:
        raise ValueError(f"cannot draw {count} samples from a set of {n}")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=count, replace=False))


# -- I/O ---------------------------------------------------------------------------


def save_samples(samples: SampleSet, path, format: str | None = None) -> None:
    """Write ``samples`` as CSV or grid-binary (chosen from ``format`` or the suffix)."""
    path = Path(path)
    fmt = format or ("csv" if path.suffix.lower() == ".csv" else "grid-binary")
    if fmt == "csv":
        _save_csv(samples, path)
    elif fmt == "grid-binary":
        _save_binary(samples, path)
    else:
        raise ValueError(f"unknown format {fmt!r}")


def load_samples(path, format: str | None = None) -> SampleSet:
    path = Path(path)
    if format is None:
        with open(path, "rb") as fh:
            format = "grid-binary" if fh.read(len(MAGIC)) == MAGIC else "csv"
    if format == "csv":
        return _load_csv(path)
    if format == "grid-binary":
        return _load_binary(path)
    raise ValueError(f"unknown format {format!r}")


def _save_csv(samples: SampleSet, path: Path) -> None:
    cols = ["x"] + (["y"] if samples.is_2d else []) + ["t"] + samples.field_names
    data = np.column_stack([samples.coord(c) if c in COORD_NAMES else samples.values[c] for c in cols])
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        np.savetxt(fh, data, delimiter=",", fmt="%.17g")


def _load_csv(path: Path) -> SampleSet:
    header = None
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            if header is None:
                header = [c.strip() for c in row]
                if "x" not in header or "t" not in header:
                    raise FormatError("header must name at least x and t columns", line=lineno)
                if len(set(header)) != len(header):
                    raise FormatError("duplicate column names in header", line=lineno)
                if len(header) <= len([c for c in header if c in COORD_NAMES]):
                    raise FormatError("header names no field columns", line=lineno)
                continue
            if len(row) != len(header):
                raise FormatError(f"expected {len(header)} columns, got {len(row)}", line=lineno)
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise FormatError(str(exc), line=lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise ValidationError(f"line {lineno}: non-finite value")
            rows.append(vals)
    if header is None:
        raise FormatError("file is empty", line=1)
    if not rows:
        raise FormatError("no data rows")
    data = np.array(rows, dtype=np.float64)
    col = {name: data[:, i] for i, name in enumerate(header)}
    coords = [col["x"]] + ([col["y"]] if "y" in col else []) + [col["t"]]
    keys = np.column_stack(coords)
    if np.unique(keys, axis=0).shape[0] != keys.shape[0]:
        raise ValidationError("duplicate coordinate tuple")
    fields = {k: v for k, v in col.items() if k not in COORD_NAMES}
    samples = SampleSet(x=col["x"], y=col.get("y"), t=col["t"], values=fields)
    return infer_grid(samples)


def _uniform_axis(vals: np.ndarray):
    u = np.unique(vals)
    if u.size == 1:
        return u[0], 1.0, 1
    h = (u[-1] - u[0]) / (u.size - 1)
    if h <= 0 or np.max(np.abs(lattice_axis(u[0], h, u.size) - u)) > 1e-9 * h:
        return None
    # prefer the spacing between the first two points when it reproduces the axis exactly
    h1 = u[1] - u[0]
    if np.array_equal(lattice_axis(u[0], h1, u.size), u):
        h = h1
    return float(u[0]), float(h), int(u.size)


def infer_grid(samples: SampleSet) -> SampleSet:
    """Attach grid metadata (reordering to lattice order) if the samples form a complete lattice."""
    if samples.grid is not None:
        return samples
    axes = {}
    for name in ("x", "y", "t"):
        if name == "y" and samples.y is None:
            continue
        ax = _uniform_axis(samples.coord(name))
        if ax is None:
            return samples
        axes[name] = ax
    total = int(np.prod([a[2] for a in axes.values()]))
    if total != samples.n:
        return samples
    (x0, dx, nx), (t0, dt, nt) = axes["x"], axes["t"]
    y0, dy, ny = axes.get("y", (0.0, None, None))
    grid = GridMeta(nx=nx, nt=nt, dx=dx, dt=dt, ny=ny, dy=dy, x0=x0, y0=y0, t0=t0)
    ix = np.rint((samples.x - x0) / dx).astype(np.int64)
    it = np.rint((samples.t - t0) / dt).astype(np.int64)
    if ny is not None:
        iy = np.rint((samples.y - y0) / dy).astype(np.int64)
        flat = (it * ny + iy) * nx + ix
    else:
        flat = it * nx + ix
    order = np.argsort(flat, kind="stable")
    if not np.array_equal(flat[order], np.arange(total)):
        return samples
    lx, ly, lt = grid.lattice()
    try:
        return SampleSet(x=lx, y=ly, t=lt, values={k: v[order] for k, v in samples.values.items()}, grid=grid)
    except ValidationError:
        return samples


def _save_binary(samples: SampleSet, path: Path) -> None:
    g = samples.grid
    if g is None:
        raise ValueError("grid-binary format requires a gridded sample set; use CSV for scattered data")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", 2 if g.is_2d else 1))
        fh.write(struct.pack("<qqq", g.nx, g.ny or 0, g.nt))
        fh.write(struct.pack("<dddddd", g.x0, g.dx, g.y0, g.dy or 0.0, g.t0, g.dt))
        fh.write(struct.pack("<I", len(samples.values)))
        for name in samples.field_names:
            b = name.encode()
            fh.write(struct.pack("<H", len(b)) + b)
        for name in samples.field_names:
            fh.write(samples.values[name].astype("<f8").tobytes())


def _load_binary(path: Path) -> SampleSet:
    raw = path.read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise FormatError("bad magic; not a PDEKD1 grid-binary file")
    try:
        off = len(MAGIC)
        (ndim,) = struct.unpack_from("<B", raw, off)
        off += 1
        nx, ny, nt = struct.unpack_from("<qqq", raw, off)
        off += 24
        x0, dx, y0, dy, t0, dt = struct.unpack_from("<dddddd", raw, off)
        off += 48
        (nf,) = struct.unpack_from("<I", raw, off)
        off += 4
        names = []
        for _ in range(nf):
            (ln,) = struct.unpack_from("<H", raw, off)
            off += 2
            names.append(raw[off : off + ln].decode())
            off += ln
    except struct.error as exc:
        raise FormatError(f"truncated header: {exc}") from None
    grid = GridMeta(nx=nx, nt=nt, dx=dx, dt=dt, x0=x0, t0=t0,
                    **({"ny": ny, "dy": dy, "y0": y0} if ndim == 2 else {}))
    n = grid.size
    if len(raw) - off != 8 * n * nf:
        raise FormatError(f"payload has {len(raw) - off} bytes, expected {8 * n * nf}")
    fields = {}
    for name in names:
        fields[name] = np.frombuffer(raw, dtype="<f8", count=n, offset=off).astype(np.float64)
        off += 8 * n
    x, y, t = grid.lattice()
    return SampleSet(x=x, y=y, t=t, values=fields, grid=grid)
