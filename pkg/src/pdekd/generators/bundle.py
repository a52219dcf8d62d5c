"""Reproducible benchmark bundles: data generation, noise, derivatives, sampling, splits.

A bundle holds train/dev/test sample sets whose fields include the
derivative columns needed by the dataset's candidate library, the ground
truth, and the dataset configuration (library, stopping rule, kernel
hyperparameters). Derivatives are taken on the full noisy grid before
irregular subsampling.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.signal import savgol_filter

from ..differentiation import DiffConfig, differentiate_grid, differentiate_grid_polynomial, smooth_field
from ..errors import ConfigError
from ..field_data import (
    GridMeta,
    NoiseSpec,
    SampleSet,
    SplitSpec,
    add_noise,
    from_grid,
    load_samples,
    save_samples,
    split_temporal,
    subsample_indices,
)
from ..kernel_model import KernelConfig
from ..term_library import (
    COLUMN_PREFIX,
    TermLibrary,
    assign_blocks,
    build_library,
    normalize_columns,
    parse_deriv,
    scale_library,
    smooth_library,
)
from .chafee import gen_chafee_infante
from .kle import gen_kle_field
from .seepage import gen_seepage
from .spectral import gen_burgers2d, gen_kdv
from .truth import GroundTruth

log = logging.getLogger(__name__)

HNC_SEEDS = {"hnc1": 1, "hnc2": 2, "hnc3": 3, "hnc4": 4, "hnc5": 5}
ONE_BLOCK = 1e9  # quantization step larger than any domain: every sample in one block


@dataclass(frozen=True)
class DatasetConfig:
    """Everything needed to turn a generator run into a discovery problem."""

    name: str
    polys: tuple
    derivs: tuple
    targets: tuple = ("u_t",)
    L: dict = field(default_factory=dict)
    priors: dict = field(default_factory=dict)
    radius: float = 10.0
    gamma: float = 1.0
    ridge: float = 1e-6
    quantization: float = 0.0
    diff_mode: str = "grid-central"
    smoothing_window: int = 1
    poly_degree: int = 3
    trim_time: int = 0
    trim_space: int = 0
    column_sigma: tuple = ()
    periodic: tuple = ()
    sample_count: int = 10000
    noise: float = 0.1
    generator: dict = field(default_factory=dict)

    def diff_config(self, noise: float) -> DiffConfig:
        window = self.smoothing_window
        if self.diff_mode == "grid-central" and noise >= 0.1 and window == 1 and self._needs_third():
            window = 5  # pre-smoothing for third derivatives at high noise
        return DiffConfig(mode=self.diff_mode, poly_degree=self.poly_degree, smoothing_window=window)

    def _needs_third(self) -> bool:
        return any((d := parse_deriv(s)) is not None and d.order >= 3 for s in self.derivs)

    def kernel_config(self, **overrides) -> KernelConfig:
        kw = dict(radius=self.radius, gamma=self.gamma, ridge=self.ridge)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return KernelConfig(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("polys", "derivs", "targets", "column_sigma", "periodic"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> DatasetConfig:
        d = dict(d)
        for k in ("polys", "derivs", "targets", "column_sigma", "periodic"):
            d[k] = tuple(d.get(k, ()))
        return cls(**d)


_HNC = dict(
    polys=("1", "u", "u^2"),
    derivs=("u_x", "u_y", "u_xx", "u_yy"),
    L={"u_t": 4},
    radius=10.0,
    gamma=1.0,
    ridge=1e-1,
    quantization=2.0,
    diff_mode="grid-polynomial",
    smoothing_window=15,
    poly_degree=3,
    trim_time=3,
    trim_space=3,
    sample_count=10000,
    noise=0.05,
)

DATASETS: dict[str, DatasetConfig] = {
    "kdv": DatasetConfig(
        name="kdv", polys=("1", "u", "u^2"), derivs=("1", "u_x", "u_xx", "u_xxx"), L={"u_t": 2},
        quantization=ONE_BLOCK, diff_mode="grid-polynomial", smoothing_window=7, poly_degree=4,
        column_sigma=(4.0, 14.0), periodic=("x",), trim_time=15, trim_space=0, sample_count=5000, noise=0.1,
    ),
    "chafee": DatasetConfig(
        name="chafee", polys=("1", "u", "u^2", "u^3"), derivs=("1", "u_x", "u_xx", "u_xxx"), L={"u_t": 3},
        quantization=ONE_BLOCK, diff_mode="grid-polynomial", smoothing_window=7, poly_degree=4,
        column_sigma=(6.0, 8.0), trim_time=21, trim_space=27, sample_count=5000, noise=0.1,
    ),
    "burgers": DatasetConfig(
        name="burgers", polys=("1", "u", "v", "u^2", "u*v", "v^2"),
        derivs=("1", "u_x", "u_y", "v_x", "v_y", "lap(u)", "lap(v)"), targets=("u_t", "v_t"),
        L={"u_t": 3, "v_t": 3}, priors={"u_t": ["lap(u)"], "v_t": ["lap(v)"]},
        quantization=ONE_BLOCK, diff_mode="grid-polynomial", smoothing_window=7, poly_degree=4,
        column_sigma=(6.0, 3.0), periodic=("x", "y"), trim_time=21, trim_space=0, sample_count=10000, noise=0.1,
    ),
}
for _name, _seed in HNC_SEEDS.items():
    DATASETS[_name] = DatasetConfig(name=_name, generator={"kle_seed": _seed}, **_HNC)


def dataset_config(name: str) -> DatasetConfig:
    try:
        return DATASETS[name]
    except KeyError:
        raise ConfigError(f"unknown benchmark {name!r}; choose from {sorted(DATASETS)}", key="name") from None


def substream_seed(seed: int, stream: str) -> int:
    """Independent 32-bit seed for a named random stream of a bundle."""
    digest = hashlib.sha256(f"{seed}:{stream}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def generate_raw(name: str, seed: int = 0, **overrides) -> tuple[SampleSet, GroundTruth]:
    """Run the generator behind benchmark ``name`` (noise-free, full grid)."""
    cfg = dataset_config(name)
    kw = dict(cfg.generator)
    kw.update(overrides)
    gen_seed = substream_seed(seed, "generator")
    if name == "kdv":
        return gen_kdv(seed=gen_seed, **kw)
    if name == "chafee":
        return gen_chafee_infante(seed=gen_seed, **kw)
    if name == "burgers":
        return gen_burgers2d(seed=gen_seed, **kw)
    kle_seed = kw.pop("kle_seed")
    kle_kw = {k: kw.pop(k) for k in list(kw) if k in ("nx", "ny", "n_terms", "correlation_length")}
    return gen_seepage(gen_kle_field(seed=kle_seed, **kle_kw), **kw)


def _needed_derivatives(cfg: DatasetConfig) -> list:
    specs = {}
    for s in list(cfg.derivs) + list(cfg.targets):
        d = parse_deriv(s)
        if d is not None:
            specs[d.name] = d
    return list(specs.values())


def differentiate_all(samples: SampleSet, derivs, cfg: DiffConfig, periodic=()) -> dict:
    """Derivative arrays on the full grid, keyed by derivative name."""
    out = {}
    smoothed = {}
    for spec in derivs:
        if cfg.mode == "grid-polynomial":
            out[spec.name] = differentiate_grid_polynomial(samples, spec, cfg.smoothing_window, cfg.poly_degree,
                                                           periodic=periodic)
        else:
            if spec.field not in smoothed:
                v = samples.values[spec.field]
                smoothed[spec.field] = smooth_field(v, samples, cfg.smoothing_window) if cfg.smoothing_window > 1 else v
            out[spec.name] = differentiate_grid(samples, spec, values=smoothed[spec.field])
    return out


def _state_fields(cfg: DatasetConfig) -> set:
    return {parse_deriv(t).field for t in cfg.targets}


def _filtered(samples: SampleSet, name: str, diff: DiffConfig, periodic) -> np.ndarray:
    """The field itself passed through the derivative filter with zero derivative order."""
    if diff.mode != "grid-polynomial":
        return smooth_field(samples.values[name], samples, diff.smoothing_window) if diff.smoothing_window > 1 \
            else samples.values[name]
    g = samples.grid
    arr = samples.values[name].reshape(g.shape)
    names = ("t", "y", "x") if g.is_2d else ("t", "x")
    for ax_name in names:
        arr = savgol_filter(arr, diff.smoothing_window, diff.poly_degree, axis=g.array_axis(ax_name),
                            mode="wrap" if ax_name in periodic else "interp")
    return arr.ravel()


def smoothed_columns(full: SampleSet, cfg: DatasetConfig, pick) -> dict:
    """Gaussian-smoothed library columns and targets as ``lib:``-prefixed fields.

    Each column is formed and filtered on the full grid, then reduced with
    ``pick`` (full-grid array to kept samples), one term at a time so that
    only a few full-grid arrays are alive at once.
    """
    g = full.grid
    sigma = (cfg.column_sigma[0],) + (cfg.column_sigma[1],) * (2 if g.is_2d else 1)
    # polynomial factors get the same light filter as the derivative factors
    diff = cfg.diff_config(0.0)
    light = {f: _filtered(full, f, diff, cfg.periodic) for f in _state_fields(cfg)}
    base = full.with_values({**full.values, **light})
    out = {}
    for target in cfg.targets:
        for poly in cfg.polys:
            for deriv in cfg.derivs:
                lib = build_library(base, [poly], [deriv], target=target)
                name = COLUMN_PREFIX + lib.names[0]
                if name not in out:
                    out[name] = pick(smooth_library(lib, g, sigma, cfg.periodic).design[:, 0])
        col = build_library(base, ["1"], ["1"], target=target)
        out[COLUMN_PREFIX + target] = pick(smooth_library(col, g, sigma, cfg.periodic).target)
    return out


def _crop_slices(g: GridMeta, trim_time: int, trim_space: int) -> tuple:
    lt, ls = trim_time, trim_space
    if g.nt - 2 * lt < 3 or g.nx - 2 * ls < 1 or (g.is_2d and g.ny - 2 * ls < 1):
        raise ConfigError("trimming leaves too small a grid")
    space = (slice(ls, g.ny - ls), slice(ls, g.nx - ls)) if g.is_2d else (slice(ls, g.nx - ls),)
    return (slice(lt, g.nt - lt),) + space


def crop_grid(samples: SampleSet, trim_time: int, trim_space: int) -> SampleSet:
    """Drop ``trim_time`` slices at both time ends and ``trim_space`` cells at every spatial edge."""
    g = samples.grid
    if trim_time == 0 and trim_space == 0:
        return samples
    lt, ls = trim_time, trim_space
    sl = _crop_slices(g, lt, ls)
    if g.is_2d:
        new = replace(g, nt=g.nt - 2 * lt, ny=g.ny - 2 * ls, nx=g.nx - 2 * ls,
                      t0=g.t0 + lt * g.dt, y0=g.y0 + ls * g.dy, x0=g.x0 + ls * g.dx)
    else:
        new = replace(g, nt=g.nt - 2 * lt, nx=g.nx - 2 * ls, t0=g.t0 + lt * g.dt, x0=g.x0 + ls * g.dx)
    return from_grid(new, {k: v.reshape(g.shape)[sl] for k, v in samples.values.items()})


@dataclass(frozen=True, eq=False)
class Bundle:
    """A benchmark instance ready for discovery."""

    name: str
    train: SampleSet
    dev: SampleSet
    test: SampleSet
    truth: GroundTruth
    config: DatasetConfig
    noise: float
    seed: int
    sample_count: int
    meta: dict = field(default_factory=dict)

    @property
    def splits(self) -> dict:
        return {"train": self.train, "dev": self.dev, "test": self.test}

    def libraries(self, target: str = "u_t", normalize: bool = True) -> tuple[dict, np.ndarray]:
        """Train/dev/test libraries on a shared block table, scaled by train-set RMS."""
        diff = self.config.diff_config(self.noise)
        libs = [build_library(s, self.config.polys, self.config.derivs, diff, target=target)
                for s in (self.train, self.dev, self.test)]
        libs = assign_blocks(libs, self.config.quantization)
        if normalize:
            train, scales = normalize_columns(libs[0])
            libs = [train] + [scale_library(lib, scales) for lib in libs[1:]]
        else:
            scales = np.ones(libs[0].n_terms)
        return dict(zip(("train", "dev", "test"), libs)), scales

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for split, s in self.splits.items():
            save_samples(s, directory / f"{split}.csv")
        self.truth.save(directory)
        doc = {
            "name": self.name, "noise": self.noise, "seed": self.seed, "sample_count": self.sample_count,
            "config": self.config.to_dict(), "meta": self.meta,
        }
        (directory / "bundle.json").write_text(json.dumps(doc, indent=2))
        (directory / "config.toml").write_text(_toml_record(doc))
        return directory

    @classmethod
    def load(cls, directory) -> Bundle:
        directory = Path(directory)
        path = directory / "bundle.json"
        if not path.exists():
            raise FileNotFoundError(f"{directory} is not a bundle directory (bundle.json missing)")
        doc = json.loads(path.read_text())
        splits = {s: load_samples(directory / f"{s}.csv") for s in ("train", "dev", "test")}
        return cls(
            name=doc["name"], truth=GroundTruth.load(directory / "truth.json"),
            config=DatasetConfig.from_dict(doc["config"]), noise=doc["noise"], seed=doc["seed"],
            sample_count=doc["sample_count"], meta=doc.get("meta", {}), **splits,
        )


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(type(v))


def _toml_record(doc: dict) -> str:
    """Flat TOML-style record of every bundle parameter (for humans; bundle.json is authoritative)."""
    lines = []
    tables = []
    for k, v in doc.items():
        if v is None:
            continue  # TOML has no null; bundle.json keeps the explicit value
        if isinstance(v, dict):
            tables.append((k, v))
        else:
            lines.append(f"{k} = {_toml_value(v)}")
    while tables:
        name, tab = tables.pop(0)
        lines.append(f"\n[{name}]")
        for k, v in tab.items():
            if v is None:
                continue
            if isinstance(v, dict):
                tables.append((f"{name}.{k}", v))
            else:
                lines.append(f"{json.dumps(k) if not k.isidentifier() else k} = {_toml_value(v)}")
    return "\n".join(lines) + "\n"


def gen_noisy_benchmark(name: str, noise: float | None = None, sample_count: int | None = None, seed: int = 0,
                        generator_overrides: dict | None = None, split: SplitSpec | None = None) -> Bundle:
    """Generate, add noise, differentiate on the grid, trim, subsample and split."""
    cfg = dataset_config(name)
    noise = cfg.noise if noise is None else float(noise)
    sample_count = cfg.sample_count if sample_count is None else int(sample_count)
    raw, truth = generate_raw(name, seed, **(generator_overrides or {}))
    noisy = add_noise(raw, NoiseSpec(noise, substream_seed(seed, "noise")))
    diff = cfg.diff_config(noise)
    derivs = differentiate_all(noisy, _needed_derivatives(cfg), diff, cfg.periodic)
    full = noisy.with_values({**noisy.values, **derivs})
    cropped = crop_grid(full, cfg.trim_time, cfg.trim_space)
    if sample_count > cropped.n:
        raise ConfigError(f"sample_count {sample_count} exceeds the {cropped.n} grid points", key="samples")
    idx = subsample_indices(cropped.n, sample_count, substream_seed(seed, "subsample"))
    sub = cropped.subset(idx)
    if cfg.column_sigma:
        sl = _crop_slices(full.grid, cfg.trim_time, cfg.trim_space)
        cols = smoothed_columns(full, cfg, lambda a: a.reshape(full.grid.shape)[sl].ravel()[idx])
        sub = sub.with_values({**sub.values, **cols})
    train, dev, test = split_temporal(sub, split or SplitSpec())
    meta = {
        "grid": asdict(raw.grid),
        "differentiation": asdict(diff),
        "derivative_columns": sorted(derivs),
        "streams": {s: substream_seed(seed, s) for s in ("generator", "noise", "subsample")},
    }
    return Bundle(name=name, train=train, dev=dev, test=test, truth=truth, config=cfg, noise=noise, seed=seed,
                  sample_count=sample_count, meta=meta)


def library_for(bundle: Bundle, target: str = "u_t") -> tuple[dict[str, TermLibrary], np.ndarray]:
    return bundle.libraries(target)
