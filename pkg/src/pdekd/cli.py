"""Command-line interface: ``pdekd generate | discover | evaluate | sweep | bench | plot``.

Exit codes are 0 on success, 1 for runtime or numerical failures (I/O,
malformed result files, solver breakdown) and 2 for usage or configuration
errors. Every command writes a ``run.json`` next to its outputs recording
the effective configuration and the package version.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from .baselines import BaselineConfig, fit_coarsened, fit_local_average, fit_pointwise
from .errors import ConfigError, ModeError, PDEKDError, SolverError, ValidationError
from .generators import DATASETS, Bundle, gen_noisy_benchmark
from .generators.truth import GroundTruth
from .kernel_model import KernelConfig, build_kernel_graph, fit
from .metrics import export_residuals, metrics_report, write_metrics
from .selection import AIC_VARIANTS, DiscoveredPDE, SelectionConfig, discover
from .term_library import TermLibrary, canonical_term

log = logging.getLogger("pdekd")

METHODS = ("kernel", "pointwise", "average", "coarsen")
DEFAULT_RADII = (2.0, 5.0, 10.0)
DEFAULT_GAMMAS = (0.03, 0.1, 0.3, 1.0)


class UsageError(ConfigError):
    """Bad command-line input (exit code 2)."""


# -- run configuration --------------------------------------------------------------

_FLOAT_KEYS = {"gamma", "radius", "ridge", "beta", "quantization", "threshold"}
_REQUIRED = ("gamma", "radius", "ridge")
_TOP_KEYS = _FLOAT_KEYS | {"L", "priors", "aic_variant", "method", "auto_stop", "seed", "solver",
                           "coarsen_factor", "targets"}
_TARGET_KEYS = {"L", "priors"}


@dataclass(frozen=True)
class RunConfig:
    """Hyperparameters of one discovery run.

    ``L`` and ``priors`` given at top level apply to every target; a
    ``[targets.<name>]`` table overrides them for one target. Anything left
    unset falls back to the dataset's shipped values.
    """

    gamma: float
    radius: float
    ridge: float
    beta: float = 0.0
    L: int | None = None
    priors: tuple | None = None
    aic_variant: str = "standard"
    method: str = "kernel"
    auto_stop: bool = False
    seed: int = 0
    solver: str = "auto"
    quantization: float | None = None
    threshold: float = 0.0
    coarsen_factor: int | None = None
    targets: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}", key="method")
        if self.aic_variant not in AIC_VARIANTS:
            raise ConfigError(f"aic_variant must be one of {AIC_VARIANTS}", key="aic_variant")
        # constructing the kernel config validates radius, gamma, ridge, beta and solver
        self.kernel_config()

    def kernel_config(self) -> KernelConfig:
        return KernelConfig(radius=self.radius, gamma=self.gamma, ridge=self.ridge, beta=self.beta,
                            solver=self.solver)

    def selection_config(self, target: str, bundle: Bundle) -> SelectionConfig:
        per = self.targets.get(target, {})
        L = per.get("L", self.L)
        if L is None:
            L = bundle.config.L.get(target)
        if L is None:
            raise ConfigError(f"no L given for target {target} and the dataset ships none", key="L")
        priors = per.get("priors", self.priors)
        if priors is None:
            priors = bundle.config.priors.get(target, ())
        return SelectionConfig(L=int(L), priors=tuple(priors), aic_variant=self.aic_variant,
                               auto_stop=self.auto_stop)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["priors"] = None if self.priors is None else list(self.priors)
        return d


def _check_type(key: str, value, where: str = ""):
    label = f"{where}{key}"
    if key in _FLOAT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{label} must be a number", key=key)
        return float(value)
    if key in ("L", "seed", "coarsen_factor"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{label} must be an integer", key=key)
        return value
    if key == "priors":
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ConfigError(f"{label} must be a list of term names", key=key)
        return tuple(value)
    if key == "auto_stop":
        if not isinstance(value, bool):
            raise ConfigError(f"{label} must be true or false", key=key)
        return value
    if key in ("aic_variant", "method", "solver"):
        if not isinstance(value, str):
            raise ConfigError(f"{label} must be a string", key=key)
        return value
    return value


def parse_run_config(doc: dict) -> RunConfig:
    """Validate a parsed config document; unknown or missing keys raise ConfigError naming the key."""
    unknown = sorted(set(doc) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}", key=unknown[0])
    for key in _REQUIRED:
        if key not in doc:
            raise ConfigError(f"missing required config key {key!r}", key=key)
    kw = {k: _check_type(k, v) for k, v in doc.items() if k != "targets"}
    targets = {}
    raw_targets = doc.get("targets", {})
    if not isinstance(raw_targets, dict):
        raise ConfigError("targets must be a table of per-target tables", key="targets")
    for t, table in raw_targets.items():
        if not isinstance(table, dict):
            raise ConfigError(f"targets.{t} must be a table", key=f"targets.{t}")
        bad = sorted(set(table) - _TARGET_KEYS)
        if bad:
            raise ConfigError(f"unknown config key 'targets.{t}.{bad[0]}'", key=bad[0])
        targets[t] = {k: _check_type(k, v, f"targets.{t}.") for k, v in table.items()}
    return RunConfig(targets=targets, **kw)


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}", key="config") from None
    return parse_run_config(doc)


# -- discovery -------------------------------------------------------------------------


def _fitter(rc: RunConfig):
    kc = rc.kernel_config()
    if rc.method == "pointwise":
        bc = BaselineConfig(kind="pointwise-ridge", ridge=rc.ridge, threshold=rc.threshold)
        return lambda lib, act: fit_pointwise(lib, bc, act)
    if rc.method == "coarsen":
        factor = rc.coarsen_factor or max(1, int(round(rc.radius)))
        bc = BaselineConfig(kind="coarsen", ridge=rc.ridge, coarsen_factor=factor)
        return lambda lib, act: fit_coarsened(lib, bc, act)
    if rc.method == "average":
        return lambda lib, act: fit_local_average(lib, rc.radius, kc, act)
    return None


def _bundle_for(bundle: Bundle, quantization: float | None) -> Bundle:
    if quantization is None:
        return bundle
    return replace(bundle, config=replace(bundle.config, quantization=quantization))


def discover_target(bundle: Bundle, rc: RunConfig, target: str, dataset: str | None = None) -> DiscoveredPDE:
    """Run one method on one target of a bundle; the returned coefficients are unscaled."""
    if target not in bundle.config.targets:
        raise ConfigError(f"target {target!r} not in dataset targets {list(bundle.config.targets)}", key="target")
    b = _bundle_for(bundle, rc.quantization)
    libs, scales = b.libraries(target)
    kc = rc.kernel_config()
    sc = rc.selection_config(target, b)
    fitter = _fitter(rc)
    graph = build_kernel_graph(libs["train"], kc) if fitter is None else None
    result = discover(libs["train"], graph, sc, kc, libs["dev"], fitter=fitter)
    config = dict(result.config)
    config.update(method=rc.method, quantization=b.config.quantization, seed=rc.seed, dataset=dataset,
                  coefficients="unscaled")
    return replace(result, coefficients=result.coefficients.unscaled(scales), config=config)


def evaluation_libraries(bundle: Bundle, target: str, quantization: float) -> dict:
    libs, _ = _bundle_for(bundle, quantization).libraries(target, normalize=False)
    return libs


def check_universe(result: DiscoveredPDE, truth: GroundTruth) -> None:
    """Reject a result whose target or candidate library cannot express the ground truth."""
    if result.target not in truth.targets:
        raise ValidationError(f"result target {result.target!r} is not in the truth targets {truth.targets}")
    library = {canonical_term(n) for n in result.config.get("library", result.terms)}
    missing = [t for t in truth.terms(result.target) if canonical_term(t) not in library]
    if missing:
        raise ValidationError(f"truth terms {missing} are outside the result's candidate library")


def evaluate_result(result: DiscoveredPDE, truth: GroundTruth, bundle: Bundle | None = None) -> dict:
    check_universe(result, truth)
    libs = {}
    if bundle is not None:
        q = result.config.get("quantization", bundle.config.quantization)
        libs = evaluation_libraries(bundle, result.target, q)
    report = metrics_report(result.terms, result.coefficients, truth, libs, result.target)
    report["method"] = result.config.get("method", "kernel")
    report["terms"] = list(result.terms)
    report["equation"] = result.equation()
    return report


# -- helpers ---------------------------------------------------------------------------


def write_run_record(directory, command: str, config: dict) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    doc = {"command": command, "version": __version__, "config": config}
    path = directory / "run.json"
    path.write_text(json.dumps(doc, indent=2, default=_json_default))
    return path


def _json_default(o):
    if isinstance(o, (np.integer, np.floating)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _float_list(text: str, what: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{what} must be a comma-separated list of numbers", key=what) from None
    if not vals:
        raise UsageError(f"{what} is empty", key=what)
    return vals


def thread_cap(default: int | None = None) -> int:
    """Worker count: PDEKD_THREADS when set, else the CPU count."""
    env = os.environ.get("PDEKD_THREADS")
    if env is not None:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError("PDEKD_THREADS must be a positive integer", key="PDEKD_THREADS") from None
        if n < 1:
            raise ConfigError("PDEKD_THREADS must be a positive integer", key="PDEKD_THREADS")
        return n
    return default or os.cpu_count() or 1


def _load_bundle(path) -> Bundle:
    return Bundle.load(path)


def _load_result(path) -> DiscoveredPDE:
    path = Path(path)
    if path.is_dir():
        candidates = sorted(p for p in path.glob("*.json") if p.name not in ("run.json", "metrics.json"))
        if len(candidates) != 1:
            raise ConfigError(f"{path} holds {len(candidates)} result files; pass one explicitly", key="result")
        path = candidates[0]
    return DiscoveredPDE.from_json(path)


# -- subcommands --------------------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.name not in DATASETS:
        raise UsageError(f"unknown dataset {args.name!r}; choose from {', '.join(sorted(DATASETS))}", key="name")
    out = Path(args.out or args.name)
    bundle = gen_noisy_benchmark(args.name, noise=args.noise, sample_count=args.samples, seed=args.seed)
    bundle.save(out)
    write_run_record(out, "generate", {"name": args.name, "noise": bundle.noise, "samples": bundle.sample_count,
                                       "seed": args.seed, "dataset": bundle.config.to_dict()})
    sizes = ", ".join(f"{k} {s.n}" for k, s in bundle.splits.items())
    print(f"{args.name}: noise {bundle.noise:g}, seed {args.seed}, samples {bundle.sample_count} ({sizes}) -> {out}")
    for t in bundle.truth.targets:
        print(f"  truth: {bundle.truth.equation(t)}")
    return 0


def _run_config_from_args(args) -> RunConfig:
    rc = load_run_config(args.config)
    if getattr(args, "method", None):
        rc = replace(rc, method=args.method)
    return rc


def cmd_discover(args) -> int:
    rc = _run_config_from_args(args)
    bundle = _load_bundle(args.dataset)
    out = Path(args.out or Path(args.dataset) / f"discovered_{rc.method}")
    targets = [args.target] if args.target else list(bundle.config.targets)
    write_run_record(out, "discover", {"dataset": str(args.dataset), "targets": targets, **rc.to_dict()})
    for target in targets:
        result = discover_target(bundle, rc, target, dataset=str(Path(args.dataset).resolve()))
        result.to_json(out, stem=target)
        _write_trace(result, out / f"{target}_trace.csv")
        print(result.equation())
    return 0


def _write_trace(result: DiscoveredPDE, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write("step,removed,aic,train_error,dev_error,active\n")
        for i, s in enumerate(result.trace, 1):
            dev = "" if s.dev_error is None else repr(s.dev_error)
            fh.write(f"{i},{s.removed},{s.aic!r},{s.train_error!r},{dev},{';'.join(s.active)}\n")


def cmd_evaluate(args) -> int:
    result = _load_result(args.result)
    truth = GroundTruth.load(args.truth)
    dataset = args.dataset or result.config.get("dataset")
    bundle = _load_bundle(dataset) if dataset else None
    report = evaluate_result(result, truth, bundle)
    if args.out:
        out = Path(args.out)
    else:
        # a separate directory keeps the discover run.json intact
        base = Path(args.result) if Path(args.result).is_dir() else Path(args.result).parent
        out = base / "evaluation" / f"{result.target}_metrics.json"
    write_metrics(out, report)
    write_run_record(out.parent, "evaluate", {"result": str(args.result), "truth": str(args.truth),
                                              "dataset": dataset})
    print(json.dumps({k: report[k] for k in ("recall", "precision", "coef_rel", "fit_train", "fit_test")}))
    return 0


SWEEP_COLUMNS = ("cell", "radius", "gamma", "target", "status", "recall", "precision", "coef_rel", "coef_mae",
                 "fit_train", "fit_dev", "fit_test", "terms", "seconds", "error")


def sweep_cells(bundle: Bundle, base: RunConfig, radii, gammas, threads: int = 1, dataset: str | None = None) -> list:
    """One row per (radius, gamma, target), ordered by cell index whatever the thread count."""
    cells = [(i, r, g) for i, (r, g) in enumerate((r, g) for r in radii for g in gammas)]

    def run(cell):
        i, r, g = cell
        rows = []
        for target in bundle.config.targets:
            row = {"cell": i, "radius": r, "gamma": g, "target": target}
            t0 = time.perf_counter()
            try:
                rc = replace(base, radius=float(r), gamma=float(g))
                result = discover_target(bundle, rc, target, dataset)
                rep = evaluate_result(result, bundle.truth, bundle)
                row.update(status="ok", terms=";".join(result.terms),
                           **{k: rep[k] for k in ("recall", "precision", "coef_rel", "coef_mae",
                                                  "fit_train", "fit_dev", "fit_test")})
            except Exception as exc:  # a failed cell is recorded and the sweep goes on
                log.warning("cell %d (r=%g, gamma=%g) failed: %s", i, r, g, exc)
                row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
            row["seconds"] = time.perf_counter() - t0
            rows.append(row)
        return rows

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        chunks = list(pool.map(run, cells))
    return [row for chunk in chunks for row in chunk]


def _csv_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    s = str(v)
    return f'"{s}"' if ("," in s or '"' in s) else s


def write_rows(path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_csv_value(row.get(c)) for c in columns) + "\n")
    return path


def cmd_sweep(args) -> int:
    base = _run_config_from_args(args)
    bundle = _load_bundle(args.dataset)
    radii = _float_list(args.radii, "radii")
    gammas = _float_list(args.gammas, "gammas")
    threads = thread_cap(args.threads)
    out = Path(args.out or Path(args.dataset) / "sweep")
    write_run_record(out, "sweep", {"dataset": str(args.dataset), "radii": radii, "gammas": gammas,
                                    "threads": threads, **base.to_dict()})
    rows = sweep_cells(bundle, base, radii, gammas, threads, dataset=str(Path(args.dataset).resolve()))
    path = write_rows(out / "sweep.csv", SWEEP_COLUMNS, rows)
    for row in rows:
        if row["status"] == "ok":
            print(f"r={row['radius']:g} gamma={row['gamma']:g} {row['target']}: recall {row['recall']:.0f} "
                  f"coef_rel {row['coef_rel']:.4g}")
        else:
            print(f"r={row['radius']:g} gamma={row['gamma']:g} {row['target']}: failed ({row['error']})")
    print(f"wrote {path}")
    return 0


# -- scaling benchmark ----------------------------------------------------------------


def synthetic_library(n_blocks: int, samples_per_block: int = 4, n_terms: int = 3, seed: int = 0,
                      noise: float = 0.01) -> TermLibrary:
    """Blocks on a square lattice of unit spacing with smooth coefficient fields and random columns."""
    from .term_library import TermDescriptor, parse_deriv, parse_poly

    rng = np.random.default_rng(seed)
    side = int(math.ceil(math.sqrt(n_blocks)))
    b = np.arange(n_blocks)
    block_coords = np.column_stack([b % side, b // side]).astype(np.float64)
    block_index = np.repeat(b, samples_per_block)
    n = block_index.size
    X = rng.normal(size=(n, n_terms))
    xc = block_coords / max(side - 1, 1)
    xi = np.column_stack([1.0 + 0.5 * np.sin(np.pi * (j + 1) * xc[:, 0]) * np.cos(np.pi * xc[:, 1])
                          for j in range(n_terms)])
    y = np.einsum("nk,nk->n", X, xi[block_index]) + noise * rng.normal(size=n)
    t = np.tile(np.arange(samples_per_block, dtype=np.float64), n_blocks)
    coords = np.column_stack([block_coords[block_index], t])
    names = ["u_x", "u_y", "u_xx", "u_yy", "u_xxx", "u_yyy"]
    if n_terms > len(names):
        raise ValueError(f"at most {len(names)} synthetic terms")
    terms = [TermDescriptor(parse_poly("1"), parse_deriv(nm)) for nm in names[:n_terms]]
    return TermLibrary(terms=terms, design=X, target=y, coords=coords, block_index=block_index,
                       block_coords=block_coords, target_name="u_t", state=np.zeros(n))


@dataclass
class BenchResult:
    rows: list
    exponent: float | None


def run_bench(sizes, repeats: int = 3, radius: float = 2.0, gamma: float = 1.0, samples_per_block: int = 4,
              timeout: float | None = None, solver: str = "iterative", ridge: float = 1e-2) -> BenchResult:
    """Median wall time of the kernel fit per block count and the log-log slope of time against size."""
    sizes = [int(s) for s in sizes]
    if any(b <= a for a, b in zip(sizes, sizes[1:])) or not sizes or sizes[0] < 1:
        raise UsageError("sizes must be an increasing list of positive block counts", key="sizes")
    cfg = KernelConfig(radius=radius, gamma=gamma, ridge=ridge, solver=solver, solver_tol=1e-8)
    rows = []
    timed_out = False
    for size in sizes:
        if timed_out:
            rows.append({"blocks": size, "seconds": None, "status": "skipped"})
            continue
        lib = synthetic_library(size, samples_per_block)
        graph = build_kernel_graph(lib, cfg)
        active = tuple(range(lib.n_terms))
        times = []
        info = {}
        for _ in range(repeats):
            t0 = time.perf_counter()
            coef = fit(lib, graph, active, cfg)
            times.append(time.perf_counter() - t0)
            info = coef.diagnostics
            if timeout is not None and times[-1] > timeout:
                timed_out = True
                break
        rows.append({"blocks": size, "seconds": statistics.median(times),
                     "status": "timeout" if timed_out else "ok", "iterations": info.get("iterations"),
                     "unknowns": size * lib.n_terms})
    ok = [r for r in rows if r["status"] == "ok"]
    exponent = None
    if len(ok) >= 2:
        exponent = float(np.polyfit(np.log([r["blocks"] for r in ok]), np.log([r["seconds"] for r in ok]), 1)[0])
    return BenchResult(rows=rows, exponent=exponent)


def cmd_bench(args) -> int:
    sizes = [int(v) for v in _float_list(args.sizes, "sizes")]
    out = Path(args.out or "bench")
    write_run_record(out, "bench", {"sizes": sizes, "repeats": args.repeats, "radius": args.radius,
                                    "gamma": args.gamma, "ridge": args.ridge, "solver": "iterative",
                                    "samples_per_block": args.samples_per_block, "timeout": args.timeout})
    res = run_bench(sizes, args.repeats, args.radius, args.gamma, args.samples_per_block, args.timeout,
                    ridge=args.ridge)
    write_rows(out / "bench.csv", ("blocks", "seconds", "status", "iterations", "unknowns"), res.rows)
    exp = "undefined" if res.exponent is None else f"{res.exponent:.4f}"
    (out / "exponent.txt").write_text(exp + "\n")
    for r in res.rows:
        secs = "-" if r["seconds"] is None else f"{r['seconds']:.4f}"
        print(f"{r['blocks']:>8d} blocks  {secs} s  {r['status']}")
    print(f"scaling exponent: {exp}")
    return 0


def cmd_plot(args) -> int:
    result = _load_result(args.result)
    truth = GroundTruth.load(args.truth)
    check_universe(result, truth)
    out = Path(args.out)
    written = export_residuals(result.coefficients, truth, out, result.target)
    write_run_record(out, "plot", {"result": str(args.result), "truth": str(args.truth)})
    print(f"wrote {len(written)} files to {out}")
    return 0


# -- entry point ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message, key="usage")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pdekd", description="Discover PDEs with spatially varying coefficients.")
    p.add_argument("--version", action="version", version=f"pdekd {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a benchmark bundle")
    g.add_argument("name", help=f"one of {', '.join(sorted(DATASETS))}")
    g.add_argument("--out", help="output directory (default: ./<name>)")
    g.add_argument("--noise", type=float, help="relative noise level (default: dataset value)")
    g.add_argument("--samples", type=int, help="number of irregular samples (default: dataset value)")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("discover", help="run term selection and coefficient estimation on a bundle")
    d.add_argument("dataset")
    d.add_argument("--config", required=True)
    d.add_argument("--method", choices=METHODS)
    d.add_argument("--target", help="restrict to one target (default: all dataset targets)")
    d.add_argument("--out")
    d.set_defaults(func=cmd_discover)

    e = sub.add_parser("evaluate", help="score a discovery result against the ground truth")
    e.add_argument("result")
    e.add_argument("truth")
    e.add_argument("--dataset", help="bundle for fitting errors (default: the one recorded in the result)")
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", help="grid over kernel radius and bandwidth")
    s.add_argument("dataset")
    s.add_argument("--config", required=True)
    s.add_argument("--method", choices=METHODS)
    s.add_argument("--radii", default=",".join(f"{v:g}" for v in DEFAULT_RADII))
    s.add_argument("--gammas", default=",".join(f"{v:g}" for v in DEFAULT_GAMMAS))
    s.add_argument("--threads", type=int, help="worker threads (capped by PDEKD_THREADS when set)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bench", help="time the kernel fit against the number of blocks")
    b.add_argument("--sizes", default="2000,4000,8000,16000")
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--radius", type=float, default=2.0)
    b.add_argument("--gamma", type=float, default=1.0)
    b.add_argument("--ridge", type=float, default=1e-2)
    b.add_argument("--samples-per-block", type=int, default=4)
    b.add_argument("--timeout", type=float, help="seconds per fit before remaining sizes are skipped")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)

    pl = sub.add_parser("plot", help="truth, estimate and residual maps per true term")
    pl.add_argument("result")
    pl.add_argument("truth")
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "sweep" and args.threads is not None and "PDEKD_THREADS" in os.environ:
            args.threads = min(args.threads, thread_cap())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return int(args.func(args) or 0)
    except (ConfigError, ModeError) as exc:
        key = getattr(exc, "key", None)
        prefix = f"config error [{key}]" if key and not isinstance(exc, UsageError) else "error"
        print(f"pdekd: {prefix}: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"pdekd: solver failure: {exc}", file=sys.stderr)
        return 1
    except (PDEKDError, OSError, ValueError) as exc:
        print(f"pdekd: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
