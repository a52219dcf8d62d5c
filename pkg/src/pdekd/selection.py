"""Backward one-out term elimination scored by an information criterion.

Starting from the full library, each iteration refits every candidate set
with one removable term dropped and keeps the set with the lowest score.
Terms listed as priors are never removed.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigError, ValidationError
from .kernel_model import CoefficientField, KernelConfig, KernelGraph, ReconstructionSpec, fit, predict
from .term_library import TermLibrary, canonical_term

log = logging.getLogger(__name__)

AIC_VARIANTS = ("standard", "literal")
LOG_FLOOR = 1e-300

Fitter = Callable[[TermLibrary, tuple], CoefficientField]


def aic_score(active_count: int, residual_sq: float, n_samples: int, variant: str = "standard",
              diagnostics: dict | None = None) -> float:
    """Information criterion of a fit with ``active_count`` terms.

    ``standard`` is ``2k + n ln(RSS / n)``; ``literal`` is
    ``2k - 2 ln(RSS)``. RSS is clamped at 1e-300 before the logarithm and
    each clamp is counted in ``diagnostics["aic_clamps"]``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if variant not in AIC_VARIANTS:
        raise ConfigError(f"unknown aic_variant {variant!r}", key="aic_variant")
    rss = float(residual_sq)
    if not rss > LOG_FLOOR:
        rss = LOG_FLOOR
        if diagnostics is not None:
            diagnostics["aic_clamps"] = diagnostics.get("aic_clamps", 0) + 1
    if variant == "literal":
        return 2.0 * active_count - 2.0 * math.log(rss)
    return 2.0 * active_count + n_samples * math.log(rss / n_samples)


@dataclass(frozen=True)
class SelectionConfig:
    """Stopping rule and protected terms for the elimination loop."""

    L: int = 1
    priors: tuple = ()
    aic_variant: str = "standard"
    auto_stop: bool = False

    def __post_init__(self):
        object.__setattr__(self, "priors", tuple(self.priors))
        if not isinstance(self.L, (int, np.integer)) or self.L < 1:
            raise ConfigError("L must be an integer >= 1", key="L")
        if self.L < len(self.priors):
            raise ConfigError("L must be >= the number of priors", key="L")
        if self.aic_variant not in AIC_VARIANTS:
            raise ConfigError(f"aic_variant must be one of {AIC_VARIANTS}", key="aic_variant")

    def prior_indices(self, lib: TermLibrary) -> tuple:
        out = []
        for name in self.priors:
            try:
                out.append(lib.index(name))
            except KeyError:
                raise ConfigError(f"prior term {name!r} is not in the library", key="priors") from None
        return tuple(sorted(set(out)))


@dataclass(frozen=True, eq=False)
class TraceStep:
    removed: str
    aic: float
    train_error: float
    dev_error: float | None
    active: tuple


@dataclass(frozen=True, eq=False)
class DiscoveredPDE:
    """Result of the elimination loop: surviving terms, their fit and the trace."""

    terms: tuple
    coefficients: CoefficientField
    trace: tuple
    config: dict
    target: str = "u_t"

    @property
    def active(self) -> tuple:
        return self.coefficients.active

    def has_term(self, name: str) -> bool:
        want = canonical_term(name)
        return any(canonical_term(t) == want for t in self.terms)

    def mean_coefficients(self) -> dict:
        return {n: float(np.mean(self.coefficients.xi[:, j])) for j, n in enumerate(self.terms)}

    def equation(self, precision: int = 4) -> str:
        """Rendered right-hand side, e.g. ``u_t = xi1*u_x + xi2*u_y``.

        Coefficients are shown numerically when they are (nearly) constant.
        """
        parts = []
        xi = self.coefficients.xi
        for j, name in enumerate(self.terms):
            col = xi[:, j]
            mean = float(np.mean(col))
            spread = float(np.std(col))
            if spread <= 1e-3 * max(abs(mean), 1e-12):
                parts.append(f"{mean:+.{precision}g}*{name}")
            else:
                parts.append(f"+xi{j + 1}*{name}")
        return f"{self.target} = " + " ".join(parts).lstrip("+")

    def to_json(self, directory, stem: str = "discovered") -> Path:
        """Write ``<stem>.json`` plus the per-block coefficient CSV."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        csv_name = f"{stem}_coefficients.csv"
        coords = self.coefficients.block_coords
        names = ["x", "y"][: coords.shape[1]] + list(self.terms)
        with open(directory / csv_name, "w") as fh:
            fh.write(",".join(names) + "\n")
            np.savetxt(fh, np.column_stack([coords, self.coefficients.xi]), delimiter=",", fmt="%.17g")
        doc = {
            "target": self.target,
            "terms": list(self.terms),
            "equation": self.equation(),
            "mean_coefficients": self.mean_coefficients(),
            "coefficients_csv": csv_name,
            "trace": [asdict(s) | {"active": list(s.active)} for s in self.trace],
            "config": self.config,
            "diagnostics": _jsonable(self.coefficients.diagnostics),
        }
        path = directory / f"{stem}.json"
        path.write_text(json.dumps(doc, indent=2))
        return path


    @classmethod
    def from_json(cls, path) -> DiscoveredPDE:
        """Read a result written by :meth:`to_json` (coefficients as stored, trace included)."""
        path = Path(path)
        doc = json.loads(path.read_text())
        for key in ("target", "terms", "coefficients_csv", "config"):
            if key not in doc:
                raise ValidationError(f"{path} is not a discovery result (missing {key!r})")
        table = np.loadtxt(path.parent / doc["coefficients_csv"], delimiter=",", skiprows=1, ndmin=2)
        terms = tuple(doc["terms"])
        dim = table.shape[1] - len(terms)
        if dim not in (1, 2):
            raise ValidationError(f"coefficient table has {table.shape[1]} columns for {len(terms)} terms")
        library = doc["config"].get("library", list(terms))
        canon = [canonical_term(n) for n in library]
        try:
            active = tuple(canon.index(canonical_term(t)) for t in terms)
        except ValueError:
            raise ValidationError("result terms are not part of its recorded library") from None
        xi = table[:, dim:]
        field_ = CoefficientField(active=active, term_names=terms, block_coords=table[:, :dim], xi=xi,
                                  params=xi.copy(), method=doc["config"].get("method", "kernel"),
                                  diagnostics=doc.get("diagnostics", {}))
        trace = tuple(TraceStep(s["removed"], s["aic"], s["train_error"], s["dev_error"], tuple(s["active"]))
                      for s in doc.get("trace", []))
        return cls(terms=terms, coefficients=field_, trace=trace, config=doc["config"], target=doc["target"])


def _jsonable(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        if isinstance(v, (int, float, str, bool)) or v is None:
            out[k] = v
    return out


def fitting_error(coef: CoefficientField, lib: TermLibrary) -> float:
    """Mean absolute difference between the target and the fitted right-hand side."""
    if lib.n_samples == 0:
        return float("nan")
    return float(np.mean(np.abs(lib.target - predict(coef, lib))))


def kernel_fitter(graph: KernelGraph, kernel_cfg: KernelConfig, recon: ReconstructionSpec | None = None) -> Fitter:
    def _fit(lib: TermLibrary, active: tuple) -> CoefficientField:
        return fit(lib, graph, active, kernel_cfg, recon)

    return _fit


def eliminate_one(lib: TermLibrary, fitter: Fitter, active, priors, variant: str = "standard",
                  diagnostics: dict | None = None):
    """Drop the removable term whose removal gives the lowest score.

    Returns ``(removed index, refit on the reduced set, score)``. Exact score
    ties remove the term that comes later in library order.
    """
    active = tuple(sorted(active))
    priors = set(priors)
    removable = [i for i in active if i not in priors]
    if not removable:
        raise ValidationError("no removable term: every active term is a prior")
    best = None
    for j in removable:
        cand = tuple(i for i in active if i != j)
        coef = fitter(lib, cand)
        score = aic_score(len(cand), coef.diagnostics["residual_sq"], lib.n_samples, variant, diagnostics)
        # '<=' lets a later (higher-index) candidate win an exact tie
        if best is None or score <= best[2]:
            best = (j, coef, score)
    return best


def discover(lib: TermLibrary, graph: KernelGraph | None, cfg: SelectionConfig, kernel_cfg: KernelConfig | None = None,
             dev_lib: TermLibrary | None = None, *, fitter: Fitter | None = None,
             recon: ReconstructionSpec | None = None) -> DiscoveredPDE:
    """Run the elimination loop from the full library down to ``cfg.L`` terms.

    With ``cfg.auto_stop`` the loop continues to ``|priors| + 1`` terms and
    the iterate with the smallest dev-set fitting error is returned.
    ``fitter`` replaces the kernel estimator (used by the baselines).
    """
    p = lib.n_terms
    if cfg.L > p:
        raise ConfigError(f"L={cfg.L} exceeds the library size {p}", key="L")
    if cfg.auto_stop and dev_lib is None:
        raise ConfigError("auto_stop needs a dev library", key="auto_stop")
    if fitter is None:
        if graph is None or kernel_cfg is None:
            raise ValueError("discover needs either a graph and kernel config or a fitter")
        fitter = kernel_fitter(graph, kernel_cfg, recon)
    priors = cfg.prior_indices(lib)
    stop = max(len(priors) + 1, 1) if cfg.auto_stop else cfg.L
    stop = min(stop, p)
    diag: dict = {}

    active = tuple(range(p))
    coef = fitter(lib, active)
    iterates = [(active, coef)]
    trace = []
    while len(active) > stop:
        removed, coef, score = eliminate_one(lib, fitter, active, priors, cfg.aic_variant, diag)
        active = coef.active
        dev_err = fitting_error(coef, dev_lib) if dev_lib is not None else None
        trace.append(TraceStep(lib.terms[removed].name, float(score), fitting_error(coef, lib), dev_err,
                               tuple(lib.terms[i].name for i in active)))
        log.info("removed %s (score %.6g), %d terms left", lib.terms[removed].name, score, len(active))
        iterates.append((active, coef))

    if cfg.auto_stop:
        errs = [fitting_error(c, dev_lib) for _, c in iterates]
        best = int(np.nanargmin(errs))
        active, coef = iterates[best]
        trace = trace[:best]
    coef.diagnostics.update(diag)
    config = {
        "L": cfg.L, "priors": list(cfg.priors), "aic_variant": cfg.aic_variant, "auto_stop": cfg.auto_stop,
        "method": coef.method, "library": lib.names,
    }
    if kernel_cfg is not None:
        config["kernel"] = asdict(kernel_cfg)
    return DiscoveredPDE(terms=tuple(lib.terms[i].name for i in active), coefficients=coef, trace=tuple(trace),
                         config=config, target=lib.target_name)
