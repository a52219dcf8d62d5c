"""Scores for a discovered equation against the ground truth, plus residual maps."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .errors import ModeError
from .generators.truth import GroundTruth
from .kernel_model import CoefficientField, predict
from .term_library import TermLibrary, canonical_term

log = logging.getLogger(__name__)


def _canon(names) -> set:
    return {canonical_term(n) for n in names}


def recall(discovered, truth) -> float:
    """Percentage of true terms present in the discovered set."""
    truth = _canon(truth)
    if not truth:
        raise ValueError("truth term set is empty")
    return 100.0 * len(_canon(discovered) & truth) / len(truth)


def precision(discovered, truth) -> float:
    """Percentage of discovered terms that are true terms (100 for an empty discovery)."""
    found = _canon(discovered)
    if not found:
        return 100.0
    return 100.0 * len(found & _canon(truth)) / len(found)


def _estimate(field: CoefficientField, name: str) -> np.ndarray:
    want = canonical_term(name)
    for j, n in enumerate(field.term_names):
        if canonical_term(n) == want:
            return field.xi[:, j]
    return np.zeros(field.n_blocks)


def coefficient_error(field: CoefficientField, truth: GroundTruth, kind: str = "relative",
                      target: str = "u_t", blocks=None) -> float:
    """Coefficient error over blocks (``field`` must hold unscaled coefficients).

    ``mae``: mean of |Xi - xi| over blocks and over the union of true and
    discovered terms (absent terms count as zero). ``relative``: per true
    term, mean |Xi - xi| / mean |xi|, averaged over true terms; terms whose
    true field is identically zero are skipped with a warning. ``blocks``
    optionally restricts the evaluation to a subset of block rows.
    """
    if kind not in ("mae", "relative"):
        raise ValueError(f"unknown coefficient error kind {kind!r}")
    rows = slice(None) if blocks is None else np.asarray(blocks)
    coords = field.block_coords[rows]
    truth_terms = truth.terms(target)
    if kind == "mae":
        names = list(truth_terms)
        seen = _canon(names)
        names += [n for n in field.term_names if canonical_term(n) not in seen]
        errs = [np.abs(_estimate(field, n)[rows] - truth.coefficient_at(target, n, coords)) for n in names]
        return float(np.mean(np.concatenate(errs)))
    rel = []
    for n in truth_terms:
        true = truth.coefficient_at(target, n, coords)
        scale = np.mean(np.abs(true))
        if scale == 0:
            log.warning("true coefficient of %s is identically zero; excluded from the relative error", n)
            continue
        rel.append(np.mean(np.abs(_estimate(field, n)[rows] - true)) / scale)
    return float(np.mean(rel)) if rel else float("nan")


def fitting_error(field: CoefficientField, lib: TermLibrary) -> float:
    """Mean absolute difference between the target and the fitted right-hand side."""
    if lib.n_samples == 0:
        return float("nan")
    return float(np.mean(np.abs(lib.target - predict(field, lib))))


def metrics_report(terms, field: CoefficientField, truth: GroundTruth, libs: dict, target: str = "u_t",
                   scaled_field: CoefficientField | None = None) -> dict:
    """Metrics dictionary: recall, precision, coefficient errors and per-split fitting errors.

    ``field`` holds unscaled coefficients; ``scaled_field`` (if the
    libraries carry normalised columns) is used for the fitting errors.
    """
    truth_terms = truth.terms(target)
    fit_field = scaled_field if scaled_field is not None else field
    out = {
        "target": target,
        "recall": recall(terms, truth_terms),
        "precision": precision(terms, truth_terms),
        "coef_mae": coefficient_error(field, truth, "mae", target),
        "coef_rel": coefficient_error(field, truth, "relative", target),
    }
    for split in ("train", "dev", "test"):
        lib = libs.get(split)
        out[f"fit_{split}"] = fitting_error(fit_field, lib) if lib is not None else None
    return out


def write_metrics(path, report) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2))
    return path


# -- residual maps -----------------------------------------------------------------


def _lattice(field: CoefficientField, truth: GroundTruth):
    """Grid axes and per-block cell indices for map export."""
    coords = field.block_coords
    dim = coords.shape[1]
    if truth.axes and len(truth.axes) == dim:
        axes = truth.axes
    else:
        axes = tuple(np.unique(coords[:, d]) for d in range(dim))
        for ax in axes:
            if ax.size > 1 and not np.allclose(np.diff(ax), ax[1] - ax[0], rtol=1e-6):
                raise ModeError("residual export needs blocks on a regular grid")
    idx = []
    for d, ax in enumerate(axes):
        h = ax[1] - ax[0] if ax.size > 1 else 1.0
        idx.append(np.clip(np.rint((coords[:, d] - ax[0]) / h).astype(int), 0, ax.size - 1))
    return axes, idx


def _to_grid(values, axes, idx) -> np.ndarray:
    shape = tuple(ax.size for ax in reversed(axes))  # (ny, nx) or (nx,)
    acc = np.zeros(shape)
    cnt = np.zeros(shape)
    key = tuple(reversed(idx))
    np.add.at(acc, key, values)
    np.add.at(cnt, key, 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(cnt > 0, acc / np.maximum(cnt, 1), np.nan)


_PALETTE = np.array([
    [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37],
], dtype=np.float64)


def _color(v: float) -> str:
    pos = np.clip(v, 0.0, 1.0) * (len(_PALETTE) - 1)
    i = min(int(pos), len(_PALETTE) - 2)
    c = _PALETTE[i] + (pos - i) * (_PALETTE[i + 1] - _PALETTE[i])
    return "#%02x%02x%02x" % tuple(int(round(x)) for x in c)


def write_heatmap_svg(grid: np.ndarray, path, cell: int = 8, title: str = "") -> Path:
    """Minimal SVG heatmap; row 0 of ``grid`` is drawn at the bottom. NaN cells stay blank."""
    grid = np.atleast_2d(grid)
    ny, nx = grid.shape
    finite = grid[np.isfinite(grid)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0
    width, height = nx * cell, ny * cell
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<title>{title} (min {lo:.6g}, max {hi:.6g})</title>",
    ]
    for j in range(ny):
        y = (ny - 1 - j) * cell
        for i in range(nx):
            v = grid[j, i]
            if np.isfinite(v):
                parts.append(f'<rect x="{i * cell}" y="{y}" width="{cell}" height="{cell}" '
                             f'fill="{_color((v - lo) / span)}"/>')
    parts.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(parts) + "\n")
    return path


def export_residuals(field: CoefficientField, truth: GroundTruth, path, target: str = "u_t",
                     svg: bool = True) -> list[Path]:
    """Per true term: CSV grids of truth, estimate and |truth - estimate| (plus SVG heatmaps).

    ``field`` must hold unscaled coefficients. Cells without a block are NaN.
    """
    out_dir = Path(path)
    out_dir.mkdir(parents=True, exist_ok=True)
    axes, idx = _lattice(field, truth)
    written = []
    for name in truth.terms(target):
        true = truth.coefficient_at(target, name, field.block_coords)
        est = _estimate(field, name)
        panels = {"truth": true, "estimate": est, "residual": np.abs(true - est)}
        safe = canonical_term(name).replace("*", "").replace("^", "").replace("(", "_").replace(")", "")
        for panel, vals in panels.items():
            grid = _to_grid(vals, axes, idx)
            stem = f"{target}_{safe}_{panel}"
            csv = out_dir / f"{stem}.csv"
            np.savetxt(csv, np.atleast_2d(grid), delimiter=",", fmt="%.17g")
            written.append(csv)
            if svg:
                written.append(write_heatmap_svg(grid, out_dir / f"{stem}.svg", title=f"{name} {panel}"))
    return written
