"""Ground-truth equations emitted alongside generated data."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..term_library import canonical_term


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """True right-hand sides, one per target (e.g. ``"u_t"``).

    ``equations[target][term]`` is a float (constant coefficient) or an array
    over the spatial grid shaped ``(ny, nx)`` / ``(nx,)``. ``axes`` holds the
    spatial grid axes used to look up field coefficients at block coordinates.
    """

    equations: dict
    axes: tuple = ()
    description: str = ""

    @property
    def targets(self) -> list[str]:
        return list(self.equations)

    def terms(self, target: str = "u_t") -> list[str]:
        return list(self.equations[target])

    def equation(self, target: str = "u_t", precision: int = 4) -> str:
        parts = []
        for name, c in self.equations[target].items():
            if np.ndim(c) == 0:
                parts.append(f"{float(c):+.{precision}g}*{name}")
            else:
                parts.append(f"xi({name})*{name}")
        rhs = " ".join(parts).lstrip("+")
        return f"{target} = {rhs}"

    def is_field(self, target: str = "u_t") -> bool:
        return any(np.ndim(c) > 0 for c in self.equations[target].values())

    def _grid_index(self, coords: np.ndarray):
        idx = []
        for d, ax in enumerate(self.axes):
            h = ax[1] - ax[0]
            i = np.rint((coords[:, d] - ax[0]) / h).astype(int)
            idx.append(np.clip(i, 0, ax.size - 1))
        return idx

    def coefficient_at(self, target: str, term: str, coords: np.ndarray) -> np.ndarray:
        """True coefficient of ``term`` at spatial ``coords`` (B x d); zero for absent terms."""
        coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
        want = canonical_term(term)
        for name, c in self.equations[target].items():
            if canonical_term(name) == want:
                if np.ndim(c) == 0:
                    return np.full(coords.shape[0], float(c))
                idx = self._grid_index(coords)
                arr = np.asarray(c)
                # arrays are stored (ny, nx); coords are (x, y)
                return arr[tuple(reversed(idx))]
        return np.zeros(coords.shape[0])

    # -- serialisation --------------------------------------------------------

    def save(self, directory, stem: str = "truth") -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        doc = {"description": self.description, "axes": [ax.tolist() for ax in self.axes], "equations": {}}
        for target, terms in self.equations.items():
            entry = {"terms": list(terms), "equation": self.equation(target), "constants": {}}
            field_terms = [n for n, c in terms.items() if np.ndim(c) > 0]
            for n, c in terms.items():
                if np.ndim(c) == 0:
                    entry["constants"][n] = float(c)
            if field_terms:
                csv_name = f"{stem}_{target}.csv"
                _write_coefficient_csv(directory / csv_name, self.axes, {n: terms[n] for n in field_terms})
                entry["coefficients_csv"] = csv_name
            doc["equations"][target] = entry
        path = directory / f"{stem}.json"
        path.write_text(json.dumps(doc, indent=2))
        return path

    @classmethod
    def load(cls, path) -> GroundTruth:
        path = Path(path)
        doc = json.loads(path.read_text())
        axes = tuple(np.array(a, dtype=np.float64) for a in doc.get("axes", []))
        equations = {}
        for target, entry in doc["equations"].items():
            terms = {}
            fields = {}
            if "coefficients_csv" in entry:
                fields = _read_coefficient_csv(path.parent / entry["coefficients_csv"], axes)
            for name in entry["terms"]:
                terms[name] = entry["constants"][name] if name in entry["constants"] else fields[name]
            equations[target] = terms
        return cls(equations=equations, axes=axes, description=doc.get("description", ""))


def _spatial_mesh(axes):
    if len(axes) == 2:
        yy, xx = np.meshgrid(axes[1], axes[0], indexing="ij")
        return [xx.ravel(), yy.ravel()], ["x", "y"]
    return [axes[0]], ["x"]


def _write_coefficient_csv(path: Path, axes, fields: dict) -> None:
    cols, names = _spatial_mesh(axes)
    names = names + list(fields)
    cols = cols + [np.asarray(v).ravel() for v in fields.values()]
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        np.savetxt(fh, np.column_stack(cols), delimiter=",", fmt="%.17g")


def _read_coefficient_csv(path: Path, axes) -> dict:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    shape = tuple(ax.size for ax in reversed(axes))
    nsp = len(axes)
    return {name: data[:, nsp + i].reshape(shape) for i, name in enumerate(header[nsp:])}


def _term_parts(name: str) -> tuple[str, str]:
    """Split a product term into its polynomial and derivative factor names."""
    from ..term_library import parse_deriv

    poly, deriv = [], "1"
    for f in name.replace(" ", "").split("*"):
        try:
            is_deriv = f != "1" and parse_deriv(f) is not None
        except ValueError:
            is_deriv = False
        if is_deriv:
            deriv = f
        else:
            poly.append(f)
    return "*".join(poly) or "1", deriv


def equation_residual(samples, truth: GroundTruth, target: str = "u_t", cfg=None, trim_space: int = 2,
                      trim_time: int = 1, time_slices=None) -> float:
    """RMS of ``target - rhs`` over RMS of ``target`` on interior grid points.

    Derivatives come from the gridded ``samples`` under ``cfg``; the
    right-hand side uses the true coefficients. ``time_slices`` (a slice over
    the time index) further restricts the comparison window.
    """
    from ..term_library import build_library

    parts = [_term_parts(n) for n in truth.terms(target)]
    lib = build_library(samples, sorted({p for p, _ in parts}), sorted({d for _, d in parts}), cfg, target=target)
    spatial = lib.coords[:, :-1]
    rhs = np.zeros(lib.n_samples)
    for name in truth.terms(target):
        rhs += truth.coefficient_at(target, name, spatial) * lib.design[:, lib.index(name)]
    g = samples.grid
    shape = g.shape
    mask = np.zeros(shape, dtype=bool)
    inner = [slice(trim_time, shape[0] - trim_time)] + [slice(trim_space, n - trim_space) for n in shape[1:]]
    mask[tuple(inner)] = True
    if time_slices is not None:
        keep = np.zeros(shape[0], dtype=bool)
        keep[time_slices] = True
        mask &= keep.reshape((-1,) + (1,) * (len(shape) - 1))
    m = mask.ravel()
    r = lib.target[m] - rhs[m]
    return float(np.sqrt(np.mean(r**2)) / np.sqrt(np.mean(lib.target[m] ** 2)))
