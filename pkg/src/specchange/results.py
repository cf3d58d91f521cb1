"""Result files: canonical JSON for fitted segmentations, and CSV exports for plotting."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .basis import BasisConfig, DesignMatrix, build_design
from .changepoint import ChangePointModel
from .data_model import BinGrid, CountTable, ExposureCurve
from .mdl import MdlFullScore, mdl_full
from .perm_test import PermTestResult
from .poisson_lasso import Coefficients
from .segment_fit import SegmentFit


def canonical_json(obj) -> str:
    """Sorted keys, fixed indentation, shortest round-trip floats; NaN is rejected."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def segment_to_dict(fit: SegmentFit, design: DesignMatrix) -> dict:
    nz = np.flatnonzero(fit.coef.eta)
    return {
        "start": fit.start,
        "stop": fit.stop,
        "gamma": fit.gamma,
        "rho": fit.rho,
        "beta": fit.coef.beta.tolist(),
        # sparse line coefficients: [grid row, wavelength, eta]
        "lines": [[int(design.rows[i]), float(design.w[i]), float(fit.coef.eta[i])] for i in nz],
        "converged": fit.coef.converged,
        "degenerate": fit.coef.degenerate,
        "mdl_null": fit.score.to_dict(),
        "n_unconverged_grid": 0 if fit.search is None else fit.search.n_unconverged,
    }


@dataclass(frozen=True)
class SegmentRecord:
    start: int
    stop: int
    gamma: float
    rho: float
    beta: tuple[float, ...]
    lines: tuple[tuple[int, float, float], ...]
    converged: bool
    degenerate: bool
    mdl_null: dict
    n_unconverged_grid: int = 0

    def coefficients(self, design: DesignMatrix) -> Coefficients:
        eta = np.zeros(design.N)
        pos = {int(r): k for k, r in enumerate(design.rows)}
        for row, _, value in self.lines:
            if row not in pos:
                raise ValueError(f"line on grid row {row} is outside the modeled bins")
            eta[pos[row]] = value
        return Coefficients(np.array(self.beta), eta, self.converged, self.degenerate)

    def to_dict(self) -> dict:
        return {"start": self.start, "stop": self.stop, "gamma": self.gamma, "rho": self.rho,
                "beta": list(self.beta), "lines": [list(x) for x in self.lines],
                "converged": self.converged, "degenerate": self.degenerate,
                "mdl_null": dict(self.mdl_null), "n_unconverged_grid": self.n_unconverged_grid}

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentRecord":
        return cls(int(d["start"]), int(d["stop"]), float(d["gamma"]), float(d["rho"]),
                   tuple(float(b) for b in d["beta"]),
                   tuple((int(r), float(w), float(e)) for r, w, e in d["lines"]),
                   bool(d["converged"]), bool(d.get("degenerate", False)), dict(d["mdl_null"]),
                   int(d.get("n_unconverged_grid", 0)))


@dataclass(frozen=True)
class FitResultFile:
    """Everything needed to re-score or plot a fitted segmentation.

    Wall-clock timing is kept out of this document so that repeated runs
    serialize to identical bytes; the CLI writes it to a separate file.
    """

    config: dict
    grid: BinGrid
    basis: BasisConfig
    rows: tuple[int, ...]
    J: int
    pi: tuple[int, ...]
    segments: tuple[SegmentRecord, ...]
    mdl_full: dict
    trace: tuple[float, ...]
    min_width: int
    perm_test: PermTestResult | None = None
    version: str = __version__
    kind: str = "detect"
    extra: dict = field(default_factory=dict)

    @property
    def B(self) -> int:
        return len(self.pi) + 1

    @property
    def converged(self) -> bool:
        return all(s.converged for s in self.segments)

    def design(self) -> DesignMatrix:
        mask = np.zeros(self.grid.N, dtype=bool)
        mask[list(self.rows)] = True
        return build_design(self.basis, self.grid, mask)

    def coefficients(self) -> list[Coefficients]:
        design = self.design()
        return [s.coefficients(design) for s in self.segments]

    def rescore(self, table: CountTable, exposure: ExposureCurve) -> MdlFullScore:
        """Recompute the segmentation MDL from the stored coefficients."""
        return mdl_full(self.pi, self.coefficients(), table, exposure, self.design(),
                        min_width=1)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "version": self.version,
            "config": self.config,
            "grid": self.grid.to_dict(),
            "basis": self.basis.to_dict(),
            "rows": list(self.rows),
            "J": self.J,
            "B": self.B,
            "pi": list(self.pi),
            "min_width": self.min_width,
            "segments": [s.to_dict() for s in self.segments],
            "mdl_full": dict(self.mdl_full),
            "trace": list(self.trace),
            "perm_test": None if self.perm_test is None else self.perm_test.to_dict(),
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResultFile":
        for key in ("grid", "basis", "rows", "J", "pi", "segments", "mdl_full"):
            if key not in d:
                raise ValueError(f"result file is missing {key!r}")
        pt = d.get("perm_test")
        return cls(dict(d.get("config", {})), BinGrid.from_dict(d["grid"]),
                   BasisConfig.from_dict(d["basis"]), tuple(int(r) for r in d["rows"]),
                   int(d["J"]), tuple(int(p) for p in d["pi"]),
                   tuple(SegmentRecord.from_dict(s) for s in d["segments"]),
                   dict(d["mdl_full"]), tuple(float(x) for x in d.get("trace", [])),
                   int(d.get("min_width", 1)),
                   None if pt is None else PermTestResult.from_dict(pt),
                   str(d.get("version", __version__)), str(d.get("kind", "detect")),
                   dict(d.get("extra", {})))

    def dumps(self) -> str:
        return canonical_json(self.to_dict())

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def read(cls, path: str | Path) -> "FitResultFile":
        return cls.from_dict(json.loads(Path(path).read_text()))


def result_from_model(model: ChangePointModel, design: DesignMatrix, grid: BinGrid,
                      config: dict, perm: PermTestResult | None = None,
                      kind: str = "detect") -> FitResultFile:
    segs = tuple(SegmentRecord.from_dict(segment_to_dict(f, design)) for f in model.fits)
    return FitResultFile(config, grid, design.config, tuple(int(r) for r in design.rows),
                         model.J, model.pi, segs, model.score.to_dict(), model.trace,
                         model.min_width, perm, kind=kind)


# ------------------------------------------------------------------ exports

def log_rate_matrix(result: FitResultFile) -> np.ndarray:
    """``N_modeled x J`` fitted log rate ``x_i beta_b + eta_bi`` for the segment holding each time bin."""
    design = result.design()
    out = np.empty((design.N, result.J))
    for seg, coef in zip(result.segments, result.coefficients()):
        out[:, seg.start:seg.stop] = (design.basis @ coef.beta + coef.eta)[:, None]
    return out


def export_plot_data(result: FitResultFile, outdir: str | Path) -> list[Path]:
    """Per-segment spectra ``spectrum_<b>.csv`` and the ``heatmap.csv`` rate matrix."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    design = result.design()
    written = []
    for b, (seg, coef) in enumerate(zip(result.segments, result.coefficients())):
        smooth = design.basis @ coef.beta
        path = outdir / f"spectrum_{b}.csv"
        with path.open("w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["wavelength", "rate", "smooth_rate", "eta"])
            for w, s, e in zip(design.w.tolist(), smooth.tolist(), coef.eta.tolist()):
                out.writerow([repr(w), repr(math.exp(s + e)), repr(math.exp(s)), repr(e)])
        written.append(path)
    rates = np.exp(log_rate_matrix(result))
    t = result.grid.t_centers
    path = outdir / "heatmap.csv"
    with path.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["wavelength"] + [repr(float(x)) for x in t])
        for w, row in zip(design.w.tolist(), rates.tolist()):
            out.writerow([repr(w)] + [repr(v) for v in row])
    written.append(path)
    return written
