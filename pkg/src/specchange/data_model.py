"""Event lists, wavelength-by-time bin grids, count tables and exposure curves."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

log = logging.getLogger(__name__)

# Subsamples per wavelength bin when averaging an effective-area table.
AREA_SUBSAMPLES = 32


class InputFormatError(ValueError):
    """A data file violates its declared format; ``row`` is 1-based (header = 1)."""

    def __init__(self, message: str, path: str | Path | None = None, row: int | None = None):
        where = ""
        if path is not None:
            where += f"{path}"
        if row is not None:
            where += f" row {row}"
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.row = row


@dataclass(frozen=True)
class EventList:
    """Photon events: arrival time (s), wavelength (Angstrom), detector index."""

    time: NDArray[np.float64]
    wavelength: NDArray[np.float64]
    detector: NDArray[np.int64]
    t_start: float
    t_end: float
    n_detectors: int = 1

    def __post_init__(self):
        t = np.asarray(self.time, dtype=float)
        w = np.asarray(self.wavelength, dtype=float)
        d = np.asarray(self.detector, dtype=np.int64)
        if not (t.shape == w.shape == d.shape) or t.ndim != 1:
            raise ValueError("time, wavelength and detector must be 1-d arrays of equal length")
        if self.n_detectors < 1:
            raise ValueError("n_detectors must be >= 1")
        if not np.all(np.isfinite(t)) or not np.all(np.isfinite(w)):
            raise ValueError("event coordinates must be finite")
        if np.any(w <= 0):
            raise ValueError("wavelengths must be positive")
        if np.any((t < self.t_start) | (t >= self.t_end)):
            raise ValueError("arrival times must lie in [t_start, t_end)")
        if np.any((d < 0) | (d >= self.n_detectors)):
            raise ValueError("detector index outside the declared detector set")
        for name, arr in (("time", t), ("wavelength", w), ("detector", d)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.time.shape[0]


@dataclass(frozen=True)
class BinGrid:
    """Equal-width wavelength-by-time bins.

    Wavelength bin ``i`` covers ``[w_lo + i*delta_w, w_lo + (i+1)*delta_w)``
    (0-based here); time bins likewise.
    """

    w_lo: float
    w_hi: float
    delta_w: float
    t_lo: float
    t_hi: float
    delta_t: float

    def __post_init__(self):
        if not (self.delta_w > 0 and self.delta_t > 0):
            raise ValueError("bin widths must be positive")
        if not (self.w_hi > self.w_lo and self.t_hi > self.t_lo):
            raise ValueError("empty grid: upper bounds must exceed lower bounds")
        if self.N < 1 or self.J < 1:
            raise ValueError("empty grid: need at least one bin on each axis")

    @property
    def N(self) -> int:
        return int(round((self.w_hi - self.w_lo) / self.delta_w))

    @property
    def J(self) -> int:
        return int(round((self.t_hi - self.t_lo) / self.delta_t))

    @property
    def w_centers(self) -> NDArray[np.float64]:
        return self.w_lo + (np.arange(self.N) + 0.5) * self.delta_w

    @property
    def t_centers(self) -> NDArray[np.float64]:
        return self.t_lo + (np.arange(self.J) + 0.5) * self.delta_t

    @property
    def w_edges(self) -> NDArray[np.float64]:
        return self.w_lo + np.arange(self.N + 1) * self.delta_w

    def with_time_bins(self, J: int) -> "BinGrid":
        """Same wavelength axis and time bin width, ``J`` time bins from ``t_lo``."""
        return BinGrid(self.w_lo, self.w_hi, self.delta_w,
                       self.t_lo, self.t_lo + J * self.delta_t, self.delta_t)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BinGrid":
        return cls(**{k: float(d[k]) for k in ("w_lo", "w_hi", "delta_w", "t_lo", "t_hi", "delta_t")})


@dataclass(frozen=True)
class CountTable:
    """N x J photon counts summed over detectors (rows = wavelength bins)."""

    grid: BinGrid
    counts: NDArray[np.int64]
    n_dropped: int = 0

    def __post_init__(self):
        y = np.asarray(self.counts)
        if y.shape != (self.grid.N, self.grid.J):
            raise ValueError(f"counts shape {y.shape} does not match grid ({self.grid.N}, {self.grid.J})")
        if y.dtype.kind == "f":
            if not np.all(y == np.round(y)):
                raise ValueError("counts must be integers")
        y = y.astype(np.int64)
        if np.any(y < 0):
            raise ValueError("counts must be nonnegative")
        y.setflags(write=False)
        object.__setattr__(self, "counts", y)

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def J(self) -> int:
        return self.grid.J

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def permute_columns(self, order: Sequence[int]) -> "CountTable":
        """Reorder time columns: new column ``j`` is old column ``order[j]``."""
        order = np.asarray(order)
        if sorted(order.tolist()) != list(range(self.J)):
            raise ValueError("order must be a permutation of the time bins")
        return CountTable(self.grid, self.counts[:, order])

    def window(self, start: int, stop: int) -> "CountTable":
        """Time bins ``[start, stop)`` as a table of their own."""
        if not 0 <= start < stop <= self.J:
            raise ValueError(f"empty or invalid time window [{start}, {stop})")
        g = self.grid
        grid = BinGrid(g.w_lo, g.w_hi, g.delta_w, g.t_lo + start * g.delta_t,
                       g.t_lo + stop * g.delta_t, g.delta_t)
        return CountTable(grid, self.counts[:, start:stop])

    def rebin(self, w_factor: int = 1, t_factor: int = 1) -> "CountTable":
        """Aggregate adjacent bins by integer factors that divide N and J exactly."""
        N, J = self.N, self.J
        if w_factor < 1 or t_factor < 1:
            raise ValueError("rebin factors must be positive integers")
        if N % w_factor or J % t_factor:
            raise ValueError(
                f"rebin factors ({w_factor}, {t_factor}) must divide the grid ({N}, {J}) exactly")
        y = self.counts.reshape(N // w_factor, w_factor, J // t_factor, t_factor).sum(axis=(1, 3))
        g = self.grid
        grid = BinGrid(g.w_lo, g.w_lo + N * g.delta_w, g.delta_w * w_factor,
                       g.t_lo, g.t_lo + J * g.delta_t, g.delta_t * t_factor)
        return CountTable(grid, y, self.n_dropped)


@dataclass(frozen=True)
class ExposureCurve:
    """Summed exposure ``s_i = delta_t * delta_w * sum_k mean_bin_i(A_k)`` per wavelength bin.

    ``mask`` marks bins with positive exposure; the rest are excluded from fits.
    """

    grid: BinGrid
    s: NDArray[np.float64]
    mask: NDArray[np.bool_] = field(default=None)

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        if s.shape != (self.grid.N,):
            raise ValueError(f"exposure length {s.shape} does not match N={self.grid.N}")
        if not np.all(np.isfinite(s)) or np.any(s < 0):
            raise ValueError("exposure must be finite and nonnegative")
        mask = s > 0
        if self.mask is not None and not np.array_equal(np.asarray(self.mask, bool), mask):
            raise ValueError("mask must flag exactly the positive-exposure bins")
        s.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "mask", mask)

    @property
    def n_modeled(self) -> int:
        return int(self.mask.sum())

    def scaled(self, factor: float) -> "ExposureCurve":
        return ExposureCurve(self.grid, self.s * factor)


@dataclass(frozen=True)
class AreaTable:
    """One detector's tabulated effective area ``A(w)`` (piecewise linear between rows)."""

    wavelength: NDArray[np.float64]
    area: NDArray[np.float64]

    def __post_init__(self):
        w = np.asarray(self.wavelength, dtype=float)
        a = np.asarray(self.area, dtype=float)
        if w.ndim != 1 or w.shape != a.shape or w.size < 2:
            raise ValueError("area table needs >= 2 matching (wavelength, area) rows")
        if np.any(np.diff(w) <= 0):
            raise ValueError("area table wavelengths must be strictly increasing")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ValueError("effective area values must be finite and >= 0")
        object.__setattr__(self, "wavelength", w)
        object.__setattr__(self, "area", a)


def bin_events(events: EventList, grid: BinGrid) -> CountTable:
    """Tabulate events into ``grid``; out-of-range events are dropped and counted."""
    iw = np.floor((events.wavelength - grid.w_lo) / grid.delta_w).astype(np.int64)
    it = np.floor((events.time - grid.t_lo) / grid.delta_t).astype(np.int64)
    keep = (iw >= 0) & (iw < grid.N) & (it >= 0) & (it < grid.J)
    n_dropped = int(len(events) - keep.sum())
    if len(events) and not keep.any():
        log.warning("all %d events fall outside the grid; table is all zero", len(events))
    flat = np.bincount(iw[keep] * grid.J + it[keep], minlength=grid.N * grid.J)
    return CountTable(grid, flat.reshape(grid.N, grid.J), n_dropped)


def bin_mean_area(table: AreaTable, edges: NDArray[np.float64],
                  subsamples: int = AREA_SUBSAMPLES) -> NDArray[np.float64]:
    """Mean of the piecewise-linear interpolant of ``table`` over each bin.

    Trapezoid integration over ``subsamples`` + 1 equispaced nodes per bin, with
    the table's own knots inserted so the rule is exact for the interpolant.
    """
    if edges[0] < table.wavelength[0] - 1e-12 or edges[-1] > table.wavelength[-1] + 1e-12:
        raise ValueError(
            f"area table [{table.wavelength[0]}, {table.wavelength[-1]}] does not cover "
            f"[{edges[0]}, {edges[-1]}]")
    out = np.empty(len(edges) - 1)
    for i, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        knots = table.wavelength[(table.wavelength > lo) & (table.wavelength < hi)]
        x = np.union1d(np.linspace(lo, hi, subsamples + 1), knots)
        out[i] = np.trapezoid(np.interp(x, table.wavelength, table.area), x) / (hi - lo)
    return out


def build_exposure(areas: Sequence[AreaTable], grid: BinGrid) -> ExposureCurve:
    """Combine per-detector effective areas into the exposure curve on ``grid``."""
    if len(areas) < 1:
        raise ValueError("need at least one detector area table")
    total = np.zeros(grid.N)
    for table in areas:
        total += bin_mean_area(table, grid.w_edges)
    exposure = ExposureCurve(grid, grid.delta_t * grid.delta_w * total)
    if exposure.n_modeled < grid.N:
        log.info("%d wavelength bins have zero exposure and are excluded",
                 grid.N - exposure.n_modeled)
    return exposure


# ---------------------------------------------------------------- file formats

def _open_rows(path: str | Path, header: Sequence[str]):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise InputFormatError("empty file", path, 1) from None
        if [h.strip() for h in first] != list(header):
            raise InputFormatError(f"expected header {','.join(header)!r}", path, 1)
        rows = list(reader)
    return path, rows


def read_events_csv(path: str | Path, t_start: float | None = None, t_end: float | None = None,
                    n_detectors: int | None = None) -> EventList:
    """Read ``time,wavelength,detector`` rows.

    Missing window bounds default to the data's own extent (end exclusive,
    nudged past the last event); ``n_detectors`` defaults to max index + 1.
    """
    path, rows = _open_rows(path, ("time", "wavelength", "detector"))
    t = np.empty(len(rows))
    w = np.empty(len(rows))
    d = np.empty(len(rows), dtype=np.int64)
    for k, row in enumerate(rows):
        if len(row) != 3:
            raise InputFormatError(f"expected 3 fields, got {len(row)}", path, k + 2)
        try:
            t[k], w[k], d[k] = float(row[0]), float(row[1]), int(row[2])
        except ValueError as exc:
            raise InputFormatError(str(exc), path, k + 2) from None
        if not (math.isfinite(t[k]) and math.isfinite(w[k])) or w[k] <= 0 or d[k] < 0:
            raise InputFormatError("non-finite time/wavelength, non-positive wavelength "
                                   "or negative detector", path, k + 2)
    if t_start is None:
        t_start = float(t.min()) if len(t) else 0.0
    if t_end is None:
        t_end = float(np.nextafter(t.max(), np.inf)) if len(t) else 1.0
    if n_detectors is None:
        n_detectors = int(d.max()) + 1 if len(d) else 1
    return EventList(t, w, d, t_start, t_end, n_detectors)


def write_events_csv(events: EventList, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["time", "wavelength", "detector"])
        for row in zip(events.time.tolist(), events.wavelength.tolist(), events.detector.tolist()):
            out.writerow([repr(row[0]), repr(row[1]), row[2]])


def read_area_csv(path: str | Path) -> AreaTable:
    path, rows = _open_rows(path, ("wavelength", "area"))
    vals = np.empty((len(rows), 2))
    for k, row in enumerate(rows):
        try:
            if len(row) != 2:
                raise ValueError(f"expected 2 fields, got {len(row)}")
            vals[k] = float(row[0]), float(row[1])
        except ValueError as exc:
            raise InputFormatError(str(exc), path, k + 2) from None
    try:
        return AreaTable(vals[:, 0], vals[:, 1])
    except ValueError as exc:
        raise InputFormatError(str(exc), path) from None


def write_area_csv(table: AreaTable, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["wavelength", "area"])
        for w, a in zip(table.wavelength.tolist(), table.area.tolist()):
            out.writerow([repr(w), repr(a)])


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".grid.json")


def write_count_table(table: CountTable, path: str | Path) -> Path:
    """Write counts as CSV (one row per wavelength bin) plus a ``.grid.json`` sidecar."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["wavelength"] + [f"t{j}" for j in range(table.J)])
        for w, row in zip(table.grid.w_centers.tolist(), table.counts.tolist()):
            out.writerow([repr(w)] + row)
    side = _sidecar(path)
    side.write_text(json.dumps({"grid": table.grid.to_dict(), "n_dropped": table.n_dropped},
                               sort_keys=True, indent=2) + "\n")
    return side


def read_count_table(path: str | Path) -> CountTable:
    path = Path(path)
    meta = json.loads(_sidecar(path).read_text())
    grid = BinGrid.from_dict(meta["grid"])
    header = ["wavelength"] + [f"t{j}" for j in range(grid.J)]
    path, rows = _open_rows(path, header)
    if len(rows) != grid.N:
        raise InputFormatError(f"expected {grid.N} wavelength rows, got {len(rows)}", path)
    y = np.empty((grid.N, grid.J), dtype=np.int64)
    for k, row in enumerate(rows):
        try:
            if len(row) != grid.J + 1:
                raise ValueError(f"expected {grid.J + 1} fields, got {len(row)}")
            y[k] = [int(v) for v in row[1:]]
        except ValueError as exc:
            raise InputFormatError(str(exc), path, k + 2) from None
    return CountTable(grid, y, int(meta.get("n_dropped", 0)))


def write_exposure_csv(exposure: ExposureCurve, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["wavelength", "exposure"])
        for w, s in zip(exposure.grid.w_centers.tolist(), exposure.s.tolist()):
            out.writerow([repr(w), repr(s)])


def read_exposure_csv(path: str | Path, grid: BinGrid) -> ExposureCurve:
    path, rows = _open_rows(path, ("wavelength", "exposure"))
    if len(rows) != grid.N:
        raise InputFormatError(f"expected {grid.N} rows, got {len(rows)}", path)
    s = np.empty(grid.N)
    for k, row in enumerate(rows):
        try:
            s[k] = float(row[1])
        except (ValueError, IndexError) as exc:
            raise InputFormatError(str(exc), path, k + 2) from None
    return ExposureCurve(grid, s)
