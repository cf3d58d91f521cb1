"""Fit one homogeneous time segment, choosing (gamma, rho) by the null-model MDL."""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.special import gammaln

from . import _kernels
from . import poisson_lasso as pl
from .basis import DesignMatrix
from .data_model import CountTable, ExposureCurve
from .mdl import MdlNullScore, log_binomial_table, mdl_null
from .poisson_lasso import Coefficients, CollapsedData

log = logging.getLogger(__name__)

RHO_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))


@dataclass(frozen=True)
class FitSettings:
    """Tuning grid and solver controls shared by every segment fit."""

    rho_grid: tuple[float, ...] = RHO_GRID
    n_gamma: int = pl.N_GAMMA
    gamma_ratio: float = pl.GAMMA_RATIO
    nonneg: bool = False
    tol: float = pl.TOL
    kkt_tol: float = pl.KKT_TOL
    max_outer: int = pl.MAX_OUTER
    max_sweeps: int = pl.MAX_SWEEPS
    # stop a path after this many points whose parameter cost alone rules them
    # out; 0 keeps the search exhaustive
    patience: int = 0

    def __post_init__(self):
        rho = tuple(float(r) for r in self.rho_grid)
        object.__setattr__(self, "rho_grid", rho)
        if not rho or any(not 0 < r < 1 for r in rho):
            raise ValueError("rho grid values must lie strictly between 0 and 1")
        if self.n_gamma < 1 or not 0 < self.gamma_ratio <= 1:
            raise ValueError("need n_gamma >= 1 and 0 < gamma_ratio <= 1")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")

    def to_dict(self) -> dict:
        return {"rho_grid": list(self.rho_grid), "n_gamma": self.n_gamma,
                "gamma_ratio": self.gamma_ratio, "nonneg": self.nonneg, "tol": self.tol,
                "kkt_tol": self.kkt_tol, "max_outer": self.max_outer,
                "max_sweeps": self.max_sweeps, "patience": self.patience}

    @classmethod
    def from_dict(cls, d: dict) -> "FitSettings":
        d = dict(d)
        if "rho_grid" in d:
            d["rho_grid"] = tuple(d["rho_grid"])
        return cls(**d)


@dataclass(frozen=True)
class GridSearch:
    """Outcome of the (gamma, rho) search on one collapsed segment."""

    gamma: float
    rho: float
    coef: Coefficients
    gammas: NDArray[np.float64]      # (n_rho, n_gamma)
    mdl: NDArray[np.float64]         # NaN where the path stopped early
    n_unconverged: int


@dataclass(frozen=True)
class SegmentFit:
    start: int
    stop: int
    gamma: float
    rho: float
    coef: Coefficients
    score: MdlNullScore
    line_wavelengths: tuple[float, ...]
    search: GridSearch | None = field(default=None, repr=False, compare=False)

    @property
    def c(self) -> int:
        return self.stop - self.start

    @property
    def n_lines(self) -> int:
        return self.coef.l0_eta

    @property
    def lines(self) -> list[tuple[float, float]]:
        """``(wavelength, eta)`` for each nonzero line coefficient."""
        nz = np.flatnonzero(self.coef.eta)
        return list(zip(self.line_wavelengths, self.coef.eta[nz].tolist()))

    @property
    def converged(self) -> bool:
        return self.coef.converged


def predict_spectrum(coef: Coefficients, design: DesignMatrix) -> NDArray[np.float64]:
    """Fitted rate ``exp(x_i beta + eta_i)`` on the modeled bins."""
    return np.exp(design.basis @ coef.beta + coef.eta)


def spectrum_on_grid(coef: Coefficients, design: DesignMatrix, n_bins: int) -> NDArray[np.float64]:
    """Fitted rate on every grid wavelength bin, NaN where the bin is not modeled."""
    out = np.full(n_bins, np.nan)
    out[design.rows] = predict_spectrum(coef, design)
    return out


def _log_factorial_sum(y: NDArray) -> float:
    return float(np.sum(gammaln(y + 1.0)))


def search_grid(data: CollapsedData, lfact: float, design: DesignMatrix,
                settings: FitSettings) -> GridSearch:
    """Warm-started path per rho; keep the (gamma, rho) with the smallest MDL.

    Ties go to the larger gamma, then the larger rho.
    """
    n_rho = len(settings.rho_grid)
    if not np.any(data.z > 0):
        coef = pl._intercept_only(data, design)
        return GridSearch(0.0, settings.rho_grid[-1], coef, np.zeros((n_rho, 1)),
                          np.full((n_rho, 1), np.nan), 0)
    wb = pl.working_basis(design)
    v_null = pl._null_working(data, wb)
    resid = data.z - np.exp(data.offset + wb.XT.T @ v_null)
    g_beta = np.abs(wb.XT[wb.n_unpen:] @ resid).max(initial=0.0)
    g_eta = (np.maximum(resid, 0.0) if settings.nonneg else np.abs(resid)).max()
    N, c = design.N, data.c
    log_s = np.log(data.s)
    with np.errstate(divide="ignore", invalid="ignore"):
        lsat = float(np.sum(np.where(data.z > 0, data.z * np.log(data.z / c), 0.0) - data.z)) - lfact
    logC = log_binomial_table(N)
    all_gammas = np.full((n_rho, settings.n_gamma), np.nan)
    all_mdl = np.full((n_rho, settings.n_gamma), np.nan)
    n_bad = 0
    best = None
    for r_i, rho in enumerate(settings.rho_grid):
        gmax = max(g_beta / rho, g_eta / (1.0 - rho))
        if gmax == 0.0:
            gammas = np.zeros(1)
        else:
            gammas = np.geomspace(gmax, gmax * settings.gamma_ratio, settings.n_gamma)
        all_gammas[r_i, :gammas.size] = gammas
        mdl, l0b, l0e, conv, _, k, v, eta, beta = _kernels.fit_path(
            wb.XT, data.offset, data.z, wb.n_unpen, rho, gammas, settings.nonneg, v_null,
            settings.tol, pl.kkt_tolerance(data, settings.kkt_tol), settings.max_outer, settings.max_sweeps,
            wb.T, wb.Xraw, log_s, float(c), lfact, math.log(N * c), logC, lsat,
            settings.patience)
        all_mdl[r_i, :gammas.size] = mdl
        evaluated = ~np.isnan(mdl)
        n_bad += int(np.sum(~conv[evaluated]))
        cand = (mdl[k], -gammas[k], -rho)
        if best is None or cand < best[0]:
            best = (cand, gammas[k], rho, beta.copy(), eta.copy(), bool(conv[k]))
    _, gamma, rho, beta, eta, ok = best
    coef = Coefficients(beta, eta, converged=ok)
    return GridSearch(float(gamma), float(rho), coef, all_gammas, all_mdl, n_bad)


class SegmentFitter:
    """Fits segments of one count table, memoizing by collapsed content.

    Fits depend only on the collapsed counts and the segment length, so the
    memo may be shared across tables on the same design (e.g. permutations).
    """

    def __init__(self, table: CountTable, exposure: ExposureCurve, design: DesignMatrix,
                 settings: FitSettings | None = None, memo: dict | None = None):
        if exposure.grid.N != table.N:
            raise ValueError("exposure and count table have different wavelength grids")
        if np.any(exposure.s[design.rows] <= 0):
            raise ValueError("design includes bins with zero exposure")
        self.table = table
        self.exposure = exposure
        self.design = design
        self.settings = settings or FitSettings()
        self.memo = {} if memo is None else memo
        self._lock = threading.Lock()
        self._y = table.counts[design.rows]
        self._s = exposure.s[design.rows]

    def fit(self, start: int, stop: int) -> SegmentFit:
        if not 0 <= start < stop <= self.table.J:
            raise ValueError(f"empty or invalid segment [{start}, {stop})")
        y = self._y[:, start:stop]
        z = y.sum(axis=1)
        key = (z.tobytes(), stop - start)
        with self._lock:
            search = self.memo.get(key)
        if search is None:
            data = CollapsedData(z, stop - start, self._s)
            try:
                search = search_grid(data, _log_factorial_sum(y), self.design, self.settings)
            except Exception as exc:
                raise RuntimeError(f"segment [{start}, {stop}) fit failed: {exc}") from exc
            with self._lock:
                self.memo[key] = search
        coef = search.coef
        score = mdl_null(coef, self.table, self.exposure, self.design, start, stop)
        w_lines = tuple(self.design.w[np.flatnonzero(coef.eta)].tolist())
        return SegmentFit(start, stop, search.gamma, search.rho, coef, score, w_lines, search)


def fit_segment(table: CountTable, exposure: ExposureCurve, design: DesignMatrix,
                start: int = 0, stop: int | None = None,
                settings: FitSettings | None = None) -> SegmentFit:
    """Select (gamma, rho) on time bins ``[start, stop)`` and return the fitted segment."""
    stop = table.J if stop is None else stop
    return SegmentFitter(table, exposure, design, settings).fit(start, stop)
