"""Cubic radial basis for the smooth log-spectrum plus one indicator per wavelength bin."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

from .data_model import BinGrid

DEFAULT_P = 34
END_MARGIN = 1.25
N_POLY = 4  # 1, w, w^2, w^3 are never penalized


@dataclass(frozen=True)
class BasisConfig:
    """``P`` basis functions: cubic polynomial plus ``P - 4`` terms ``|w - knot|^3``."""

    P: int
    knots: tuple[float, ...]
    w_lo: float
    w_hi: float

    def __post_init__(self):
        knots = tuple(float(k) for k in self.knots)
        object.__setattr__(self, "knots", knots)
        if self.P < N_POLY + 1 or len(knots) != self.P - N_POLY:
            raise ValueError("need P >= 5 and exactly P - 4 knots")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise ValueError("knots must be strictly increasing")
        if not all(self.w_lo < k < self.w_hi for k in knots):
            raise ValueError("knots must lie strictly inside (w_lo, w_hi)")

    def to_dict(self) -> dict:
        return {"P": self.P, "knots": list(self.knots), "w_lo": self.w_lo, "w_hi": self.w_hi}

    @classmethod
    def from_dict(cls, d: dict) -> "BasisConfig":
        return cls(int(d["P"]), tuple(d["knots"]), float(d["w_lo"]), float(d["w_hi"]))


def make_basis(N: int, w_lo: float, w_hi: float, P: int = DEFAULT_P,
               end_margin: float = END_MARGIN) -> BasisConfig:
    """Equally spaced knots whose two end gaps are ``end_margin`` times the inner gap.

    With gap ``g`` and margin ``m = end_margin * g`` the knots fill the range
    exactly: ``2 m + (P - 5) g = w_hi - w_lo``.
    """
    if P < N_POLY + 1:
        raise ValueError(f"P={P} too small: need at least 5 basis functions")
    if P - N_POLY > N:
        raise ValueError(f"P={P} too large for N={N} wavelength bins (need P - 4 <= N)")
    if not end_margin > 0:
        raise ValueError("end_margin must be positive")
    g = (w_hi - w_lo) / (2 * end_margin + (P - 5))
    knots = w_lo + end_margin * g + g * np.arange(P - N_POLY)
    return BasisConfig(P, tuple(knots.tolist()), w_lo, w_hi)


def evaluate_basis(config: BasisConfig, w) -> NDArray[np.float64]:
    """Basis values at ``w``; shape ``(P,)`` for scalar ``w`` or ``(len(w), P)``."""
    w_arr = np.asarray(w, dtype=float)
    x = np.atleast_1d(w_arr)[:, None]
    out = np.hstack([x**0, x, x**2, x**3, np.abs(x - np.asarray(config.knots)[None, :]) ** 3])
    return out[0] if w_arr.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Rows are modeled wavelength bins: ``(xi_1(w_i), ..., xi_P(w_i), e_i)``.

    ``rows`` gives the grid index of each row; bins with zero exposure are left out.
    """

    config: BasisConfig
    w: NDArray[np.float64]
    rows: NDArray[np.int64]

    @property
    def N(self) -> int:
        return self.w.shape[0]

    @property
    def P(self) -> int:
        return self.config.P

    @cached_property
    def basis(self) -> NDArray[np.float64]:
        b = evaluate_basis(self.config, self.w)
        b.setflags(write=False)
        return b

    @property
    def X(self) -> NDArray[np.float64]:
        """Full ``N x (P + N)`` matrix; the indicator block is the identity."""
        return np.hstack([self.basis, np.eye(self.N)])

    @property
    def penalty_mask(self) -> NDArray[np.float64]:
        m = np.ones(self.P + self.N)
        m[:N_POLY] = 0.0
        return m

    @cached_property
    def scales(self) -> NDArray[np.float64]:
        """Sample standard deviation of each basis column over the modeled bins (1 for the intercept)."""
        sd = self.basis.std(axis=0, ddof=1) if self.N > 1 else np.ones(self.P)
        sd[0] = 1.0
        sd[sd == 0] = 1.0
        return sd

    def to_dict(self) -> dict:
        return {"basis": self.config.to_dict(), "rows": self.rows.tolist()}


def build_design(config: BasisConfig, grid: BinGrid, mask=None) -> DesignMatrix:
    """Design on the bin centres of ``grid``, restricted to ``mask`` when given."""
    if abs(config.w_lo - grid.w_lo) > 1e-9 * max(1.0, abs(grid.w_lo)) or \
            abs(config.w_hi - grid.w_hi) > 1e-9 * max(1.0, abs(grid.w_hi)):
        raise ValueError("basis and grid wavelength ranges differ")
    rows = np.arange(grid.N) if mask is None else np.flatnonzero(np.asarray(mask, bool))
    if mask is not None and len(mask) != grid.N:
        raise ValueError("mask length does not match the grid")
    if rows.size < 1:
        raise ValueError("no modeled wavelength bins")
    return DesignMatrix(config, grid.w_centers[rows], rows)
