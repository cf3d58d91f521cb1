"""Two-part MDL code lengths (natural log) for a single segment and for a segmentation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .basis import DesignMatrix
from .data_model import CountTable, ExposureCurve
from .poisson_lasso import Coefficients, pois_logpmf


def log_binomial(n: int, k: int) -> float:
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got n={n}, k={k}")
    return float(gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0))


def log_binomial_table(n: int) -> np.ndarray:
    k = np.arange(n + 1, dtype=float)
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


@dataclass(frozen=True)
class MdlNullScore:
    neg_loglik: float
    param_cost: float
    line_position_cost: float

    @property
    def value(self) -> float:
        return self.neg_loglik + self.param_cost + self.line_position_cost

    def to_dict(self) -> dict:
        return {**asdict(self), "value": self.value}


@dataclass(frozen=True)
class MdlFullScore:
    neg_loglik: float
    log_B: float
    log_lengths: float
    segment_cost: float

    @property
    def value(self) -> float:
        return self.neg_loglik + self.log_B + self.log_lengths + self.segment_cost

    def to_dict(self) -> dict:
        return {**asdict(self), "value": self.value}


def segment_loglik(coef: Coefficients, table: CountTable, exposure: ExposureCurve,
                   design: DesignMatrix, start: int, stop: int) -> float:
    """Full per-bin log-likelihood ``sum_i sum_j q(Y_ij; s_i lambda_i)`` over time bins ``[start, stop)``."""
    if coef.beta.shape[0] != design.P or coef.eta.shape[0] != design.N:
        raise ValueError("coefficients do not match the design")
    if not 0 <= start < stop <= table.J:
        raise ValueError(f"invalid segment [{start}, {stop})")
    log_rate = design.basis @ coef.beta + coef.eta
    mean = exposure.s[design.rows] * np.exp(log_rate)
    y = table.counts[design.rows, start:stop]
    return float(np.sum(pois_logpmf(y, mean[:, None])))


def _segment_cost(coef: Coefficients, n: int, n_time: int) -> tuple[float, float]:
    return 0.5 * coef.l0 * math.log(n * n_time), log_binomial(n, coef.l0_eta)


def mdl_null(coef: Coefficients, table: CountTable, exposure: ExposureCurve,
             design: DesignMatrix, start: int = 0, stop: int | None = None) -> MdlNullScore:
    """Code length of time bins ``[start, stop)`` under one homogeneous fitted spectrum."""
    stop = table.J if stop is None else stop
    ll = segment_loglik(coef, table, exposure, design, start, stop)
    param, lines = _segment_cost(coef, design.N, stop - start)
    return MdlNullScore(-ll, param, lines)


def segment_bounds(J: int, boundaries: Sequence[int]) -> list[tuple[int, int]]:
    edges = [0, *boundaries, J]
    return list(zip(edges[:-1], edges[1:]))


def mdl_full(boundaries: Sequence[int], coefs: Sequence[Coefficients], table: CountTable,
             exposure: ExposureCurve, design: DesignMatrix, min_width: int = 1) -> MdlFullScore:
    """Code length of a segmentation with interior ``boundaries`` (time-bin edge indices)."""
    bounds = segment_bounds(table.J, list(boundaries))
    if any(b <= a for a, b in bounds):
        raise ValueError("boundaries must be strictly increasing interior edges")
    if any(b - a < min_width for a, b in bounds):
        raise ValueError(f"every segment must span at least {min_width} time bins")
    if len(coefs) != len(bounds):
        raise ValueError(f"{len(bounds)} segments but {len(coefs)} fits")
    nll = 0.0
    cost = 0.0
    log_len = 0.0
    for (a, b), coef in zip(bounds, coefs):
        nll -= segment_loglik(coef, table, exposure, design, a, b)
        param, lines = _segment_cost(coef, design.N, b - a)
        cost += param + lines
        log_len += math.log(b - a)
    return MdlFullScore(nll, math.log(len(bounds)), log_len, cost)
