"""Penalized Poisson regression of collapsed counts on the spectral design.

Maximizes, for fixed ``gamma`` and ``rho``,

    sum_i q(z_i; c s_i exp(x_i beta + eta_i))
        - gamma * (rho * sum_{p>4} sd_p |beta_p| + (1 - rho) * sum_i |eta_i|)

where ``q`` is the Poisson log-pmf and ``sd_p`` the sample standard deviation
of basis column ``p`` over the modeled bins, i.e. the radial coefficients are
penalized on the standardized scale.  The solver is an IRLS outer loop with
cyclic coordinate descent and soft-thresholding on the working least-squares
problem; line coefficients are updated exactly because each one touches a
single bin.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray
from scipy.special import gammaln

from . import _kernels
from .basis import N_POLY, DesignMatrix
from .data_model import CountTable, ExposureCurve

log = logging.getLogger(__name__)

TOL = 1e-8
KKT_TOL = 1e-7
MAX_OUTER = 100
MAX_SWEEPS = 10_000
N_GAMMA = 100
GAMMA_RATIO = 1e-4


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PenaltyConfig:
    gamma: float
    rho: float
    nonneg: bool = False

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError("gamma must be >= 0")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")

    @property
    def lam_beta(self) -> float:
        return self.gamma * self.rho

    @property
    def lam_eta(self) -> float:
        return self.gamma * (1.0 - self.rho)


@dataclass(frozen=True)
class CollapsedData:
    """Counts summed over the ``c`` time bins of a segment, with per-bin exposure ``s``."""

    z: NDArray[np.float64]
    c: int
    s: NDArray[np.float64]

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        s = np.asarray(self.s, dtype=float)
        if z.shape != s.shape or z.ndim != 1:
            raise ValueError("z and s must be 1-d arrays of equal length")
        if np.any(z < 0) or np.any(z != np.round(z)):
            raise ValueError("z must hold nonnegative integers")
        if int(self.c) < 1:
            raise ValueError("c must be >= 1")
        if np.any(s <= 0):
            raise ValueError("exposure must be positive on modeled bins")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "c", int(self.c))

    @property
    def offset(self) -> NDArray[np.float64]:
        return np.log(self.c * self.s)


def collapse(table: CountTable, exposure: ExposureCurve, design: DesignMatrix,
             start: int = 0, stop: int | None = None) -> CollapsedData:
    """Collapse time bins ``[start, stop)`` of the modeled rows."""
    stop = table.J if stop is None else stop
    if not 0 <= start < stop <= table.J:
        raise ValueError(f"empty or invalid segment [{start}, {stop})")
    z = table.counts[design.rows, start:stop].sum(axis=1)
    return CollapsedData(z, stop - start, exposure.s[design.rows])


@dataclass(frozen=True)
class Coefficients:
    beta: NDArray[np.float64]
    eta: NDArray[np.float64]
    converged: bool = True
    degenerate: bool = False
    n_iter: int = 0
    kkt: float = 0.0

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        eta = np.asarray(self.eta, dtype=float)
        if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(eta))):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "eta", eta)

    @property
    def theta(self) -> NDArray[np.float64]:
        return np.concatenate([self.beta, self.eta])

    @property
    def l0_beta(self) -> int:
        return int(np.count_nonzero(self.beta))

    @property
    def l0_eta(self) -> int:
        return int(np.count_nonzero(self.eta))

    @property
    def l0(self) -> int:
        return self.l0_beta + self.l0_eta


def pois_logpmf(x, a):
    """Poisson log-pmf ``-a + x log a - log x!``."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise ValueError("Poisson mean must be positive")
    if np.any(x < 0) or np.any(x != np.round(x)):
        raise ValueError("x must be a nonnegative integer")
    out = -a + x * np.log(a) - gammaln(x + 1.0)
    return out[()] if out.ndim == 0 else out


# ------------------------------------------------------------- working basis

@dataclass(frozen=True, eq=False)
class WorkingBasis:
    """Solver coordinates for a design.

    ``XT`` rows: an orthonormal basis of the cubic-polynomial span, then the
    standardized radial columns with that span projected out.  ``T`` maps
    working coordinates to raw basis coefficients.
    """

    XT: NDArray[np.float64]
    T: NDArray[np.float64]
    n_unpen: int
    Xraw: NDArray[np.float64]
    scales: NDArray[np.float64]


@lru_cache(maxsize=64)
def working_basis(design: DesignMatrix) -> WorkingBasis:
    X = design.basis
    P = design.P
    poly = X[:, :N_POLY]
    norms = np.linalg.norm(poly, axis=0)
    norms[norms == 0] = 1.0
    U, S, Vt = np.linalg.svd(poly / norms, full_matrices=False)
    r = int(np.sum(S > 1e-10 * S[0]))
    Q = U[:, :r]
    M = (Vt[:r].T / S[:r]) / norms[:, None]  # poly @ (M a) == Q a
    sd = design.scales
    mean = X[:, N_POLY:].mean(axis=0)
    Xs = (X[:, N_POLY:] - mean) / sd[N_POLY:]
    proj = Q.T @ Xs
    Xperp = Xs - Q @ proj
    XT = np.ascontiguousarray(np.vstack([Q.T, Xperp.T]))
    n_rad = P - N_POLY
    T = np.zeros((P, r + n_rad))
    T[:N_POLY, :r] = M
    # raw radial beta_p = b_p / sd_p; their centring and projection move into the polynomial
    ones_coef = Q.T @ np.ones(design.N)
    T[:N_POLY, r:] = -M @ (np.outer(ones_coef, mean / sd[N_POLY:]) + proj)
    T[N_POLY:, r:] = np.diag(1.0 / sd[N_POLY:])
    Xraw = np.ascontiguousarray(X)
    return WorkingBasis(XT, T, r, Xraw, sd)


def _to_working(beta: NDArray, wb: WorkingBasis) -> NDArray[np.float64]:
    """Working coordinates reproducing the smooth predictor of raw ``beta``."""
    v = np.zeros(wb.XT.shape[0])
    v[wb.n_unpen:] = beta[N_POLY:] * wb.scales[N_POLY:]
    resid = wb.Xraw @ beta - wb.XT[wb.n_unpen:].T @ v[wb.n_unpen:]
    v[:wb.n_unpen] = wb.XT[:wb.n_unpen] @ resid
    return v


def kkt_tolerance(data: CollapsedData, kkt_tol: float = KKT_TOL) -> float:
    """Absolute KKT tolerance: ``kkt_tol`` per unit of Poisson score noise ``sqrt(sum z)``."""
    return kkt_tol * max(1.0, float(np.sqrt(data.z.sum())))


def _check(data: CollapsedData, design: DesignMatrix):
    if data.z.shape[0] != design.N:
        raise ValueError(f"data has {data.z.shape[0]} bins but design has {design.N} rows")


# ------------------------------------------------------------ objective etc.

def penalty_weights(design: DesignMatrix, rho: float) -> NDArray[np.float64]:
    """Per-coordinate l1 weights on ``theta = (beta, eta)`` (raw scale)."""
    w = np.empty(design.P + design.N)
    w[:N_POLY] = 0.0
    w[N_POLY:design.P] = rho * design.scales[N_POLY:]
    w[design.P:] = 1.0 - rho
    return w


def linear_predictor(theta, design: DesignMatrix) -> NDArray[np.float64]:
    theta = np.asarray(theta, dtype=float)
    return design.basis @ theta[:design.P] + theta[design.P:]


def loglik(theta, data: CollapsedData, design: DesignMatrix) -> float:
    """Collapsed Poisson log-likelihood ``sum_i q(z_i; c s_i exp(x_i theta))``."""
    mean = data.c * data.s * np.exp(linear_predictor(theta, design))
    return float(np.sum(pois_logpmf(data.z, mean)))


def score(theta, data: CollapsedData, design: DesignMatrix) -> NDArray[np.float64]:
    """Gradient of :func:`loglik` with respect to ``theta``."""
    mean = data.c * data.s * np.exp(linear_predictor(theta, design))
    r = data.z - mean
    return np.concatenate([design.basis.T @ r, r])


def penalized_objective(theta, data: CollapsedData, design: DesignMatrix,
                        pen: PenaltyConfig) -> float:
    theta = np.asarray(theta, dtype=float)
    return loglik(theta, data, design) - pen.gamma * float(
        np.sum(penalty_weights(design, pen.rho) * np.abs(theta)))


def kkt_residuals(coef: Coefficients, data: CollapsedData, design: DesignMatrix,
                  pen: PenaltyConfig) -> NDArray[np.float64]:
    """Subgradient-condition residuals per coordinate, on the standardized scale.

    Unpenalized: ``|score|``; nonzero penalized: ``|score - gamma w sign|``;
    zero penalized: ``max(0, |score| - gamma w)``.  Basis scores and weights
    are divided by the column scale so the residual is per standardized unit.
    """
    theta = coef.theta
    sc = score(theta, data, design)
    w = penalty_weights(design, pen.rho) * pen.gamma
    unit = np.ones_like(sc)
    unit[:design.P] = design.scales
    sc, w = sc / unit, w / unit
    res = np.where(theta != 0, np.abs(sc - w * np.sign(theta)), np.maximum(np.abs(sc) - w, 0.0))
    # line coefficients clamped at zero only need the one-sided condition
    if pen.nonneg:
        eta_part = slice(design.P, None)
        zero = theta[eta_part] == 0
        res[eta_part][zero] = np.maximum(sc[eta_part][zero] - w[eta_part][zero], 0.0)
    return res


# ------------------------------------------------------------------ fitting

def _intercept_only(data: CollapsedData, design: DesignMatrix) -> Coefficients:
    # all-zero counts: half-count continuity value for the intercept
    beta = np.zeros(design.P)
    beta[0] = np.log(0.5 / np.sum(data.c * data.s))
    return Coefficients(beta, np.zeros(design.N), converged=True, degenerate=True)


def fit_penalized(data: CollapsedData, design: DesignMatrix, pen: PenaltyConfig,
                  warm_start: Coefficients | None = None, *, tol: float = TOL,
                  kkt_tol: float = KKT_TOL, max_outer: int = MAX_OUTER,
                  max_sweeps: int = MAX_SWEEPS) -> Coefficients:
    """Penalized maximum-likelihood coefficients for one ``(gamma, rho)``.

    Non-convergence is reported with a :class:`ConvergenceWarning`; the last
    iterate is returned with ``converged=False``.
    """
    _check(data, design)
    if not np.any(data.z > 0):
        return _intercept_only(data, design)
    if pen.lam_eta == 0 and not pen.nonneg and np.any(data.z == 0):
        raise ValueError("line coefficients are unbounded below for zero-count bins "
                         "when gamma * (1 - rho) == 0")
    wb = working_basis(design)
    if warm_start is None:
        v = _null_working(data, wb)
    else:
        v = _to_working(warm_start.beta, wb)
    _, n_iter, _, ok, viol = _kernels.solve(wb.XT, data.offset, data.z, wb.n_unpen, pen.lam_beta,
                                            pen.lam_eta, pen.nonneg, v, tol,
                                            kkt_tolerance(data, kkt_tol),
                                            max_outer, max_sweeps)
    u = data.offset + wb.XT.T @ v
    eta = np.empty(design.N)
    _kernels.line_coefficients(data.z, u, pen.lam_eta, pen.nonneg, eta)
    if not ok:
        warnings.warn(f"solver did not converge (gamma={pen.gamma:g}, rho={pen.rho:g}, "
                      f"KKT violation {viol:.3g})", ConvergenceWarning, stacklevel=2)
    return Coefficients(wb.T @ v, eta, converged=bool(ok), n_iter=int(n_iter), kkt=float(viol))


def _null_working(data: CollapsedData, wb: WorkingBasis) -> NDArray[np.float64]:
    """Unpenalized cubic-polynomial fit (radial and line terms held at zero)."""
    v = np.zeros(wb.XT.shape[0])
    # constant-rate start; the constant lies in the span of the polynomial rows
    level = np.log(data.z.sum() / np.sum(data.c * data.s))
    v[:wb.n_unpen] = level * wb.XT[:wb.n_unpen].sum(axis=1)
    _kernels.solve(wb.XT, data.offset, data.z, wb.n_unpen, np.inf, np.inf, False, v,
                   TOL, kkt_tolerance(data), MAX_OUTER, MAX_SWEEPS)
    return v


def null_fit(data: CollapsedData, design: DesignMatrix) -> Coefficients:
    """Fit with every penalized coordinate at zero: the top of the penalty path."""
    _check(data, design)
    if not np.any(data.z > 0):
        return _intercept_only(data, design)
    wb = working_basis(design)
    v = _null_working(data, wb)
    return Coefficients(wb.T @ v, np.zeros(design.N))


def gamma_max(data: CollapsedData, design: DesignMatrix, rho: float, nonneg: bool = False) -> float:
    """Smallest ``gamma`` at which every penalized coordinate is zero."""
    _check(data, design)
    if not np.any(data.z > 0):
        raise ValueError("degenerate data: all counts are zero")
    wb = working_basis(design)
    v = _null_working(data, wb)
    mean = np.exp(data.offset + wb.XT.T @ v)
    r = data.z - mean
    g_beta = np.abs(wb.XT[wb.n_unpen:] @ r)
    g_eta = np.maximum(r, 0.0) if nonneg else np.abs(r)
    cands = [0.0]
    if rho > 0 and g_beta.size:
        cands.append(g_beta.max() / rho)
    if rho < 1:
        cands.append(g_eta.max() / (1.0 - rho))
    return float(max(cands))


def penalty_path(data: CollapsedData, design: DesignMatrix, rho: float, n_gamma: int = N_GAMMA,
                 ratio: float = GAMMA_RATIO, nonneg: bool = False) -> NDArray[np.float64]:
    """Descending log-spaced ``gamma`` values from :func:`gamma_max` down to ``ratio`` times it."""
    if not 0 < rho < 1:
        raise ValueError("rho must lie strictly between 0 and 1 for a penalty path")
    gmax = gamma_max(data, design, rho, nonneg)
    if gmax == 0.0:
        return np.array([0.0])
    return np.geomspace(gmax, gmax * ratio, n_gamma)
