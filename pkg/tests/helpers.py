"""Small problem builders shared by the test modules."""

import numpy as np

from specchange.basis import build_design, make_basis
from specchange.data_model import BinGrid, CountTable, ExposureCurve
from specchange.poisson_lasso import CollapsedData


def unit_grid(N, J=1, delta_t=1.0):
    """N wavelength bins on [0, 1) and J time bins of width delta_t."""
    return BinGrid(0.0, 1.0, 1.0 / N, 0.0, J * delta_t, delta_t)


def small_problem(N, P, J=1, exposure=1.0, seed=0, scale=5.0):
    """Random smooth-rate table on the unit wavelength range."""
    rng = np.random.default_rng(seed)
    grid = unit_grid(N, J)
    s = np.full(N, float(exposure))
    exp_curve = ExposureCurve(grid, s)
    design = build_design(make_basis(N, 0.0, 1.0, P), grid)
    w = grid.w_centers
    rate = scale * np.exp(0.8 * np.sin(3 * w + rng.uniform(0, 3)))
    counts = rng.poisson(s[:, None] * rate[:, None] * np.ones((1, J)))
    return CountTable(grid, counts), exp_curve, design


def collapsed(table, exposure, design, start=0, stop=None):
    stop = table.J if stop is None else stop
    z = table.counts[design.rows, start:stop].sum(axis=1)
    return CollapsedData(z, stop - start, exposure.s[design.rows])


def poisson_terms(theta, X, y, mean_scale):
    """Log-likelihood (without log y! terms) and gradient for means ``mean_scale * exp(X theta)``.

    ``y`` may be a matrix whose columns share the same row means.
    """
    y = np.asarray(y, float)
    if y.ndim == 1:
        y = y[:, None]
    lin = X @ theta
    mu = mean_scale * np.exp(lin)
    ll = np.sum(y * (np.log(mean_scale) + lin)[:, None]) - y.shape[1] * mu.sum()
    grad = X.T @ (y.sum(axis=1) - y.shape[1] * mu)
    return ll, grad


def oracle_maximize(X, y, mean_scale, weights, gamma, theta0=None):
    """Maximize ``loglik - gamma * sum(weights * |theta|)`` with split variables and L-BFGS-B.

    Independent of the package solver: raw-scale coordinates, no profiling,
    no active sets.  Returns the maximizer and the value of the objective
    (log-likelihood without the log-factorial constant).
    """
    from scipy.optimize import minimize

    dim = X.shape[1]
    pen = gamma * np.asarray(weights, float)
    theta0 = np.zeros(dim) if theta0 is None else np.asarray(theta0, float)
    x0 = np.concatenate([np.maximum(theta0, 0), np.maximum(-theta0, 0)])

    def f(x):
        a, b = x[:dim], x[dim:]
        ll, g = poisson_terms(a - b, X, y, mean_scale)
        val = -ll + pen @ (a + b)
        return val, np.concatenate([-g + pen, g + pen])

    best = None
    for _ in range(4):
        res = minimize(f, x0, jac=True, method="L-BFGS-B", bounds=[(0, None)] * (2 * dim),
                       options={"maxiter": 100_000, "maxfun": 200_000, "ftol": 1e-16,
                                "gtol": 1e-13, "maxcor": 50})
        if best is None or res.fun < best.fun:
            best = res
        x0 = res.x
    theta = best.x[:dim] - best.x[dim:]
    ll, _ = poisson_terms(theta, X, y, mean_scale)
    return theta, ll - pen @ np.abs(theta)


def small_test_function(J, pi=(), shift=0.6, tilt=0.6, peak_counts=20.0):
    """A 15-bin synthetic test function with a 6-function basis design, cheap enough for
    Monte Carlo loops."""
    from specchange.simulator import SyntheticConfig, synthetic_test_function

    cfg = SyntheticConfig(J=J, pi=tuple(pi), lines=(0,) * (len(pi) + 1), shift=shift, tilt=tilt,
                          peak_counts=peak_counts, w_lo=10.0, w_hi=13.0, dead_bins=0)
    tf = synthetic_test_function(cfg)
    ex = tf.exposure
    design = build_design(make_basis(ex.n_modeled, tf.grid.w_lo, tf.grid.w_hi, 6), tf.grid, ex.mask)
    return tf, design
