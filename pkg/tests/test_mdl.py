import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from specchange.data_model import CountTable, ExposureCurve
from specchange.mdl import log_binomial, log_binomial_table, mdl_full, mdl_null
from specchange.poisson_lasso import Coefficients
from specchange.segment_fit import fit_segment

from .helpers import small_problem


def coefs(design, n_beta, n_eta, rng):
    beta = np.zeros(design.P)
    beta[:n_beta] = rng.normal(0, 0.1, n_beta)
    beta[0] = 1.0
    eta = np.zeros(design.N)
    eta[rng.choice(design.N, n_eta, replace=False)] = rng.normal(0, 0.5, n_eta)
    return Coefficients(beta, eta)


def test_log_binomial_values():
    assert log_binomial(10, 0) == 0.0
    assert log_binomial(10, 3) == pytest.approx(math.log(120), abs=1e-12)
    exact = math.log(math.comb(142, 5))
    assert log_binomial(142, 5) == pytest.approx(exact, rel=1e-12)
    np.testing.assert_allclose(log_binomial_table(10)[[0, 3, 10]], [0, math.log(120), 0], atol=1e-12)
    with pytest.raises(ValueError):
        log_binomial(3, 4)


def test_null_penalty_without_parameters_is_pure_likelihood():
    table, exposure, design = small_problem(10, 5, J=5)
    zero = Coefficients(np.zeros(design.P), np.zeros(design.N))
    score = mdl_null(zero, table, exposure, design)
    assert score.param_cost == 0.0 and score.line_position_cost == 0.0
    assert score.value == score.neg_loglik


def test_null_penalty_four_betas():
    table, exposure, design = small_problem(10, 5, J=5)
    c = Coefficients(np.array([0.1, 0.2, 0.3, 0.4, 0.0]), np.zeros(10))
    score = mdl_null(c, table, exposure, design)
    assert score.param_cost + score.line_position_cost == pytest.approx(2 * math.log(50), abs=1e-12)
    assert 2 * math.log(50) == pytest.approx(7.8240460109, abs=1e-9)


def test_line_position_cost():
    table, exposure, design = small_problem(10, 5, J=5)
    eta = np.zeros(10)
    eta[[1, 4, 7]] = 0.3
    score = mdl_null(Coefficients(np.zeros(5), eta), table, exposure, design)
    assert score.line_position_cost == pytest.approx(math.log(120), abs=1e-12)
    assert score.value == pytest.approx(score.neg_loglik + score.param_cost + score.line_position_cost,
                                        abs=1e-12)


@given(st.integers(0, 10_000), st.integers(1, 8))
def test_single_segment_identity(seed, J):
    rng = np.random.default_rng(seed)
    table, exposure, design = small_problem(12, 6, J=J, seed=seed)
    c = coefs(design, int(rng.integers(1, 7)), int(rng.integers(0, 6)), rng)
    full = mdl_full([], [c], table, exposure, design)
    null = mdl_null(c, table, exposure, design)
    assert full.value - null.value == pytest.approx(math.log(J), abs=1e-10)
    assert full.log_B == 0.0


def test_two_segment_components():
    rng = np.random.default_rng(2)
    table, exposure, design = small_problem(12, 6, J=9)
    c1, c2 = coefs(design, 5, 2, rng), coefs(design, 6, 0, rng)
    full = mdl_full([4], [c1, c2], table, exposure, design)
    N = design.N
    cost = (0.5 * c1.l0 * math.log(N * 4) + math.log(math.comb(N, 2))
            + 0.5 * c2.l0 * math.log(N * 5))
    assert full.log_B == pytest.approx(math.log(2))
    assert full.log_lengths == pytest.approx(math.log(4) + math.log(5))
    assert full.segment_cost == pytest.approx(cost, abs=1e-12)
    nll = (mdl_null(c1, table, exposure, design, 0, 4).neg_loglik
           + mdl_null(c2, table, exposure, design, 4, 9).neg_loglik)
    assert full.neg_loglik == pytest.approx(nll, abs=1e-12)
    assert full.value == pytest.approx(full.neg_loglik + full.log_B + full.log_lengths
                                       + full.segment_cost, abs=1e-12)


def test_doubling_time_axis():
    rng = np.random.default_rng(4)
    table, exposure, design = small_problem(12, 6, J=4)
    c = coefs(design, 5, 2, rng)
    grid2 = table.grid.with_time_bins(8)
    doubled = CountTable(grid2, np.hstack([table.counts, table.counts]))
    exp2 = ExposureCurve(grid2, exposure.s)
    one = mdl_full([], [c], table, exposure, design)
    two = mdl_full([], [c], doubled, exp2, design)
    expected = 0.5 * c.l0 * math.log(2) + math.log(2) + (two.neg_loglik - one.neg_loglik)
    assert two.value - one.value == pytest.approx(expected, abs=1e-9)
    assert two.neg_loglik == pytest.approx(2 * one.neg_loglik, rel=1e-12)


@given(st.integers(0, 10_000))
def test_time_reversal_symmetry(seed):
    rng = np.random.default_rng(seed)
    J = 10
    table, exposure, design = small_problem(8, 5, J=J, seed=seed)
    pi = sorted(rng.choice(np.arange(1, J), int(rng.integers(0, 3)), replace=False).tolist())
    cs = [coefs(design, 5, int(rng.integers(0, 3)), rng) for _ in range(len(pi) + 1)]
    rev = CountTable(table.grid, table.counts[:, ::-1])
    a = mdl_full(pi, cs, table, exposure, design)
    b = mdl_full([J - p for p in reversed(pi)], cs[::-1], rev, exposure, design)
    assert a.value == pytest.approx(b.value, abs=1e-9)


def test_scores_see_only_summed_counts():
    # detector relabeling changes nothing once counts are summed: exchange-invariant by construction
    rng = np.random.default_rng(1)
    table, exposure, design = small_problem(8, 5, J=3)
    c = coefs(design, 5, 1, rng)
    halves = rng.binomial(table.counts, 0.4)
    summed = CountTable(table.grid, halves + (table.counts - halves))
    assert mdl_null(c, summed, exposure, design).value == mdl_null(c, table, exposure, design).value


def test_components_nonnegative_and_width_check():
    table, exposure, design = small_problem(10, 6, J=10, seed=3)
    fit = fit_segment(table, exposure, design)
    score = mdl_full([], [fit.coef], table, exposure, design)
    assert min(score.log_B, score.log_lengths, score.segment_cost) >= 0
    with pytest.raises(ValueError, match="at least 5"):
        mdl_full([3], [fit.coef, fit.coef], table, exposure, design, min_width=5)
    with pytest.raises(ValueError):
        mdl_full([5], [fit.coef], table, exposure, design)
