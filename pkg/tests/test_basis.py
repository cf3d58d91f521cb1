import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from specchange.basis import BasisConfig, build_design, evaluate_basis, make_basis
from specchange.data_model import BinGrid


def test_single_knot_at_midpoint():
    assert make_basis(10, 0.0, 1.0, 5).knots == pytest.approx((0.5,))


def test_two_knots_with_wider_end_gaps():
    cfg = make_basis(10, 0.0, 1.0, 6)
    g = 1 / 3.5
    assert cfg.knots == pytest.approx((1.25 * g, 2.25 * g))
    assert cfg.knots == pytest.approx((0.3571428571, 0.6428571429))


def test_application_knot_count():
    cfg = make_basis(142, 1.65, 31.0, 34)
    assert len(cfg.knots) == 30
    assert all(1.65 < k < 31.0 for k in cfg.knots)
    gaps = np.diff((1.65, *cfg.knots, 31.0))
    np.testing.assert_allclose(gaps[1:-1], gaps[1])
    assert gaps[0] == pytest.approx(1.25 * gaps[1])


def test_basis_values():
    cfg = BasisConfig(5, (1.0,), 0.0, 3.0)
    assert evaluate_basis(cfg, 0.0)[:4].tolist() == [1.0, 0.0, 0.0, 0.0]
    assert evaluate_basis(cfg, 1.0)[4] == 0.0
    assert evaluate_basis(cfg, 2.0)[4] == 1.0
    assert evaluate_basis(cfg, [0.0, 2.0]).shape == (2, 5)


def test_design_structure():
    grid = BinGrid(0.0, 1.0, 0.5, 0.0, 1.0, 1.0)
    d = build_design(make_basis(2, 0.0, 1.0, 5), grid)
    assert d.X.shape == (2, 7)
    np.testing.assert_array_equal(d.X[:, 5:], np.eye(2))
    np.testing.assert_array_equal(d.X[:, 0], 1.0)
    assert d.penalty_mask.tolist() == [0, 0, 0, 0, 1, 1, 1]


def test_application_design_shape():
    grid = BinGrid(1.65, 31.0, 0.2, 0.0, 2000.0, 2000.0)
    mask = np.ones(grid.N, bool)
    mask[:5] = False
    d = build_design(make_basis(142, grid.w_lo, grid.w_hi, 34), grid, mask)
    assert d.X.shape == (142, 176)
    assert d.rows[0] == 5


def test_design_full_column_rank():
    grid = BinGrid(1.65, 31.0, 0.2, 0.0, 1.0, 1.0)
    d = build_design(make_basis(grid.N, grid.w_lo, grid.w_hi, 34), grid)
    # rank-revealing QR on the column-scaled basis block
    from scipy.linalg import qr
    b = d.basis / np.abs(d.basis).max(axis=0)
    r = np.abs(np.diag(qr(b, mode="r", pivoting=True)[0]))
    assert r.min() / r.max() > 1e-12


@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.floats(0.0, 5.0))
def test_pure_cubic_reproduced(coefs, w):
    cfg = make_basis(20, 0.0, 5.0, 8)
    beta = np.zeros(8)
    beta[:4] = coefs
    direct = coefs[0] + coefs[1] * w + coefs[2] * w**2 + coefs[3] * w**3
    assert evaluate_basis(cfg, w) @ beta == pytest.approx(direct, abs=1e-12 * max(1, abs(direct)) + 1e-10)


@given(st.floats(-50, 50), st.floats(0.1, 20), st.integers(5, 12))
def test_knots_follow_affine_maps(shift, scale, P):
    base = make_basis(40, 0.0, 1.0, P)
    moved = make_basis(40, shift, shift + scale, P)
    np.testing.assert_allclose(moved.knots, shift + scale * np.asarray(base.knots),
                               rtol=1e-12, atol=1e-12 * (abs(shift) + scale))


def test_rejects_bad_sizes():
    with pytest.raises(ValueError):
        make_basis(10, 0.0, 1.0, 4)
    with pytest.raises(ValueError):
        make_basis(3, 0.0, 1.0, 8)
    with pytest.raises(ValueError):
        BasisConfig(5, (2.0,), 0.0, 1.0)


def test_mismatched_grid_rejected():
    with pytest.raises(ValueError, match="ranges differ"):
        build_design(make_basis(4, 0.0, 2.0, 5), BinGrid(0.0, 1.0, 0.25, 0, 1, 1))


def test_config_roundtrip():
    cfg = make_basis(30, 1.0, 4.0, 9)
    assert BasisConfig.from_dict(cfg.to_dict()) == cfg
