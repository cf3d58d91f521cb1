import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from specchange.data_model import (AreaTable, BinGrid, CountTable, EventList, ExposureCurve,
                                   InputFormatError, bin_events, bin_mean_area, build_exposure,
                                   read_area_csv, read_count_table, read_events_csv,
                                   read_exposure_csv, write_count_table, write_events_csv,
                                   write_exposure_csv)


def events(t, w, d=None, t_start=0.0, t_end=None, n_det=1):
    t = np.asarray(t, float)
    d = np.zeros(len(t), int) if d is None else np.asarray(d)
    t_end = (t.max() + 1.0 if len(t) else 1.0) if t_end is None else t_end
    return EventList(t, np.asarray(w, float), d, t_start, t_end, n_det)


def test_single_event_single_bin():
    grid = BinGrid(0.0, 2.0, 2.0, 0.0, 2.0, 2.0)
    table = bin_events(events([0.5], [1.0], t_end=2.0), grid)
    assert table.counts.tolist() == [[1]]


def test_no_events_gives_zero_table():
    grid = BinGrid(0.0, 4.0, 1.0, 0.0, 3.0, 1.0)
    table = bin_events(events([], [], t_end=3.0), grid)
    assert table.counts.shape == (4, 3)
    assert table.total == 0


def test_uniform_events_match_histogram():
    rng = np.random.default_rng(1)
    t = rng.uniform(0, 4, 10_000)
    w = rng.uniform(1, 5, 10_000)
    grid = BinGrid(1.0, 5.0, 1.0, 0.0, 4.0, 1.0)
    table = bin_events(events(t, w, t_end=4.0), grid)
    oracle = np.zeros((4, 4), int)
    for ti, wi in zip(t, w):
        oracle[int(wi - 1.0), int(ti)] += 1
    assert table.total == 10_000
    np.testing.assert_array_equal(table.counts, oracle)


def test_out_of_grid_events_are_dropped_and_counted():
    grid = BinGrid(1.0, 2.0, 0.5, 0.0, 2.0, 1.0)
    table = bin_events(events([0.1, 0.2, 1.5], [1.2, 3.0, 1.9], t_end=2.0), grid)
    assert table.total == 2
    assert table.n_dropped == 1


@given(st.lists(st.tuples(st.floats(0, 9.999), st.floats(0.5, 3.49)), max_size=60),
       st.randoms(use_true_random=False))
def test_binning_conserves_counts_and_ignores_order(pts, rnd):
    grid = BinGrid(0.5, 3.5, 0.25, 0.0, 10.0, 2.5)
    t = [p[0] for p in pts]
    w = [p[1] for p in pts]
    a = bin_events(events(t, w, t_end=10.0), grid)
    order = list(range(len(pts)))
    rnd.shuffle(order)
    b = bin_events(events([t[k] for k in order], [w[k] for k in order], t_end=10.0), grid)
    assert a.total + a.n_dropped == len(pts)
    np.testing.assert_array_equal(a.counts, b.counts)


def test_grid_geometry():
    grid = BinGrid(1.65, 31.0, 0.2, 0.0, 42_000.0, 2000.0)
    assert grid.N == 147
    assert grid.J == 21
    assert grid.w_centers[0] == pytest.approx(1.75)
    assert grid.t_centers[-1] == pytest.approx(41_000.0)


@pytest.mark.parametrize("args", [(0, 1, 0, 0, 1, 1), (0, 1, 1, 0, 1, -1), (1, 0, 1, 0, 1, 1)])
def test_bad_grids_rejected(args):
    with pytest.raises(ValueError):
        BinGrid(*args)


def test_event_list_validation():
    with pytest.raises(ValueError):
        events([0.5], [-1.0], t_end=1.0)
    with pytest.raises(ValueError):
        events([1.5], [1.0], t_end=1.0)
    with pytest.raises(ValueError):
        events([0.5], [1.0], d=[2], t_end=1.0, n_det=2)


# --------------------------------------------------------------- exposure

def test_constant_area_one_detector():
    grid = BinGrid(0.0, 2.0, 0.5, 0.0, 2.0, 2.0)
    exp = build_exposure([AreaTable([0.0, 2.0], [1.0, 1.0])], grid)
    np.testing.assert_allclose(exp.s, 1.0, rtol=0, atol=1e-15)


def test_two_detectors_add():
    grid = BinGrid(0.0, 2.0, 0.5, 0.0, 2.0, 2.0)
    area = AreaTable([0.0, 2.0], [1.0, 1.0])
    np.testing.assert_allclose(build_exposure([area, area], grid).s, 2.0, atol=1e-15)


def test_piecewise_linear_area_matches_quadrature():
    area = AreaTable([0.0, 0.7, 1.3, 3.0], [2.0, 5.0, 1.0, 4.0])
    edges = np.array([0.0, 1.0, 2.0, 3.0])
    got = bin_mean_area(area, edges)
    for k in range(3):
        x = np.linspace(edges[k], edges[k + 1], 200_001)
        y = np.interp(x, area.wavelength, area.area)
        oracle = np.sum((y[1:] + y[:-1]) / 2 * np.diff(x)) / (edges[k + 1] - edges[k])
        assert got[k] == pytest.approx(oracle, abs=1e-10)


def test_exposure_linear_in_bin_widths():
    area = AreaTable([0.0, 4.0], [1.0, 3.0])
    a = build_exposure([area], BinGrid(0.0, 4.0, 1.0, 0.0, 10.0, 5.0))
    b = build_exposure([area], BinGrid(0.0, 4.0, 1.0, 0.0, 20.0, 10.0))
    np.testing.assert_array_equal(b.s, 2 * a.s)


def test_zero_area_bins_are_masked():
    grid = BinGrid(0.0, 4.0, 1.0, 0.0, 1.0, 1.0)
    exp = build_exposure([AreaTable([0.0, 1.0, 1.0 + 1e-9, 4.0], [0.0, 0.0, 2.0, 2.0])], grid)
    assert exp.mask.tolist() == [False, True, True, True]
    assert exp.n_modeled == 3


def test_area_table_must_cover_grid():
    with pytest.raises(ValueError, match="does not cover"):
        build_exposure([AreaTable([1.0, 2.0], [1.0, 1.0])], BinGrid(0, 2, 1, 0, 1, 1))


# ------------------------------------------------------- table operations

def test_rebin_exact_divisor():
    grid = BinGrid(0.0, 4.0, 1.0, 0.0, 6.0, 1.0)
    table = CountTable(grid, np.arange(24).reshape(4, 6))
    coarse = table.rebin(2, 3)
    assert coarse.counts.shape == (2, 2)
    assert coarse.total == table.total
    assert coarse.counts[0, 0] == sum([0, 1, 2, 6, 7, 8])
    assert coarse.grid.delta_t == 3.0


def test_rebin_rejects_non_divisor():
    table = CountTable(BinGrid(0.0, 4.0, 1.0, 0.0, 6.0, 1.0), np.zeros((4, 6), int))
    with pytest.raises(ValueError, match="divide"):
        table.rebin(3, 1)


def test_window_and_permutation():
    grid = BinGrid(0.0, 2.0, 1.0, 10.0, 16.0, 1.0)
    table = CountTable(grid, np.arange(12).reshape(2, 6))
    win = table.window(2, 5)
    assert win.counts.tolist() == [[2, 3, 4], [8, 9, 10]]
    assert win.grid.t_lo == 12.0 and win.grid.J == 3
    perm = table.permute_columns([5, 4, 3, 2, 1, 0])
    np.testing.assert_array_equal(perm.counts, table.counts[:, ::-1])
    with pytest.raises(ValueError):
        table.permute_columns([0, 0, 1, 2, 3, 4])


def test_count_table_validation():
    grid = BinGrid(0.0, 2.0, 1.0, 0.0, 2.0, 1.0)
    with pytest.raises(ValueError):
        CountTable(grid, np.zeros((2, 3)))
    with pytest.raises(ValueError):
        CountTable(grid, [[1, -1], [0, 0]])
    with pytest.raises(ValueError):
        CountTable(grid, [[1.5, 0], [0, 0]])


# ------------------------------------------------------------------ files

def test_events_csv_roundtrip(tmp_path):
    ev = events([0.25, 1.5], [3.0, 4.5], d=[0, 1], t_end=2.0, n_det=2)
    write_events_csv(ev, tmp_path / "ev.csv")
    back = read_events_csv(tmp_path / "ev.csv", 0.0, 2.0, 2)
    np.testing.assert_array_equal(back.time, ev.time)
    np.testing.assert_array_equal(back.detector, ev.detector)


def test_three_events_bin_to_total_three(tmp_path):
    path = tmp_path / "ev.csv"
    path.write_text("time,wavelength,detector\n0.1,1.2,0\n0.5,1.7,0\n0.9,1.1,0\n")
    ev = read_events_csv(path)
    table = bin_events(ev, BinGrid(1.0, 2.0, 0.5, 0.0, 1.0, 0.5))
    assert table.total == 3


def test_malformed_row_is_named(tmp_path):
    path = tmp_path / "ev.csv"
    path.write_text("time,wavelength,detector\n0.1,1.2,0\n0.5,abc,0\n")
    with pytest.raises(InputFormatError, match="row 3") as info:
        read_events_csv(path)
    assert info.value.row == 3


def test_bad_header_and_field_count(tmp_path):
    path = tmp_path / "ev.csv"
    path.write_text("t,w,d\n")
    with pytest.raises(InputFormatError, match="row 1"):
        read_events_csv(path)
    path.write_text("time,wavelength,detector\n0.1,1.2\n")
    with pytest.raises(InputFormatError, match="row 2"):
        read_events_csv(path)


def test_area_csv_errors(tmp_path):
    path = tmp_path / "a.csv"
    path.write_text("wavelength,area\n1.0,2.0\n0.5,1.0\n")
    with pytest.raises(InputFormatError, match="increasing"):
        read_area_csv(path)


def test_count_table_and_exposure_roundtrip(tmp_path):
    grid = BinGrid(1.0, 2.0, 0.25, 0.0, 3.0, 1.0)
    table = CountTable(grid, np.arange(12).reshape(4, 3), n_dropped=7)
    write_count_table(table, tmp_path / "c.csv")
    back = read_count_table(tmp_path / "c.csv")
    assert back.grid == grid and back.n_dropped == 7
    np.testing.assert_array_equal(back.counts, table.counts)
    exp = ExposureCurve(grid, [0.0, 1.5, 2.5, 1e-3])
    write_exposure_csv(exp, tmp_path / "e.csv")
    np.testing.assert_array_equal(read_exposure_csv(tmp_path / "e.csv", grid).s, exp.s)


def test_count_table_bad_cell(tmp_path):
    grid = BinGrid(1.0, 2.0, 0.5, 0.0, 2.0, 1.0)
    write_count_table(CountTable(grid, np.ones((2, 2), int)), tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    lines[2] = lines[2].rsplit(",", 1)[0] + ",x"
    (tmp_path / "c.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(InputFormatError, match="row 3"):
        read_count_table(tmp_path / "c.csv")
