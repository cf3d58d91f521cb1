import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from specchange._random import stream
from specchange.changepoint import (admissible_edges, candidate_scan, detect, evaluate_candidate,
                                    single_segment)
from specchange.mdl import mdl_full
from specchange.segment_fit import SegmentFitter
from specchange.simulator import simulate_counts

from .helpers import small_test_function


def full_refit_score(table, exposure, design, pi):
    """Segmentation MDL with every segment fitted from scratch (no memo, no reuse)."""
    fitter = SegmentFitter(table, exposure, design)
    edges = [0, *pi, table.J]
    coefs = [fitter.fit(a, b).coef for a, b in zip(edges[:-1], edges[1:])]
    return mdl_full(pi, coefs, table, exposure, design).value


def test_candidate_counts():
    assert admissible_edges(9, ()) == []
    assert admissible_edges(10, ()) == [5]
    assert admissible_edges(12, ()) == [5, 6, 7]
    assert admissible_edges(20, (10,)) == [5, 15]
    assert admissible_edges(20, (10,), min_width=3) == [3, 4, 5, 6, 7, 13, 14, 15, 16, 17]


@given(st.integers(1, 40), st.integers(1, 6))
def test_admissible_edges_keep_widths(J, w):
    for e in admissible_edges(J, (), w):
        assert e >= w and J - e >= w
    assert (admissible_edges(J, (), w) == []) == (J < 2 * w)


def test_incremental_delta_matches_full_refit():
    tf, design = small_test_function(12, (6,))
    table = simulate_counts(tf, 3)
    fitter = SegmentFitter(table, tf.exposure, design)
    base = single_segment(fitter)
    base_score = full_refit_score(table, tf.exposure, design, ())
    assert base.mdl == pytest.approx(base_score, abs=1e-9)
    for edge in admissible_edges(12, ()):
        cand = evaluate_candidate(fitter, base, edge)
        oracle = full_refit_score(table, tf.exposure, design, (edge,)) - base_score
        assert cand.delta == pytest.approx(oracle, abs=1e-9)


def test_second_step_reuses_untouched_segment():
    tf, design = small_test_function(20, (10,))
    table = simulate_counts(tf, 4)
    fitter = SegmentFitter(table, tf.exposure, design)
    first = detect(table, tf.exposure, design, fitter=fitter)
    assert first.B >= 2
    for edge in admissible_edges(first.J, first.pi):
        cand = evaluate_candidate(fitter, first, edge)
        oracle = full_refit_score(table, tf.exposure, design, cand.pi)
        assert cand.score.value == pytest.approx(oracle, abs=1e-9)


def test_scan_picks_best_and_earliest_on_ties():
    tf, design = small_test_function(12, (6,))
    table = simulate_counts(tf, 3)
    fitter = SegmentFitter(table, tf.exposure, design)
    base = single_segment(fitter)
    deltas = {e: evaluate_candidate(fitter, base, e).delta for e in admissible_edges(12, ())}
    best = candidate_scan(base, fitter)
    assert best.delta == min(deltas.values())
    assert best.edge == min(e for e, d in deltas.items() if d == best.delta)


def test_scan_with_no_candidates():
    tf, design = small_test_function(9)
    table = simulate_counts(tf, 0)
    fitter = SegmentFitter(table, tf.exposure, design)
    assert candidate_scan(single_segment(fitter), fitter) is None


def test_model_invariants_and_trace():
    tf, design = small_test_function(20, (7, 13), shift=0.8)
    table = simulate_counts(tf, 8)
    model = detect(table, tf.exposure, design)
    assert model.B == 3 and model.pi == (7, 13)
    edges = [0, *model.pi, model.J]
    assert all(b - a >= 5 for a, b in zip(edges[:-1], edges[1:]))
    assert model.segments == list(zip(edges[:-1], edges[1:]))
    assert np.all(np.diff(model.trace) < 0)
    assert len(model.trace) == model.B
    rescored = mdl_full(model.pi, [f.coef for f in model.fits], table, tf.exposure, design)
    assert model.mdl == pytest.approx(rescored.value, abs=1e-9)


def test_short_series_has_one_segment():
    tf, design = small_test_function(9, shift=2.0)
    model = detect(simulate_counts(tf, 1), tf.exposure, design)
    assert model.B == 1 and model.pi == ()


def test_too_short_series_rejected():
    tf, design = small_test_function(4)
    with pytest.raises(ValueError, match="min_width"):
        detect(simulate_counts(tf, 1), tf.exposure, design)


def test_deterministic_and_thread_independent():
    tf, design = small_test_function(16, (8,))
    table = simulate_counts(tf, 2)
    a = detect(table, tf.exposure, design)
    b = detect(table, tf.exposure, design, threads=3)
    assert a.pi == b.pi and a.trace == b.trace
    for fa, fb in zip(a.fits, b.fits):
        np.testing.assert_array_equal(fa.coef.theta, fb.coef.theta)


def test_homogeneous_data_gives_one_segment():
    tf, design = small_test_function(12)
    ones = sum(detect(simulate_counts(tf, stream(21, k)), tf.exposure, design).B == 1
               for k in range(50))
    assert ones >= 48


def test_planted_midpoint_change_is_recovered():
    tf, design = small_test_function(12, (6,))
    hits = 0
    for k in range(50):
        model = detect(simulate_counts(tf, stream(22, k)), tf.exposure, design)
        hits += model.B == 2 and abs(model.pi[0] - 6) <= 1
    assert hits >= 45
