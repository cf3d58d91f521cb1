"""Greedy forward search over change points, scored by the segmentation MDL."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .basis import DesignMatrix
from .data_model import CountTable, ExposureCurve
from .mdl import MdlFullScore, mdl_full, segment_bounds
from .segment_fit import FitSettings, SegmentFit, SegmentFitter

log = logging.getLogger(__name__)

MIN_WIDTH = 5


@dataclass(frozen=True)
class ChangePointModel:
    """A segmentation of the time axis with one fitted spectrum per segment.

    ``pi`` holds interior boundaries as time-bin edge indices: boundary ``e``
    separates time bins ``e - 1`` and ``e`` (0-based).  ``trace`` lists the
    segmentation MDL after each accepted step, starting from one segment.
    """

    J: int
    pi: tuple[int, ...]
    fits: tuple[SegmentFit, ...]
    score: MdlFullScore
    trace: tuple[float, ...]
    min_width: int = MIN_WIDTH

    @property
    def B(self) -> int:
        return len(self.pi) + 1

    @property
    def mdl(self) -> float:
        return self.score.value

    @property
    def segments(self) -> list[tuple[int, int]]:
        return segment_bounds(self.J, self.pi)

    @property
    def converged(self) -> bool:
        return all(f.converged for f in self.fits)


@dataclass(frozen=True)
class Candidate:
    edge: int
    delta: float
    score: MdlFullScore
    pi: tuple[int, ...]
    fits: tuple[SegmentFit, ...]


def admissible_edges(J: int, pi, min_width: int = MIN_WIDTH) -> list[int]:
    """Edges not in ``pi`` whose insertion leaves every segment ``min_width`` bins or wider."""
    out = []
    for a, b in segment_bounds(J, list(pi)):
        out.extend(range(a + min_width, b - min_width + 1))
    return out


def _score(fitter: SegmentFitter, pi, fits, min_width) -> MdlFullScore:
    return mdl_full(pi, [f.coef for f in fits], fitter.table, fitter.exposure, fitter.design,
                    min_width=min_width)


def evaluate_candidate(fitter: SegmentFitter, current: ChangePointModel, edge: int) -> Candidate:
    # only the segment containing the edge is refit; the others are reused
    k = next(i for i, (a, b) in enumerate(current.segments) if a < edge < b)
    a, b = current.segments[k]
    fits = current.fits[:k] + (fitter.fit(a, edge), fitter.fit(edge, b)) + current.fits[k + 1:]
    pi = tuple(sorted(current.pi + (edge,)))
    score = _score(fitter, pi, fits, current.min_width)
    return Candidate(edge, score.value - current.mdl, score, pi, fits)


def candidate_scan(current: ChangePointModel, fitter: SegmentFitter,
                   threads: int = 1) -> Candidate | None:
    """Best single boundary to add: largest MDL reduction, earliest edge on ties.

    Returns None when no edge is admissible.  The returned candidate may not
    reduce the MDL; the caller decides.
    """
    edges = admissible_edges(current.J, current.pi, current.min_width)
    if not edges:
        return None
    if threads > 1 and len(edges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cands = list(pool.map(lambda e: evaluate_candidate(fitter, current, e), edges))
    else:
        cands = [evaluate_candidate(fitter, current, e) for e in edges]
    return min(cands, key=lambda c: (c.delta, c.edge))


def single_segment(fitter: SegmentFitter, min_width: int = MIN_WIDTH) -> ChangePointModel:
    J = fitter.table.J
    fits = (fitter.fit(0, J),)
    score = _score(fitter, (), fits, 1)
    return ChangePointModel(J, (), fits, score, (score.value,), min_width)


def detect(table: CountTable, exposure: ExposureCurve, design: DesignMatrix,
           min_width: int = MIN_WIDTH, settings: FitSettings | None = None, threads: int = 1,
           fitter: SegmentFitter | None = None,
           start: ChangePointModel | None = None) -> ChangePointModel:
    """Stepwise minimization of the segmentation MDL, starting from one segment.

    Each step adds the boundary with the largest reduction; the search stops
    at the first step that fails to reduce the score or has no admissible edge.
    ``start`` may supply an already scored single-segment model for this table.
    """
    if min_width < 1:
        raise ValueError("min_width must be >= 1")
    if table.J < min_width:
        raise ValueError(f"J={table.J} is smaller than min_width={min_width}")
    if threads < 1:
        raise ValueError("threads must be >= 1")
    if fitter is None:
        fitter = SegmentFitter(table, exposure, design, settings)
    elif fitter.table is not table:
        raise ValueError("fitter belongs to a different count table")
    if start is not None:
        if start.B != 1 or start.J != table.J:
            raise ValueError("start must be a single-segment model on this table")
        current = ChangePointModel(start.J, (), start.fits, start.score, (start.mdl,), min_width)
    else:
        current = single_segment(fitter, min_width)
    while True:
        best = candidate_scan(current, fitter, threads)
        if best is None or not best.delta < 0:
            return current
        log.debug("boundary %d accepted, delta %.6g", best.edge, best.delta)
        current = ChangePointModel(current.J, best.pi, best.fits, best.score,
                                   current.trace + (best.score.value,), min_width)

