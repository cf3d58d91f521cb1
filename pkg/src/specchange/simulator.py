"""Synthetic count tables from a piecewise-constant spectrum, and recovery experiments.

Counts are drawn with numpy's ``Generator.poisson`` on a Philox stream.  For
means below 10 numpy multiplies uniforms (Knuth's method); at 10 and above
it uses Hormann's PTRS transformed rejection.  Both are exact Poisson samplers
and bit-reproducible for a fixed seed and numpy version.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from ._random import check_seed, stream
from .basis import DEFAULT_P, build_design, make_basis
from .changepoint import MIN_WIDTH, detect
from .data_model import BinGrid, CountTable, ExposureCurve
from .segment_fit import FitSettings

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Expected counts ``s_i * rates[b, i]`` for time bins in segment ``b``.

    ``rates`` is the source spectrum tabulated on every wavelength bin of the
    grid; bins with zero exposure never produce counts.
    """

    __test__ = False  # not a pytest class

    exposure: ExposureCurve
    pi: tuple[int, ...]
    rates: NDArray[np.float64]
    name: str = ""

    def __post_init__(self):
        rates = np.atleast_2d(np.asarray(self.rates, dtype=float))
        pi = tuple(int(p) for p in self.pi)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "pi", pi)
        if rates.shape != (len(pi) + 1, self.grid.N):
            raise ValueError(f"rates must have shape (B, N) = ({len(pi) + 1}, {self.grid.N})")
        if not np.all(np.isfinite(rates)) or np.any(rates <= 0):
            raise ValueError("rates must be positive and finite")
        edges = (0, *pi, self.grid.J)
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("change points must be strictly increasing interior time-bin edges")
        rates.setflags(write=False)

    @property
    def grid(self) -> BinGrid:
        return self.exposure.grid

    @property
    def B(self) -> int:
        return len(self.pi) + 1

    @property
    def J(self) -> int:
        return self.grid.J

    def segment_index(self) -> NDArray[np.int64]:
        """Segment number of each time bin."""
        return np.searchsorted(np.asarray(self.pi, dtype=np.int64), np.arange(self.J), side="right")

    def mean_table(self) -> NDArray[np.float64]:
        """``N x J`` expected counts."""
        return self.exposure.s[:, None] * self.rates[self.segment_index()].T

    def to_dict(self) -> dict:
        return {"name": self.name, "grid": self.grid.to_dict(), "exposure": self.exposure.s.tolist(),
                "pi": list(self.pi), "rates": self.rates.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TestFunction":
        grid = BinGrid.from_dict(d["grid"])
        return cls(ExposureCurve(grid, np.asarray(d["exposure"], dtype=float)), tuple(d["pi"]),
                   np.asarray(d["rates"], dtype=float), d.get("name", ""))


def simulate_counts(tf: TestFunction, seed: int | np.random.Generator) -> CountTable:
    """Independent Poisson counts with the test function's expected values."""
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed)
    return CountTable(tf.grid, rng.poisson(tf.mean_table()))


def concat_test_functions(first: TestFunction, second: TestFunction) -> TestFunction:
    """Run ``second`` after ``first``; the junction becomes a change point."""
    g1, g2 = first.grid, second.grid
    same = (g1.N == g2.N and math.isclose(g1.w_lo, g2.w_lo) and math.isclose(g1.w_hi, g2.w_hi)
            and math.isclose(g1.delta_w, g2.delta_w) and math.isclose(g1.delta_t, g2.delta_t))
    if not same:
        raise ValueError("test functions must share the wavelength grid and time bin width")
    if not np.allclose(first.exposure.s, second.exposure.s, rtol=1e-12, atol=0):
        raise ValueError("test functions must share the exposure")
    J1 = first.J
    grid = g1.with_time_bins(J1 + second.J)
    pi = first.pi + (J1,) + tuple(p + J1 for p in second.pi)
    name = "+".join(n for n in (first.name, second.name) if n)
    return TestFunction(ExposureCurve(grid, first.exposure.s), pi,
                        np.vstack([first.rates, second.rates]), name)


# ------------------------------------------------------------ synthetic presets

# bright lines of a coronal X-ray spectrum (Angstrom)
LINE_WAVELENGTHS = (13.45, 15.01, 18.97, 12.13, 21.60, 16.78, 17.05, 22.10)


@dataclass(frozen=True)
class SyntheticConfig:
    """Shape of a synthetic test function on the application's binning.

    Adjacent segments differ by ``shift`` in log intensity and by ``tilt`` in
    log slope across the wavelength range; ``lines[b]`` emission lines of log
    excess ``line_strength`` sit on single bins of segment ``b``.
    """

    J: int = 21
    pi: tuple[int, ...] = ()
    lines: tuple[int, ...] = (0,)
    shift: float = 0.6
    tilt: float = 0.6
    line_strength: float = 1.0
    peak_counts: float = 6.0        # expected counts per cell at the spectral peak
    w_lo: float = 1.65
    w_hi: float = 31.0
    delta_w: float = 0.2
    delta_t: float = 2000.0
    dead_bins: int = 5              # leading bins with zero effective area
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "pi", tuple(int(p) for p in self.pi))
        object.__setattr__(self, "lines", tuple(int(m) for m in self.lines))
        if len(self.lines) != len(self.pi) + 1:
            raise ValueError("need one line count per segment")
        if self.peak_counts <= 0:
            raise ValueError("peak_counts must be positive")

    @property
    def B(self) -> int:
        return len(self.pi) + 1

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})


def effective_area(w: NDArray, dead_below: float) -> NDArray[np.float64]:
    """Smooth grating-like effective area (cm^2), zero below ``dead_below``."""
    a = 10.0 + 110.0 * np.exp(-0.5 * ((w - 12.0) / 6.0) ** 2)
    return np.where(w >= dead_below, a, 0.0)


def synthetic_test_function(cfg: SyntheticConfig) -> TestFunction:
    grid = BinGrid(cfg.w_lo, cfg.w_hi, cfg.delta_w, 0.0, cfg.J * cfg.delta_t, cfg.delta_t)
    w = grid.w_centers
    area = effective_area(w, cfg.w_lo + cfg.dead_bins * cfg.delta_w)
    s = cfg.delta_t * cfg.delta_w * area
    x = (w - w.mean()) / (w.max() - w.min())
    # bremsstrahlung-like continuum with a broad bump
    base = -0.04 * (w - 10.0) + 0.5 * np.exp(-0.5 * ((w - 14.0) / 3.0) ** 2)
    line_bins = [int(np.floor((lw - cfg.w_lo) / cfg.delta_w)) for lw in LINE_WAVELENGTHS]
    rates = []
    for b in range(cfg.B):
        sign = 1.0 if b % 2 == 0 else -1.0
        log_rate = base + 0.5 * sign * (cfg.shift + cfg.tilt * x)
        for i in line_bins[:cfg.lines[b]]:
            log_rate[i] += cfg.line_strength
        rates.append(np.exp(log_rate))
    rates = np.array(rates)
    rates *= cfg.peak_counts / np.max(s[:, None] * rates.T)
    return TestFunction(ExposureCurve(grid, s), cfg.pi, rates, cfg.name)


def _even_pi(J: int, B: int) -> tuple[int, ...]:
    return tuple(round(J * b / B) for b in range(1, B))


STRONG = {
    1: SyntheticConfig(J=18, lines=(1,), name="strong-B1"),
    2: SyntheticConfig(J=21, pi=_even_pi(21, 2), lines=(0, 1), name="strong-B2"),
    3: SyntheticConfig(J=20, pi=(7, 13), lines=(0, 0, 0), name="strong-B3"),
}
WEAK = {
    2: SyntheticConfig(J=23, pi=_even_pi(23, 2), lines=(0, 0), shift=0.145, tilt=0.0,
                       name="weak-B2"),
}


def preset(name: str) -> TestFunction:
    """``strong-B1``, ``strong-B2``, ``strong-B3`` or ``weak-B2``."""
    table = {c.name: c for c in (*STRONG.values(), *WEAK.values())}
    if name not in table:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(table)}")
    return synthetic_test_function(table[name])


# ---------------------------------------------------------- recovery experiment

@dataclass(frozen=True)
class RecoveryRecord:
    replicate: int
    B_hat: int | None
    pi_hat: tuple[int, ...] | None
    converged: bool = True
    error: str | None = None

    def to_dict(self) -> dict:
        return {"replicate": self.replicate, "B_hat": self.B_hat,
                "pi_hat": None if self.pi_hat is None else list(self.pi_hat),
                "converged": self.converged, "error": self.error}

    @classmethod
    def from_dict(cls, d: dict) -> "RecoveryRecord":
        pi = d.get("pi_hat")
        return cls(int(d["replicate"]), d.get("B_hat"), None if pi is None else tuple(pi),
                   bool(d.get("converged", True)), d.get("error"))


@dataclass(frozen=True)
class RecoveryReport:
    """Aggregates recomputed from ``records``; RMSE is in time-bin widths."""

    B_true: int
    pi_true: tuple[int, ...]
    seed: int
    records: tuple[RecoveryRecord, ...] = field(repr=False)

    @property
    def n_replicates(self) -> int:
        return len(self.records)

    @property
    def correct(self) -> list[RecoveryRecord]:
        return [r for r in self.records if r.B_hat == self.B_true]

    @property
    def percent_correct_B(self) -> float:
        return 100.0 * len(self.correct) / self.n_replicates if self.records else 0.0

    @property
    def rmse_pi(self) -> float | None:
        """Root mean square boundary error over replicates with the right B; None if there are none."""
        ok = self.correct
        if not ok:
            return None
        if self.B_true == 1:
            return 0.0
        err = np.array([np.subtract(r.pi_hat, self.pi_true) for r in ok], dtype=float)
        return float(np.sqrt(np.mean(err ** 2)))

    @property
    def n_failed(self) -> int:
        return sum(r.error is not None for r in self.records)

    def to_dict(self) -> dict:
        return {"B_true": self.B_true, "pi_true": list(self.pi_true), "seed": self.seed,
                "n_replicates": self.n_replicates, "percent_correct_B": self.percent_correct_B,
                "rmse_pi": self.rmse_pi, "records": [r.to_dict() for r in self.records]}

    @classmethod
    def from_dict(cls, d: dict) -> "RecoveryReport":
        return cls(int(d["B_true"]), tuple(d["pi_true"]), int(d["seed"]),
                   tuple(RecoveryRecord.from_dict(r) for r in d["records"]))


def run_recovery_experiment(tf: TestFunction, n_replicates: int, seed: int, P: int = DEFAULT_P,
                            min_width: int = MIN_WIDTH, settings: FitSettings | None = None,
                            threads: int = 1) -> RecoveryReport:
    """Simulate ``n_replicates`` tables from ``tf`` and run the change-point search on each.

    Replicate ``k`` draws from the stream ``(seed, k)``, so results do not
    depend on execution order.  Failed replicates are recorded, not dropped.
    """
    if n_replicates < 1:
        raise ValueError("n_replicates must be >= 1")
    seed = check_seed(seed)
    exposure = tf.exposure
    config = make_basis(exposure.n_modeled, tf.grid.w_lo, tf.grid.w_hi, P)
    design = build_design(config, tf.grid, exposure.mask)

    def run(k: int) -> RecoveryRecord:
        table = simulate_counts(tf, stream(seed, k))
        try:
            model = detect(table, exposure, design, min_width, settings)
        except Exception as exc:  # recorded per replicate
            log.warning("replicate %d failed: %s", k, exc)
            return RecoveryRecord(k, None, None, False, f"{type(exc).__name__}: {exc}")
        return RecoveryRecord(k, model.B, model.pi, model.converged)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(run, range(n_replicates)))
    else:
        records = [run(k) for k in range(n_replicates)]
    return RecoveryReport(tf.B, tf.pi, seed, tuple(records))

