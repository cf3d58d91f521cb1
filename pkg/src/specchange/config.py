"""Run configuration: a JSON file of settings, overridable field by field."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from ._random import check_seed
from .basis import DEFAULT_P
from .changepoint import MIN_WIDTH
from .perm_test import DEFAULT_N_SIM
from .segment_fit import RHO_GRID, FitSettings


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # inputs: an event list with per-detector areas, or a prebuilt count table with exposure
    events: str | None = None
    areas: tuple[str, ...] = ()
    counts: str | None = None
    exposure: str | None = None
    result: str | None = None
    preset: str | None = None
    # bin grid
    w_lo: float | None = None
    w_hi: float | None = None
    delta_w: float | None = None
    t_lo: float | None = None
    t_hi: float | None = None
    delta_t: float | None = None
    # model and search
    P: int = DEFAULT_P
    min_width: int = MIN_WIDTH
    rho_grid: tuple[float, ...] = RHO_GRID
    n_gamma: int = 100
    gamma_ratio: float = 1e-4
    nonneg: bool = False
    patience: int = 0
    start: int | None = None
    stop: int | None = None
    # Monte Carlo
    n_sim: int = DEFAULT_N_SIM
    n_replicates: int = 50
    seed: int | None = None
    alpha: float = 0.05
    threads: int = 1
    output: str = "out"

    def __post_init__(self):
        object.__setattr__(self, "areas", tuple(self.areas))
        object.__setattr__(self, "rho_grid", tuple(float(r) for r in self.rho_grid))
        self.validate()

    def validate(self) -> None:
        if self.P < 5:
            raise ConfigError("P must be >= 5")
        if self.min_width < 1:
            raise ConfigError("min_width must be >= 1")
        if self.n_sim < 1 or self.n_replicates < 1:
            raise ConfigError("n_sim and n_replicates must be >= 1")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.seed is not None:
            try:
                check_seed(self.seed)
            except (TypeError, ValueError) as exc:
                raise ConfigError(str(exc)) from None
        for name in ("delta_w", "delta_t"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive")
        try:
            self.fit_settings()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def fit_settings(self) -> FitSettings:
        return FitSettings(rho_grid=self.rho_grid, n_gamma=self.n_gamma,
                           gamma_ratio=self.gamma_ratio, nonneg=self.nonneg,
                           patience=self.patience)

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) in (None, ())]
        if missing:
            raise ConfigError(f"missing required setting(s): {', '.join(missing)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["areas"] = list(self.areas)
        d["rho_grid"] = list(self.rho_grid)
        return d

    def echo(self) -> dict:
        """Settings that affect results (I/O locations and thread count left out)."""
        d = self.to_dict()
        for k in ("events", "areas", "counts", "exposure", "result", "output", "threads"):
            d.pop(k)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path | None, overrides: dict | None = None) -> "RunConfig":
        """Read ``path`` (JSON) if given, then apply non-None ``overrides``."""
        base = {}
        if path is not None:
            try:
                base = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
            if not isinstance(base, dict):
                raise ConfigError("config file must hold a JSON object")
        cfg = cls.from_dict(base)
        if overrides:
            cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
        return cfg
