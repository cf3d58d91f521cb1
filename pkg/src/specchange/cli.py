"""Command-line interface.

Exit codes: 0 success, 1 usage or input error, 2 results written but some
fit did not converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .basis import build_design, make_basis
from .changepoint import detect, single_segment
from .config import ConfigError, RunConfig
from .data_model import (BinGrid, InputFormatError, bin_events, build_exposure, read_area_csv,
                         read_count_table, read_events_csv, read_exposure_csv,
                         write_count_table, write_exposure_csv)
from .perm_test import permutation_test
from .results import FitResultFile, canonical_json, export_plot_data, result_from_model
from .segment_fit import SegmentFitter
from .simulator import TestFunction, preset, run_recovery_experiment, simulate_counts

log = logging.getLogger("specchange")

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_timing(out: Path, name: str, seconds: float) -> None:
    # kept apart from the canonical result so reruns stay byte-identical
    (out / f"{name}.timing.json").write_text(
        json.dumps({"wall_clock_seconds": round(seconds, 3), "version": __version__}) + "\n")


def _load_table(cfg: RunConfig):
    cfg.require("counts", "exposure")
    table = read_count_table(cfg.counts)
    exposure = read_exposure_csv(cfg.exposure, table.grid)
    design = build_design(make_basis(exposure.n_modeled, table.grid.w_lo, table.grid.w_hi, cfg.P),
                          table.grid, exposure.mask)
    return table, exposure, design


def _status(converged: bool) -> int:
    if not converged:
        log.warning("some fits did not converge; results written with converged=false flags")
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_bin(cfg: RunConfig) -> int:
    cfg.require("events", "areas", "w_lo", "w_hi", "delta_w", "delta_t")
    events = read_events_csv(cfg.events)
    t_lo = events.t_start if cfg.t_lo is None else cfg.t_lo
    t_hi = events.t_end if cfg.t_hi is None else cfg.t_hi
    grid = BinGrid(cfg.w_lo, cfg.w_hi, cfg.delta_w, t_lo, t_hi, cfg.delta_t)
    table = bin_events(events, grid)
    exposure = build_exposure([read_area_csv(p) for p in cfg.areas], grid)
    out = _outdir(cfg)
    write_count_table(table, out / "counts.csv")
    write_exposure_csv(exposure, out / "exposure.csv")
    print(f"binned {table.total} events into {grid.N} x {grid.J} bins; {table.n_dropped} dropped "
          f"outside the grid; {exposure.n_modeled} modeled wavelength bins")
    return EXIT_OK


def cmd_fit(cfg: RunConfig) -> int:
    table, exposure, design = _load_table(cfg)
    start = 0 if cfg.start is None else cfg.start
    stop = table.J if cfg.stop is None else cfg.stop
    window = table.window(start, stop)
    t0 = time.perf_counter()
    model = single_segment(SegmentFitter(window, exposure, design, cfg.fit_settings()))
    result = result_from_model(model, design, window.grid, cfg.echo(), kind="fit")
    out = _outdir(cfg)
    result.write(out / "fit.json")
    _write_timing(out, "fit", time.perf_counter() - t0)
    fit = model.fits[0]
    print(f"time bins [{start}, {stop}): gamma={fit.gamma:.6g} rho={fit.rho:g} "
          f"nonzero beta={fit.coef.l0_beta} lines={fit.n_lines} mdl_null={fit.score.value:.6f}")
    return _status(model.converged)


def cmd_detect(cfg: RunConfig) -> int:
    table, exposure, design = _load_table(cfg)
    t0 = time.perf_counter()
    model = detect(table, exposure, design, cfg.min_width, cfg.fit_settings(), cfg.threads)
    result = result_from_model(model, design, table.grid, cfg.echo())
    out = _outdir(cfg)
    result.write(out / "result.json")
    _write_timing(out, "detect", time.perf_counter() - t0)
    print(f"B={model.B} change points at time-bin edges {list(model.pi)}; "
          f"mdl_full={model.mdl:.6f}")
    return _status(model.converged)


def cmd_mctest(cfg: RunConfig) -> int:
    cfg.require("seed")
    table, exposure, design = _load_table(cfg)
    t0 = time.perf_counter()
    perm, model = permutation_test(table, exposure, design, cfg.n_sim, cfg.seed, cfg.alpha,
                                   cfg.min_width, cfg.fit_settings(), cfg.threads)
    result = result_from_model(model, design, table.grid, cfg.echo(), perm, kind="mctest")
    out = _outdir(cfg)
    result.write(out / "result.json")
    _write_timing(out, "mctest", time.perf_counter() - t0)
    print(f"B={model.B} m*={perm.m_star:.6f} p={perm.p_hat:.4g} "
          f"({'reject' if perm.reject else 'retain'} homogeneity at alpha={perm.alpha:g})")
    return _status(model.converged)


def _test_function(cfg: RunConfig) -> TestFunction:
    if cfg.preset is None:
        raise ConfigError("simulate and bench need --preset (a preset name or a test-function JSON)")
    path = Path(cfg.preset)
    if path.suffix == ".json" and path.exists():
        return TestFunction.from_dict(json.loads(path.read_text()))
    return preset(cfg.preset)


def cmd_simulate(cfg: RunConfig) -> int:
    cfg.require("seed")
    tf = _test_function(cfg)
    table = simulate_counts(tf, cfg.seed)
    out = _outdir(cfg)
    write_count_table(table, out / "counts.csv")
    write_exposure_csv(tf.exposure, out / "exposure.csv")
    (out / "truth.json").write_text(canonical_json(tf.to_dict()))
    print(f"simulated {table.total} counts on {table.N} x {table.J} bins; true B={tf.B}, "
          f"change points {list(tf.pi)}")
    return EXIT_OK


def cmd_bench(cfg: RunConfig) -> int:
    cfg.require("seed")
    tf = _test_function(cfg)
    t0 = time.perf_counter()
    report = run_recovery_experiment(tf, cfg.n_replicates, cfg.seed, cfg.P, cfg.min_width,
                                     cfg.fit_settings(), cfg.threads)
    out = _outdir(cfg)
    doc = {"config": cfg.echo(), "test_function": tf.name, "report": report.to_dict(),
           "version": __version__}
    (out / "recovery.json").write_text(canonical_json(doc))
    _write_timing(out, "bench", time.perf_counter() - t0)
    rmse = "n/a" if report.rmse_pi is None else f"{report.rmse_pi:.3f}"
    print(f"{tf.name or 'test function'}: B={tf.B}, {report.percent_correct_B:.1f}% correct B "
          f"over {report.n_replicates} replicates, RMSE(pi)={rmse} bins, "
          f"{report.n_failed} failed")
    return _status(all(r.converged for r in report.records))


def cmd_export_plots(cfg: RunConfig) -> int:
    cfg.require("result")
    result = FitResultFile.read(cfg.result)
    paths = export_plot_data(result, _outdir(cfg))
    print(f"wrote {len(paths)} files: " + ", ".join(p.name for p in paths))
    return EXIT_OK


COMMANDS = {
    "bin": (cmd_bin, "bin an event list and build the exposure curve"),
    "fit": (cmd_fit, "fit one homogeneous segment"),
    "detect": (cmd_detect, "stepwise change-point search"),
    "mctest": (cmd_mctest, "permutation test for any change point"),
    "simulate": (cmd_simulate, "simulate a count table from a test function"),
    "bench": (cmd_bench, "recovery experiment on simulated replicates"),
    "export-plots": (cmd_export_plots, "CSV data for spectra and heat-map plots"),
}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of settings; flags override it")
    common.add_argument("--output", "-o", help="output directory (default: out)")
    common.add_argument("--events")
    common.add_argument("--areas", nargs="+", help="one effective-area CSV per detector")
    common.add_argument("--counts", help="count-table CSV (grid sidecar alongside)")
    common.add_argument("--exposure", help="exposure CSV")
    common.add_argument("--result", help="result JSON (export-plots)")
    common.add_argument("--preset", help="preset name or test-function JSON")
    for name in ("w_lo", "w_hi", "delta_w", "t_lo", "t_hi", "delta_t", "alpha", "gamma_ratio"):
        common.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float)
    for name in ("P", "min_width", "n_gamma", "patience", "start", "stop", "n_sim",
                 "n_replicates", "seed", "threads"):
        common.add_argument(f"--{name.replace('_', '-')}", dest=name, type=int)
    common.add_argument("--rho-grid", dest="rho_grid", type=_floats,
                        help="comma-separated rho values")
    common.add_argument("--nonneg", action="store_true", default=None,
                        help="restrict line coefficients to be nonnegative")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="specchange", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text, description=help_text)
    return parser


_NOT_CONFIG = {"command", "config", "verbose"}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    if overrides.get("areas") is not None:
        overrides["areas"] = tuple(overrides["areas"])
    func = COMMANDS[args.command][0]
    try:
        cfg = RunConfig.load(args.config, overrides)
        return func(cfg)
    except (ConfigError, InputFormatError, FileNotFoundError, KeyError, ValueError,
            TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
