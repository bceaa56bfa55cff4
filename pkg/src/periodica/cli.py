"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .config import PipelineConfig, load_config, stage_seed
from .exceptions import ConfigError, NumericalError, PeriodicaError, SeriesFormatError
from .missingness import MarSpec
from .pipeline import (
    SEED_MASK,
    ArtifactWriter,
    StageError,
    components_stage,
    emit_plot_data,
    evaluate_stage,
    impute_stage,
    load_components,
    read_combined,
    run_pipeline,
    simulate_stage,
    smooth_stage,
)
from .series import read_series_file

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("periodica")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--seed", type=int, help="global seed (overrides config)")
    p.add_argument("--input", help="input series CSV")
    p.add_argument("--out", help="output directory")
    p.add_argument("--mode", choices=["enhanced", "baseline", "both"])
    p.add_argument("--replicates", type=int, help="bootstrap replicates B")
    p.add_argument("--imputations", type=int, help="number of imputations m")
    p.add_argument("--date-column")
    p.add_argument("--value-column")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="periodica",
        description="Periodic-component assisted multiple imputation for daily series.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="inject MAR weekday/weekend missingness")
    _common(p)
    p.add_argument("--total-rate", type=float)
    p.add_argument("--weekend-share", type=float)

    p = sub.add_parser("components", help="extract and test periodic components")
    _common(p)

    p = sub.add_parser("impute", help="bootstrapped-EM multiple imputation")
    _common(p)
    p.add_argument("--components", help="components.json (default: <out>/components.json)")

    p = sub.add_parser("smooth", help="LOESS and moving-average smoothing of imputed series")
    _common(p)

    p = sub.add_parser("evaluate", help="score imputations against the truth")
    _common(p)
    p.add_argument("--truth", help="complete truth CSV (default: <out>/original.csv)")

    p = sub.add_parser("pipeline", help="run every stage")
    _common(p)
    p.add_argument("--truth", help="truth CSV when masking is disabled")
    p.add_argument("--no-mask", action="store_true", help="impute the input's own gaps")

    p = sub.add_parser("plot-data", help="emit tidy plotting tables")
    _common(p)
    return parser


def _config(args) -> PipelineConfig:
    overrides = dict(
        seed=args.seed,
        input_path=args.input,
        out_dir=args.out,
        mode=args.mode,
        replicates=args.replicates,
        imputations=args.imputations,
        date_column=args.date_column,
        value_column=args.value_column,
        truth_path=getattr(args, "truth", None),
    )
    cfg = load_config(args.config, **overrides)
    if getattr(args, "no_mask", False):
        cfg = replace(cfg, mar=None)
    rate, share = getattr(args, "total_rate", None), getattr(args, "weekend_share", None)
    if rate is not None or share is not None:
        base = cfg.mar or MarSpec()
        mar = MarSpec(base.total_rate if rate is None else rate, base.weekend_share if share is None else share)
        cfg = replace(cfg, mar=mar)
    return cfg


def _input(cfg: PipelineConfig, default: str):
    path = Path(cfg.input_path) if cfg.input_path else cfg.out_dir / default
    if not path.exists():
        raise ConfigError(f"input not found: {path}")
    return read_series_file(path, cfg.date_column, cfg.value_column)


def _run(args) -> int:
    cfg = _config(args)
    cmd = args.command
    if cmd == "pipeline":
        manifest = run_pipeline(cfg)
        print(f"significant components: {', '.join(manifest.significant) or 'none'}")
        for w in manifest.warnings:
            print(f"warning: {w}", file=sys.stderr)
        print(f"wrote {len(manifest.files)} files to {cfg.out_dir}")
        return EXIT_OK

    writer = ArtifactWriter(cfg.out_dir)
    if cmd == "simulate":
        if cfg.input_path is None:
            raise ConfigError("simulate needs --input")
        mar = cfg.mar or MarSpec()
        spec = MarSpec(mar.total_rate, mar.weekend_share, stage_seed(cfg.seed, SEED_MASK))
        masked = simulate_stage(_input(cfg, "original.csv"), spec, writer)
        for w in masked.warnings:
            print(f"warning: {w}", file=sys.stderr)
        print(f"masked {masked.n_masked} of {len(masked.observed)} days")
    elif cmd == "components":
        comps = components_stage(_input(cfg, "masked.csv"), cfg, writer)
        for c in comps:
            print(f"{c.name}: {'significant' if c.significant else 'not significant'}")
    elif cmd == "impute":
        observed = _input(cfg, "masked.csv")
        comps = []
        if "enhanced" in cfg.modes:
            path = Path(args.components) if args.components else cfg.out_dir / "components.json"
            if not path.exists():
                raise ConfigError(f"components file not found: {path} (run `components` first)")
            comps = load_components(path)
        impute_stage(observed, comps, cfg, writer)
    elif cmd == "smooth":
        found = {m: read_combined(cfg.out_dir / f"combined_{m}.csv")[0] for m in cfg.modes if (cfg.out_dir / f"combined_{m}.csv").exists()}
        if not found:
            raise ConfigError(f"no combined_<mode>.csv in {cfg.out_dir} (run `impute` first)")
        smooth_stage(found, cfg, writer)
    elif cmd == "evaluate":
        truth_path = cfg.truth_path or cfg.out_dir / "original.csv"
        if not Path(truth_path).exists():
            raise ConfigError(f"truth series not found: {truth_path}")
        truth = read_series_file(truth_path, cfg.date_column, cfg.value_column)
        combined, singles = {}, {}
        for m in cfg.modes:
            path = cfg.out_dir / f"combined_{m}.csv"
            if path.exists():
                ts, flags = read_combined(path)
                combined[m] = (ts.values, flags)
                paths = sorted(cfg.out_dir.glob(f"imputed_{m}_*.csv"), key=lambda p: int(p.stem.rsplit("_", 1)[1]))
                singles[m] = [read_series_file(p).values for p in paths]
        if not combined:
            raise ConfigError(f"no combined_<mode>.csv in {cfg.out_dir} (run `impute` first)")
        for r in evaluate_stage(truth, combined, writer, singles):
            print(f"{r.condition:9s} {r.scope:19s} mae={r.mae:.6f} rmse={r.rmse:.6f} r={r.pearson_r}")
    elif cmd == "plot-data":
        emit_plot_data(cfg.out_dir, writer)
    for name in writer.files:
        log.info("wrote %s", cfg.out_dir / name)
    return EXIT_OK


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, SeriesFormatError):
        return EXIT_DATA
    if isinstance(exc, NumericalError):
        return EXIT_NUMERIC
    return EXIT_DATA


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return _run(args)
    except PeriodicaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
