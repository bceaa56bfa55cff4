"""End-to-end orchestration: mask, extract components, impute, smooth, score.

Every stage writes its artifacts into one output directory, so each stage
can also be run on its own from the files an earlier stage left there.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import PipelineConfig, stage_seed
from .evaluation import FULL_SERIES, MISSING_ONLY, EvalReport, reports_to_csv, reports_to_json, score
from .exceptions import NumericalError, PeriodicaError, SeriesFormatError
from .imputer import CompletedSet, ImputationConfig, bootstrap_em_impute, build_design_matrix
from .missingness import MarSpec, MaskedSeries, apply_mar_mask, describe_missingness
from .series import TimeSeries, Weekday, parse_series, read_series_file, write_series
from .smoothing import loess, moving_average
from .vbpbb import (
    BootstrapConfig,
    MedianVector,
    PeriodicComponent,
    analyze_component,
    component_seed,
    split_harmonics,
)

__all__ = ["RunManifest", "StageError", "ArtifactWriter", "run_pipeline", "emit_plot_data"]

log = logging.getLogger(__name__)

SEED_MASK, SEED_BOOTSTRAP, SEED_IMPUTE = 0, 1, 2


class StageError(PeriodicaError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


class ArtifactWriter:
    """Writes text artifacts and remembers them for checksums and cleanup."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def write(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        path.write_bytes(text.encode("utf-8"))
        if name not in self.files:
            self.files.append(name)
        return path

    def checksums(self) -> dict[str, str]:
        return {
            name: hashlib.sha256((self.out_dir / name).read_bytes()).hexdigest()
            for name in sorted(self.files)
        }

    def mark_partial(self):
        for name in self.files:
            path = self.out_dir / name
            if path.exists():
                path.replace(path.with_name(path.name + ".partial"))
        self.files = []


@dataclass
class RunManifest:
    config: dict
    version: str
    timings: dict[str, float] = field(default_factory=dict)
    significant: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    files: dict[str, str] = field(default_factory=dict)
    seeds: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": self.config,
                "version": self.version,
                "stage_seeds": self.seeds,
                "timings_s": self.timings,
                "significant_components": self.significant,
                "warnings": self.warnings,
                "files": self.files,
            },
            indent=2,
        )


# --- stages -----------------------------------------------------------------


def simulate_stage(series: TimeSeries, spec: MarSpec, writer: ArtifactWriter) -> MaskedSeries:
    masked = apply_mar_mask(series, spec)
    writer.write("original.csv", write_series(series))
    writer.write("masked.csv", write_series(masked.observed))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", "value"])
    for i, v in masked.holdout.items():
        w.writerow([series.date_at(i).isoformat(), format(v, ".17g")])
    writer.write("holdout.csv", buf.getvalue())
    report = describe_missingness(masked.observed)
    report.warnings.extend(masked.warnings)
    writer.write("missingness.json", report.to_json() + "\n")
    return masked


def components_stage(
    observed: TimeSeries, cfg: PipelineConfig, writer: ArtifactWriter
) -> list[PeriodicComponent]:
    specs = split_harmonics(cfg.components) if cfg.per_harmonic else list(cfg.components)
    base_seed = stage_seed(cfg.seed, SEED_BOOTSTRAP)
    results = []
    for i, spec in enumerate(specs):
        boot = BootstrapConfig(cfg.replicates, component_seed(base_seed, i), cfg.ci_level)
        comp = analyze_component(observed, spec, boot, demean=cfg.demean)
        writer.write(f"ci_band_{spec.name}.csv", comp.band.to_csv())
        writer.write(f"median_{spec.name}.csv", comp.median.to_csv())
        results.append(comp)
    writer.write(
        "components.json", json.dumps([c.summary() for c in results], indent=2) + "\n"
    )
    return results


def load_components(path: Path) -> list[tuple[str, MedianVector]]:
    """Significant ``(name, median)`` pairs from a ``components.json``."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return [(c["name"], MedianVector(np.array(c["median"], dtype=float))) for c in data if c["significant"]]


def impute_stage(
    observed: TimeSeries, components, cfg: PipelineConfig, writer: ArtifactWriter
) -> dict[str, CompletedSet]:
    seed = stage_seed(cfg.seed, SEED_IMPUTE)
    out = {}
    for mode in cfg.modes:
        dm = build_design_matrix(observed, components, mode)
        icfg = ImputationConfig(cfg.imputations, seed, cfg.em, mode)
        cs = bootstrap_em_impute(dm, icfg)
        for j in range(cs.m):
            writer.write(f"imputed_{mode}_{j + 1}.csv", cs.imputation_csv(j, observed.start_date))
        writer.write(f"combined_{mode}.csv", cs.combined_csv(observed.start_date))
        out[mode] = cs
    return out


def smooth_stage(
    combined: dict[str, TimeSeries], cfg: PipelineConfig, writer: ArtifactWriter
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    out = {}
    for mode, ts in combined.items():
        lo = loess(ts.values, cfg.loess)
        ma = moving_average(ts.values, min(cfg.ma_window, len(ts) if len(ts) % 2 else len(ts) - 1))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["date", "loess", "ma"])
        for i in range(len(ts)):
            w.writerow([ts.date_at(i).isoformat(), format(lo[i], ".17g"), format(ma[i], ".17g")])
        writer.write(f"smoothed_{mode}.csv", buf.getvalue())
        out[mode] = (lo, ma)
    return out


def evaluate_stage(
    truth: TimeSeries,
    combined: dict[str, tuple[np.ndarray, np.ndarray]],
    writer: ArtifactWriter,
    per_imputation: Optional[dict[str, Sequence[np.ndarray]]] = None,
) -> list[EvalReport]:
    """Score ``{mode: (estimate, was_missing)}`` against ``truth`` in both scopes.

    ``per_imputation`` maps a mode to its individual completions; those are
    scored too (condition ``<mode>_<j>``) into ``metrics_per_imputation.csv``.
    """
    if truth.n_missing:
        raise SeriesFormatError("truth series must be complete")
    masks = [m for _, m in combined.values()]
    if any(not np.array_equal(masks[0], m) for m in masks[1:]):
        raise SeriesFormatError("conditions were imputed under different masks")
    reports = [
        score(truth.values, est, mode, scope, mask)
        for scope in (MISSING_ONLY, FULL_SERIES)
        for mode, (est, mask) in combined.items()
    ]
    writer.write("metrics.csv", reports_to_csv(reports))
    writer.write("metrics.json", reports_to_json(reports) + "\n")
    if per_imputation:
        singles = [
            score(truth.values, est, f"{mode}_{j + 1}", scope, combined[mode][1])
            for scope in (MISSING_ONLY, FULL_SERIES)
            for mode, ests in per_imputation.items()
            for j, est in enumerate(ests)
        ]
        writer.write("metrics_per_imputation.csv", reports_to_csv(singles))
    return reports


def read_combined(path: Path) -> tuple[TimeSeries, np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    ts = parse_series(text, "date", "value")
    flags = np.array([int(r["was_missing"]) for r in csv.DictReader(io.StringIO(text))], dtype=bool)
    return ts, flags


# --- plot data ----------------------------------------------------------------


def emit_plot_data(out_dir: Path, writer: Optional[ArtifactWriter] = None) -> list[str]:
    """Long-format plotting tables built from the artifacts in ``out_dir``.

    Writes ``series.csv`` (date, series_name, value; missing values omitted)
    and ``missing_by_weekday.csv``; ``ci_band_*.csv`` and ``metrics.csv`` are
    produced by their own stages and reused as-is.
    """
    out_dir = Path(out_dir)
    writer = writer or ArtifactWriter(out_dir)
    rows: list[tuple[str, str, str]] = []

    def add(name: str, ts: TimeSeries):
        for i, (v, m) in enumerate(zip(ts.values, ts.missing)):
            if not m:
                rows.append((ts.date_at(i).isoformat(), name, format(float(v), ".17g")))

    for name in ("original", "masked"):
        path = out_dir / f"{name}.csv"
        if path.exists():
            add(name, read_series_file(path))
    for mode in ("enhanced", "baseline"):
        path = out_dir / f"combined_{mode}.csv"
        if path.exists():
            add(mode, read_combined(path)[0])
        path = out_dir / f"smoothed_{mode}.csv"
        if path.exists():
            text = path.read_text(encoding="utf-8")
            for col in ("loess", "ma"):
                add(f"{col}_{mode}", parse_series(text, "date", col))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", "series_name", "value"])
    w.writerows(rows)
    written = [writer.write("series.csv", buf.getvalue()).name]

    masked_path = out_dir / "masked.csv"
    if masked_path.exists():
        report = describe_missingness(read_series_file(masked_path))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["weekday", "count"])
        for d in Weekday:
            w.writerow([d.short, report.by_weekday[d]])
        written.append(writer.write("missing_by_weekday.csv", buf.getvalue()).name)
    return written


# --- orchestration ------------------------------------------------------------


@contextmanager
def _stage(name: str, manifest: RunManifest, writer: ArtifactWriter):
    start = time.perf_counter()
    log.info("stage %s", name)
    try:
        yield
    except PeriodicaError as exc:
        writer.mark_partial()
        raise StageError(name, exc) from exc
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        writer.mark_partial()
        raise StageError(name, NumericalError(str(exc))) from exc
    finally:
        manifest.timings[name] = round(time.perf_counter() - start, 6)


def run_pipeline(cfg: PipelineConfig) -> RunManifest:
    """Run every stage and write artifacts plus ``manifest.json`` to ``cfg.out_dir``."""
    writer = ArtifactWriter(cfg.out_dir)
    manifest = RunManifest(config=cfg.to_dict(), version=__version__)
    manifest.seeds = {
        name: stage_seed(cfg.seed, stage)
        for name, stage in (("mask", SEED_MASK), ("bootstrap", SEED_BOOTSTRAP), ("impute", SEED_IMPUTE))
    }

    with _stage("load", manifest, writer):
        cfg.check_paths()
        if cfg.input_path is None:
            raise SeriesFormatError("no input series configured")
        series = read_series_file(cfg.input_path, cfg.date_column, cfg.value_column)

    truth: Optional[TimeSeries] = None
    with _stage("simulate", manifest, writer):
        if cfg.mar is not None:
            spec = MarSpec(cfg.mar.total_rate, cfg.mar.weekend_share, stage_seed(cfg.seed, SEED_MASK))
            masked = simulate_stage(series, spec, writer)
            manifest.warnings.extend(masked.warnings)
            observed, truth = masked.observed, series
        else:
            observed = series
            writer.write("masked.csv", write_series(observed))
            if cfg.truth_path is not None:
                truth = read_series_file(cfg.truth_path, cfg.date_column, cfg.value_column)

    with _stage("components", manifest, writer):
        comps = components_stage(observed, cfg, writer)
        manifest.significant = [c.name for c in comps if c.significant]
        for c in comps:
            manifest.warnings.extend(c.warnings)

    with _stage("impute", manifest, writer):
        completed = impute_stage(observed, comps, cfg, writer)
        for cs in completed.values():
            manifest.warnings.extend(f"{cs.mode}: {w}" for w in cs.warnings)

    with _stage("smooth", manifest, writer), warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        smooth_stage({m: TimeSeries(observed.start_date, cs.combined) for m, cs in completed.items()}, cfg, writer)
    manifest.warnings.extend(str(w.message) for w in caught)

    with _stage("evaluate", manifest, writer):
        n_miss = observed.n_missing
        if truth is None:
            manifest.warnings.append("evaluation skipped: no ground truth available")
        elif n_miss == 0:
            manifest.warnings.append("evaluation skipped: n_miss=0, nothing was imputed")
        else:
            evaluate_stage(
                truth,
                {m: (cs.combined, cs.missing) for m, cs in completed.items()},
                writer,
                {m: list(cs.completions) for m, cs in completed.items()},
            )

    with _stage("plot-data", manifest, writer):
        emit_plot_data(cfg.out_dir, writer)

    manifest.files = writer.checksums()
    (Path(cfg.out_dir) / "manifest.json").write_text(manifest.to_json() + "\n", encoding="utf-8")
    return manifest
