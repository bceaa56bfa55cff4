"""Imputation scoring against held-out truth."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np

from .exceptions import ConfigError, NumericalError

__all__ = ["MISSING_ONLY", "FULL_SERIES", "SCOPES", "EvalReport", "mae", "rmse", "pearson", "score", "compare_conditions", "reports_to_csv", "reports_to_json"]

MISSING_ONLY = "missing-cells-only"
FULL_SERIES = "full-series"
SCOPES = (MISSING_ONLY, FULL_SERIES)


def _pair(y, yhat):
    y = np.asarray(y, dtype=float).reshape(-1)
    yhat = np.asarray(yhat, dtype=float).reshape(-1)
    if y.size != yhat.size:
        raise ConfigError(f"length mismatch: {y.size} vs {yhat.size}")
    if y.size < 1:
        raise ConfigError("need at least one pair")
    if not (np.isfinite(y).all() and np.isfinite(yhat).all()):
        raise ConfigError("truth and estimate must be finite")
    return y, yhat


def mae(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def rmse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def pearson(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    dy = y - y.mean()
    dh = yhat - yhat.mean()
    sy = np.sqrt(np.sum(dy * dy))
    sh = np.sqrt(np.sum(dh * dh))
    if sy == 0 or sh == 0:
        raise NumericalError("undefined correlation: constant input")
    return float(np.clip(np.sum(dy * dh) / (sy * sh), -1.0, 1.0))


@dataclass(frozen=True)
class EvalReport:
    condition: str
    scope: str
    mae: float
    rmse: float
    pearson_r: Optional[float]
    n: int


def score(truth, estimate, condition: str, scope: str, mask=None) -> EvalReport:
    truth = np.asarray(truth, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if scope == MISSING_ONLY:
        if mask is None:
            raise ConfigError("missing-cells scope needs the mask")
        sel = np.asarray(mask, dtype=bool)
        truth, estimate = truth[sel], estimate[sel]
    elif scope != FULL_SERIES:
        raise ConfigError(f"unknown scope {scope!r}")
    try:
        r = pearson(truth, estimate) if truth.size >= 2 else None
    except NumericalError:
        r = None
    return EvalReport(condition, scope, mae(truth, estimate), rmse(truth, estimate), r, int(truth.size))


def compare_conditions(truth, enhanced, baseline, scope: Optional[str] = None) -> list[EvalReport]:
    """Score both conditions; ``scope=None`` emits both scopes.

    ``enhanced`` and ``baseline`` are :class:`~periodica.imputer.CompletedSet`
    results built on the same mask.
    """
    if not np.array_equal(enhanced.missing, baseline.missing):
        raise ConfigError("enhanced and baseline were imputed under different masks")
    scopes: Iterable[str] = SCOPES if scope is None else (scope,)
    return [
        score(truth, cs.combined, label, sc, cs.missing)
        for sc in scopes
        for label, cs in (("enhanced", enhanced), ("baseline", baseline))
    ]


_FIELDS = ["condition", "scope", "mae", "rmse", "pearson_r", "n"]


def reports_to_csv(reports: Iterable[EvalReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_FIELDS)
    for r in reports:
        w.writerow(
            [
                r.condition,
                r.scope,
                format(r.mae, ".17g"),
                format(r.rmse, ".17g"),
                "" if r.pearson_r is None else format(r.pearson_r, ".17g"),
                r.n,
            ]
        )
    return buf.getvalue()


def reports_to_json(reports: Iterable[EvalReport]) -> str:
    return json.dumps([asdict(r) for r in reports], indent=2)
