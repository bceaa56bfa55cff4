"""Bootstrapped-EM multiple imputation under a multivariate normal model.

Only the first (target) column of a design matrix may be missing; auxiliary
columns are constructed covariates and therefore complete. Each imputation
resamples rows with replacement, fits mean and covariance by EM on the
resample, and fills the missing targets of the *original* rows with draws
from the conditional normal distribution given the covariates.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._parallel import ordered_map
from .exceptions import ConfigError, ImputationError, NumericalError, SingularCovarianceError
from .missingness import MaskedSeries
from .series import TimeSeries, format_value
from .vbpbb import MedianVector, PeriodicComponent, tile_median

__all__ = [
    "DesignMatrix",
    "EmConfig",
    "EmFit",
    "ImputationConfig",
    "CompletedSet",
    "build_design_matrix",
    "em_fit",
    "conditional_draw",
    "conditional_moments",
    "bootstrap_em_impute",
    "BootstrapEMImputer",
]

ENHANCED = "enhanced"
BASELINE = "baseline"
_LOG2PI = np.log(2.0 * np.pi)


@dataclass(eq=False)
class DesignMatrix:
    data: np.ndarray
    columns: list[str]
    warnings: list[str] = field(default_factory=list)
    start_date: Optional[object] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[1] != len(self.columns):
            raise ConfigError("design matrix shape does not match its column names")
        if np.isnan(self.data[:, 1:]).any():
            raise ConfigError("only the target column may contain missing cells")

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.data[:, 0])

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class EmConfig:
    tol: float = 1e-4
    max_iter: int = 500
    ridge: float = 1e-4

    def __post_init__(self):
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.ridge < 0:
            raise ConfigError("ridge must be non-negative")


@dataclass(eq=False)
class EmFit:
    mu: np.ndarray
    sigma: np.ndarray
    iterations: int
    loglik: list[float]
    converged: bool


@dataclass(frozen=True)
class ImputationConfig:
    m_imputations: int = 5
    seed: int = 0
    em: EmConfig = EmConfig()
    mode: str = ENHANCED
    deterministic: bool = False
    resample: bool = True

    def __post_init__(self):
        if self.m_imputations < 1:
            raise ConfigError("m_imputations must be >= 1")
        if self.mode not in (ENHANCED, BASELINE):
            raise ConfigError(f"mode must be {ENHANCED!r} or {BASELINE!r}")


@dataclass(eq=False)
class CompletedSet:
    """Result of multiple imputation of the target column.

    ``within``, ``between`` and ``total`` are indexed like ``missing_index``.
    """

    completions: np.ndarray
    fits: list[EmFit]
    combined: np.ndarray
    missing: np.ndarray
    within: np.ndarray
    between: np.ndarray
    total: np.ndarray
    mode: str = ENHANCED
    warnings: list[str] = field(default_factory=list)

    @property
    def m(self) -> int:
        return self.completions.shape[0]

    @property
    def missing_index(self) -> np.ndarray:
        return np.flatnonzero(self.missing)

    def combined_series(self, start_date) -> TimeSeries:
        return TimeSeries(start_date, self.combined)

    def imputation_csv(self, j: int, start_date) -> str:
        ts = TimeSeries(start_date, self.completions[j])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["date", "value", "was_missing"])
        for i, v in enumerate(ts.values):
            w.writerow([ts.date_at(i).isoformat(), format_value(float(v)), int(self.missing[i])])
        return buf.getvalue()

    def combined_csv(self, start_date) -> str:
        ts = TimeSeries(start_date, self.combined)
        slot = {int(i): k for k, i in enumerate(self.missing_index)}
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["date", "value", "was_missing", "W", "Bv", "T"])
        for i, v in enumerate(ts.values):
            row = [ts.date_at(i).isoformat(), format_value(float(v)), int(self.missing[i])]
            if i in slot:
                k = slot[i]
                row += [format_value(float(a[k])) for a in (self.within, self.between, self.total)]
            else:
                row += ["", "", ""]
            w.writerow(row)
        return buf.getvalue()


def _median_columns(components) -> list[tuple[str, MedianVector]]:
    out = []
    for c in components:
        if isinstance(c, PeriodicComponent):
            if c.significant:
                out.append((c.name, c.median))
        else:
            name, mv = c
            out.append((name, mv if isinstance(mv, MedianVector) else MedianVector(np.asarray(mv, float))))
    return out


def build_design_matrix(masked, components: Sequence = (), mode: str = ENHANCED) -> DesignMatrix:
    """Assemble ``[target, comp_<name>..., t, t2]``.

    ``components`` holds :class:`PeriodicComponent` results (insignificant
    ones are skipped) or ``(name, median_vector)`` pairs. Baseline mode
    ignores them. Constant columns are dropped with a warning.
    """
    series = masked.observed if isinstance(masked, MaskedSeries) else masked
    if isinstance(series, TimeSeries):
        target, start = np.array(series.values, dtype=float), series.start_date
    else:
        target, start = np.asarray(series, dtype=float).reshape(-1), None
    n = target.size
    notes: list[str] = []
    cols = [target]
    names = ["target"]

    if mode == ENHANCED:
        meds = _median_columns(components)
        if not meds:
            notes.append("no significant periodic component; enhanced mode falls back to baseline columns")
        for name, mv in meds:
            cols.append(tile_median(mv, n))
            names.append(f"comp_{name}")
    elif mode != BASELINE:
        raise ConfigError(f"unknown mode {mode!r}")

    t = np.arange(n) / n
    cols += [t, t**2]
    names += ["t", "t2"]

    keep_cols, keep_names = [cols[0]], [names[0]]
    for c, name in zip(cols[1:], names[1:]):
        if np.ptp(c) <= 1e-12 * max(1.0, float(np.abs(c).max())):
            notes.append(f"column {name} is constant and was dropped")
            continue
        keep_cols.append(c)
        keep_names.append(name)
    return DesignMatrix(np.column_stack(keep_cols), keep_names, notes, start)


def _check_target_only(X: np.ndarray):
    if np.isnan(X[:, 1:]).any():
        raise ConfigError("only the target (first) column may contain missing cells")


def _regression(mu: np.ndarray, sigma: np.ndarray):
    """Coefficients and residual variance of column 0 on the rest."""
    s_oo = sigma[1:, 1:]
    s_mo = sigma[0, 1:]
    if s_oo.size == 0:
        return np.zeros(0), float(sigma[0, 0])
    try:
        chol = np.linalg.cholesky(s_oo)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError("singular covariance") from None
    beta = np.linalg.solve(chol.T, np.linalg.solve(chol, s_mo))
    return beta, float(sigma[0, 0] - s_mo @ beta)


def _loglik(Z: np.ndarray, miss: np.ndarray, mu: np.ndarray, sigma: np.ndarray, ridge: float) -> float:
    """Observed-data log likelihood plus the ridge penalty ``-n/2 * ridge * tr(inv(sigma))``."""
    n, p = Z.shape
    total = 0.0
    try:
        inv = np.linalg.inv(sigma)
        _, logdet = np.linalg.slogdet(sigma)
        full = Z[~miss] - mu
        total += -0.5 * (full.shape[0] * (p * _LOG2PI + logdet) + np.einsum("ij,jk,ik->", full, inv, full))
        if miss.any() and p > 1:
            s_oo = sigma[1:, 1:]
            inv_o = np.linalg.inv(s_oo)
            _, logdet_o = np.linalg.slogdet(s_oo)
            part = Z[miss, 1:] - mu[1:]
            total += -0.5 * (
                part.shape[0] * ((p - 1) * _LOG2PI + logdet_o) + np.einsum("ij,jk,ik->", part, inv_o, part)
            )
    except np.linalg.LinAlgError:
        return float("-inf")
    return float(total - 0.5 * n * ridge * np.trace(inv))


def _start_values(Z: np.ndarray, miss: np.ndarray):
    cc = ~miss
    if cc.sum() >= 2:
        mu = Z[cc].mean(axis=0)
        d = Z[cc] - mu
        return mu, d.T @ d / cc.sum()
    # available-case fallback; the target has too few observed rows to
    # estimate its covariances, so they start at zero
    mu = np.nanmean(Z, axis=0)
    mu[0] = 0.0 if np.isnan(mu[0]) else mu[0]
    rest = Z[:, 1:] - mu[1:]
    sigma = np.zeros((Z.shape[1], Z.shape[1]))
    sigma[1:, 1:] = rest.T @ rest / Z.shape[0]
    sigma[0, 0] = 1.0
    return mu, sigma


def em_fit(dm, cfg: EmConfig = EmConfig()) -> EmFit:
    """Maximum-likelihood mean and covariance by EM with missing target cells.

    Iterates on column-standardised data; convergence is declared when the
    largest absolute change in any standardised mean or covariance entry
    falls below ``cfg.tol``. ``cfg.ridge`` is added to the standardised
    covariance diagonal at every M-step, which makes each step a penalised
    maximisation, so the reported (penalised) log likelihood never decreases.

    Raises
    ------
    SingularCovarianceError
        If the covariate block cannot be inverted.
    """
    X = dm.data if isinstance(dm, DesignMatrix) else np.asarray(dm, dtype=float)
    _check_target_only(X)
    n, p = X.shape
    miss = np.isnan(X[:, 0])
    if (~miss).sum() < 1:
        raise SingularCovarianceError("target column has no observed value")

    loc = np.nanmean(X, axis=0)
    scale = np.nanstd(X, axis=0)
    scale[~(scale > 0)] = 1.0
    Z = (X - loc) / scale
    ridge_mat = cfg.ridge * np.eye(p)
    # Jacobian of the standardisation, so the trace is on the data scale
    jac = -(np.log(scale[0]) * (~miss).sum() + np.log(scale[1:]).sum() * n)

    mu, sigma = _start_values(Z, miss)
    sigma = sigma + ridge_mat
    trace = [_loglik(Z, miss, mu, sigma, cfg.ridge) + jac]
    n_miss = int(miss.sum())
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        Zhat = Z.copy()
        extra = np.zeros((p, p))
        if n_miss:
            beta, cvar = _regression(mu, sigma)
            Zhat[miss, 0] = mu[0] + (Z[miss, 1:] - mu[1:]) @ beta
            extra[0, 0] = n_miss * max(cvar, 0.0)
        mu_new = Zhat.mean(axis=0)
        d = Zhat - mu_new
        sigma_new = (d.T @ d + extra) / n + ridge_mat
        sigma_new = 0.5 * (sigma_new + sigma_new.T)
        delta = max(np.abs(mu_new - mu).max(), np.abs(sigma_new - sigma).max())
        mu, sigma = mu_new, sigma_new
        trace.append(_loglik(Z, miss, mu, sigma, cfg.ridge) + jac)
        if delta < cfg.tol:
            converged = True
            break

    # validates the final covariate block
    _regression(mu, sigma)
    mu_x = loc + scale * mu
    sigma_x = sigma * np.outer(scale, scale)
    return EmFit(mu_x, 0.5 * (sigma_x + sigma_x.T), it, trace, converged)


def _conditional(row: np.ndarray, fit: EmFit):
    m = np.isnan(row)
    o = ~m
    s_oo = fit.sigma[np.ix_(o, o)]
    s_mo = fit.sigma[np.ix_(m, o)]
    if o.any():
        try:
            coef = np.linalg.solve(s_oo, s_mo.T).T
        except np.linalg.LinAlgError:
            raise SingularCovarianceError("singular covariance") from None
        mean = fit.mu[m] + coef @ (row[o] - fit.mu[o])
        cov = fit.sigma[np.ix_(m, m)] - coef @ s_mo.T
    else:
        mean, cov = fit.mu[m].copy(), fit.sigma[np.ix_(m, m)].copy()
    return m, mean, 0.5 * (cov + cov.T)


def _clamp_variance(var):
    var = np.asarray(var, dtype=float)
    if (var < -1e-10).any():
        raise NumericalError(f"negative conditional variance {var.min():.3g}")
    return np.maximum(var, 0.0)


def conditional_draw(row, fit: EmFit, rng: Optional[np.random.Generator] = None, deterministic: bool = False):
    """Fill the NaN entries of ``row`` from their conditional normal given the rest."""
    row = np.asarray(row, dtype=float)
    out = row.copy()
    if not np.isnan(row).any():
        return out
    m, mean, cov = _conditional(row, fit)
    if deterministic:
        out[m] = mean
        return out
    if rng is None:
        rng = np.random.default_rng()
    if mean.size == 1:
        out[m] = mean + np.sqrt(_clamp_variance(cov[0, 0])) * rng.standard_normal()
        return out
    w, v = np.linalg.eigh(cov)
    w = _clamp_variance(w)
    out[m] = mean + v @ (np.sqrt(w) * rng.standard_normal(w.size))
    return out


def conditional_moments(X: np.ndarray, fit: EmFit):
    """Conditional mean and variance of the target at every missing row."""
    X = np.asarray(X, dtype=float)
    miss = np.isnan(X[:, 0])
    beta, cvar = _regression(fit.mu, fit.sigma)
    mean = fit.mu[0] + (X[miss, 1:] - fit.mu[1:]) @ beta
    return mean, np.full(mean.size, float(_clamp_variance(cvar)))


def _fit_rng(seed: int, j: int, attempt: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0, j, attempt)))


def _draw_rng(seed: int, j: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(1, j)))


_RETRIES = 3


def _fit_replicate(X: np.ndarray, cfg: ImputationConfig, j: int) -> EmFit:
    n = X.shape[0]
    err: Optional[Exception] = None
    for attempt in range(_RETRIES + 1):
        rng = _fit_rng(cfg.seed, j, attempt)
        idx = rng.integers(0, n, size=n) if cfg.resample else np.arange(n)
        try:
            return em_fit(X[idx], cfg.em)
        except NumericalError as exc:
            err = exc
    raise ImputationError(f"imputation replicate {j} failed after {_RETRIES} retries: {err}")


def _impute_from_fits(X: np.ndarray, fits: list[EmFit], cfg: ImputationConfig, mode: str) -> CompletedSet:
    miss = np.isnan(X[:, 0])
    m = len(fits)

    def one(j: int):
        mean, var = conditional_moments(X, fits[j])
        if cfg.deterministic:
            draw = mean
        else:
            draw = mean + np.sqrt(var) * _draw_rng(cfg.seed, j).standard_normal(mean.size)
        col = X[:, 0].copy()
        col[miss] = draw
        return col, var

    results = ordered_map(one, range(m))
    completions = np.stack([r[0] for r in results])
    cond_var = np.stack([r[1] for r in results])
    combined = completions.mean(axis=0)
    combined[~miss] = X[~miss, 0]
    within = cond_var.mean(axis=0)
    between = completions[:, miss].var(axis=0, ddof=1) if m > 1 else np.zeros(int(miss.sum()))
    total = within + (1.0 + 1.0 / m) * between
    notes = [f"imputation {j}: EM stopped at max_iter without converging" for j, f in enumerate(fits) if not f.converged]
    return CompletedSet(completions, fits, combined, miss, within, between, total, mode, notes)


def bootstrap_em_impute(dm, cfg: ImputationConfig = ImputationConfig()) -> CompletedSet:
    """Multiple imputation: ``m`` row-bootstraps, EM on each, conditional draws.

    The combined series is the per-cell mean of the completions. ``within``
    averages the conditional variances, ``between`` is the sample variance of
    the draws, and ``total = within + (1 + 1/m) * between``.
    """
    X = dm.data if isinstance(dm, DesignMatrix) else np.asarray(dm, dtype=float)
    _check_target_only(X)
    fits = ordered_map(lambda j: _fit_replicate(X, cfg, j), range(cfg.m_imputations))
    out = _impute_from_fits(X, fits, cfg, cfg.mode)
    if isinstance(dm, DesignMatrix):
        out.warnings = list(dm.warnings) + out.warnings
    return out


class BootstrapEMImputer(TransformerMixin, BaseEstimator):
    """Scikit-learn wrapper around :func:`bootstrap_em_impute`.

    ``X[:, 0]`` is the target (NaN where missing); the remaining columns are
    complete covariates. ``transform`` returns ``X`` with the target filled by
    the combined (mean) imputation.

    Parameters
    ----------
    n_imputations : int, default=5
    tol : float, default=1e-4
    max_iter : int, default=500
    ridge : float, default=1e-4
    random_state : int, default=0
    deterministic : bool, default=False
        Fill with conditional means instead of random draws.
    resample : bool, default=True
        Bootstrap rows before each EM fit.
    """

    def __init__(
        self,
        n_imputations=5,
        tol=1e-4,
        max_iter=500,
        ridge=1e-4,
        random_state=0,
        deterministic=False,
        resample=True,
    ):
        self.n_imputations = n_imputations
        self.tol = tol
        self.max_iter = max_iter
        self.ridge = ridge
        self.random_state = random_state
        self.deterministic = deterministic
        self.resample = resample

    def _config(self) -> ImputationConfig:
        return ImputationConfig(
            m_imputations=self.n_imputations,
            seed=self.random_state,
            em=EmConfig(self.tol, self.max_iter, self.ridge),
            deterministic=self.deterministic,
            resample=self.resample,
        )

    def fit(self, X, y=None):
        X = check_array(X, ensure_all_finite="allow-nan")
        _check_target_only(X)
        cfg = self._config()
        self.fits_ = ordered_map(lambda j: _fit_replicate(X, cfg, j), range(cfg.m_imputations))
        self.n_features_in_ = X.shape[1]
        return self

    def completed_set(self, X) -> CompletedSet:
        check_is_fitted(self, "fits_")
        X = check_array(X, ensure_all_finite="allow-nan")
        _check_target_only(X)
        return _impute_from_fits(X, self.fits_, self._config(), ENHANCED)

    def transform(self, X):
        X = check_array(X, ensure_all_finite="allow-nan", copy=True)
        X[:, 0] = self.completed_set(X).combined
        return X

    def transform_multiple(self, X) -> list[np.ndarray]:
        """The ``m`` individual completions of ``X``."""
        X = check_array(X, ensure_all_finite="allow-nan")
        out = []
        for col in self.completed_set(X).completions:
            Xj = X.copy()
            Xj[:, 0] = col
            out.append(Xj)
        return out
