import datetime as dt

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import Pipeline

from periodica.exceptions import ConfigError, ImputationError, NumericalError, SingularCovarianceError
from periodica.imputer import (
    BootstrapEMImputer,
    DesignMatrix,
    EmConfig,
    EmFit,
    ImputationConfig,
    bootstrap_em_impute,
    build_design_matrix,
    conditional_draw,
    conditional_moments,
    em_fit,
)
from periodica.missingness import MarSpec, apply_mar_mask
from periodica.series import TimeSeries
from periodica.vbpbb import MedianVector

EXACT = EmConfig(tol=1e-13, max_iter=5000, ridge=0.0)


def bivariate(n, rho, seed, miss_frac=0.2):
    rng = np.random.default_rng(seed)
    cov = np.array([[1.0, rho], [rho, 1.0]]) * np.array([[4.0, 2.0], [2.0, 1.0]])
    mu = np.array([3.0, -1.0])
    X = rng.multivariate_normal(mu, cov, size=n)
    X[rng.random(n) < miss_frac, 0] = np.nan
    return X, mu, cov


def regression_oracle(X):
    """Complete-case OLS of the target on the covariates, applied to missing rows."""
    miss = np.isnan(X[:, 0])
    A = np.column_stack([np.ones(n := X.shape[0]), X[:, 1:]])
    coef, *_ = np.linalg.lstsq(A[~miss], X[~miss, 0], rcond=None)
    out = X[:, 0].copy()
    out[miss] = A[miss] @ coef
    return out


class TestBuildDesignMatrix:
    def masked(self, n=60):
        ts = TimeSeries(dt.date(2014, 1, 1), np.random.default_rng(0).normal(size=n))
        return apply_mar_mask(ts, MarSpec(0.2, 0.5, 1))

    def test_enhanced_columns(self):
        comps = [("yearly", MedianVector(np.arange(5.0))), ("weekly", MedianVector(np.arange(7.0)))]
        dm = build_design_matrix(self.masked(), comps, "enhanced")
        assert dm.columns == ["target", "comp_yearly", "comp_weekly", "t", "t2"]
        assert dm.data.shape == (60, 5)

    def test_baseline_columns(self):
        dm = build_design_matrix(self.masked(), [("weekly", np.arange(7.0))], "baseline")
        assert dm.columns == ["target", "t", "t2"]

    def test_constant_component_dropped(self):
        dm = build_design_matrix(self.masked(), [("flat", np.full(7, 2.0))], "enhanced")
        assert "comp_flat" not in dm.columns
        assert any("constant" in w for w in dm.warnings)

    def test_no_components_falls_back(self):
        dm = build_design_matrix(self.masked(), [], "enhanced")
        assert dm.columns == ["target", "t", "t2"]
        assert any("falls back" in w for w in dm.warnings)

    def test_trend_values(self):
        dm = build_design_matrix(self.masked(10), [], "baseline")
        np.testing.assert_allclose(dm.data[:, 1], np.arange(10) / 10)
        np.testing.assert_allclose(dm.data[:, 2], (np.arange(10) / 10) ** 2)

    def test_covariate_missing_rejected(self):
        with pytest.raises(ConfigError):
            DesignMatrix(np.array([[1.0, np.nan], [2.0, 3.0]]), ["target", "x"])


class TestEmFit:
    def test_complete_data_is_mle(self):
        X = np.random.default_rng(1).normal(size=(100, 3)) @ np.array([[1, 0.5, 0], [0, 1, 0.3], [0, 0, 1]])
        fit = em_fit(X, EmConfig(ridge=0.0))
        assert fit.iterations == 1 and fit.converged
        np.testing.assert_allclose(fit.mu, X.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(fit.sigma, np.cov(X.T, bias=True), atol=1e-12)

    def test_bivariate_recovery(self):
        n = 2000
        X, mu, cov = bivariate(n, 0.8, 7)
        fit = em_fit(X)
        se = np.sqrt(np.diag(cov) / (0.8 * n))
        assert np.all(np.abs(fit.mu - mu) < 3 * se)
        np.testing.assert_allclose(fit.sigma, cov, rtol=0.1)

    @pytest.mark.parametrize("ridge", [0.0, 1e-4, 0.05])
    def test_loglik_monotone(self, ridge):
        X, _, _ = bivariate(300, 0.6, 3, miss_frac=0.5)
        X = np.column_stack([X, np.random.default_rng(4).normal(size=300)])
        fit = em_fit(X, EmConfig(tol=1e-10, max_iter=200, ridge=ridge))
        assert np.all(np.diff(fit.loglik) >= -1e-8)
        assert len(fit.loglik) == fit.iterations + 1

    def test_symmetric(self):
        X, _, _ = bivariate(200, 0.5, 2)
        fit = em_fit(X)
        assert np.max(np.abs(fit.sigma - fit.sigma.T)) <= 1e-10

    def test_non_converged_flag(self):
        X, _, _ = bivariate(200, 0.5, 2, miss_frac=0.4)
        fit = em_fit(X, EmConfig(tol=1e-14, max_iter=1, ridge=0.0))
        assert not fit.converged and fit.iterations == 1

    def test_singular(self):
        rng = np.random.default_rng(0)
        z = rng.normal(size=50)
        X = np.column_stack([rng.normal(size=50), z, z])
        X[:5, 0] = np.nan
        with pytest.raises(SingularCovarianceError):
            em_fit(X, EmConfig(ridge=0.0))

    def test_ridge_rescues_collinearity(self):
        rng = np.random.default_rng(0)
        z = rng.normal(size=50)
        X = np.column_stack([rng.normal(size=50), z, z])
        X[:5, 0] = np.nan
        assert em_fit(X, EmConfig(ridge=1e-3)).converged

    def test_fixed_point_is_regression(self):
        X, _, _ = bivariate(50, 0.7, 11, miss_frac=0.3)
        fit = em_fit(X, EXACT)
        mean, _ = conditional_moments(X, fit)
        miss = np.isnan(X[:, 0])
        np.testing.assert_allclose(mean, regression_oracle(X)[miss], atol=1e-8)


class TestConditionalDraw:
    fit2 = EmFit(np.array([1.0, 2.0]), np.array([[4.0, 1.2], [1.2, 0.9]]), 1, [0.0], True)

    def test_observed_row_unchanged(self):
        row = np.array([0.3, 0.1])
        assert np.array_equal(conditional_draw(row, self.fit2, np.random.default_rng(0)), row)

    def test_hand_formula(self):
        out = conditional_draw(np.array([np.nan, 3.5]), self.fit2, deterministic=True)
        assert out[0] == pytest.approx(1.0 + 1.2 / 0.9 * (3.5 - 2.0), abs=1e-12)
        assert out[1] == 3.5

    def test_diagonal_gives_marginal(self):
        fit = EmFit(np.array([5.0, 0.0]), np.diag([2.0, 1.0]), 1, [0.0], True)
        rng = np.random.default_rng(3)
        draws = np.array([conditional_draw(np.array([np.nan, 9.0]), fit, rng)[0] for _ in range(4000)])
        assert abs(draws.mean() - 5.0) < 3 * np.sqrt(2.0 / 4000)
        assert abs(draws.var() - 2.0) < 0.15
        assert conditional_draw(np.array([np.nan, 9.0]), fit, deterministic=True)[0] == 5.0

    def test_negative_variance(self):
        bad = EmFit(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]), 1, [0.0], True)
        with pytest.raises(NumericalError):
            conditional_draw(np.array([np.nan, 1.0]), bad, np.random.default_rng(0))

    def test_multiple_missing(self):
        fit = EmFit(np.zeros(3), np.eye(3) + 0.5, 1, [0.0], True)
        out = conditional_draw(np.array([np.nan, np.nan, 1.0]), fit, deterministic=True)
        np.testing.assert_allclose(out[:2], 0.5 / 1.5)


class TestBootstrapEmImpute:
    def data(self, n=200, seed=0):
        X, _, _ = bivariate(n, 0.8, seed)
        return np.column_stack([X, np.linspace(0, 1, n)])

    def test_single_imputation(self):
        cs = bootstrap_em_impute(self.data(), ImputationConfig(m_imputations=1, seed=2))
        assert np.array_equal(cs.combined, cs.completions[0])
        assert np.all(cs.between == 0)

    def test_complete_deterministic(self):
        X = self.data()
        X[:, 0] = np.nan_to_num(X[:, 0], nan=1.0)
        cs = bootstrap_em_impute(X, ImputationConfig(3, 0, deterministic=True))
        assert all(np.array_equal(c, X[:, 0]) for c in cs.completions)

    def test_rubin_invariants_and_observed_untouched(self):
        X = self.data()
        cs = bootstrap_em_impute(X, ImputationConfig(5, 4))
        obs = ~np.isnan(X[:, 0])
        assert np.array_equal(cs.combined[obs], X[obs, 0])
        assert np.all(cs.completions[:, obs] == X[obs, 0])
        assert np.all(cs.within >= 0)
        assert np.all(cs.total >= cs.within)
        assert np.all(cs.total >= (1 + 1 / 5) * cs.between - 1e-12)
        np.testing.assert_allclose(cs.between, cs.completions[:, ~obs].var(axis=0, ddof=1))

    def test_bit_identical(self, monkeypatch):
        X = self.data()
        monkeypatch.setenv("PERIODICA_THREADS", "1")
        a = bootstrap_em_impute(X, ImputationConfig(4, 9))
        monkeypatch.setenv("PERIODICA_THREADS", "4")
        b = bootstrap_em_impute(X, ImputationConfig(4, 9))
        assert np.array_equal(a.completions, b.completions)
        assert np.array_equal(a.total, b.total)

    def test_seed_matters(self):
        X = self.data()
        a = bootstrap_em_impute(X, ImputationConfig(2, 1))
        b = bootstrap_em_impute(X, ImputationConfig(2, 2))
        assert not np.array_equal(a.combined, b.combined)

    def test_degenerate_matches_regression_oracle(self):
        X = self.data(50, 5)
        cfg = ImputationConfig(1, 0, EXACT, deterministic=True, resample=False)
        cs = bootstrap_em_impute(X, cfg)
        np.testing.assert_allclose(cs.combined, regression_oracle(X), atol=1e-8)

    def test_replicate_failure_reports_index(self):
        X = self.data(30)
        X[:, 0] = np.nan
        with pytest.raises(ImputationError, match="replicate 0"):
            bootstrap_em_impute(X, ImputationConfig(2, 0))

    def test_csv_exports(self):
        X = self.data(20)
        cs = bootstrap_em_impute(X, ImputationConfig(2, 0))
        lines = cs.combined_csv(dt.date(2014, 1, 1)).splitlines()
        assert lines[0] == "date,value,was_missing,W,Bv,T"
        assert len(lines) == 21
        for line, miss in zip(lines[1:], cs.missing):
            cells = line.split(",")
            assert (cells[3] != "") == bool(miss)
        assert cs.imputation_csv(1, dt.date(2014, 1, 1)).splitlines()[0] == "date,value,was_missing"


class TestEstimator:
    def test_params_clone(self):
        est = BootstrapEMImputer(n_imputations=3, ridge=0.01)
        assert clone(est).get_params()["ridge"] == 0.01

    def test_fit_transform_fills_target(self):
        X, _, _ = bivariate(150, 0.8, 1)
        Y = BootstrapEMImputer(random_state=1).fit_transform(X)
        assert not np.isnan(Y).any()
        obs = ~np.isnan(X[:, 0])
        assert np.array_equal(Y[obs], X[obs])

    def test_matches_functional(self):
        X, _, _ = bivariate(150, 0.8, 1)
        Y = BootstrapEMImputer(n_imputations=3, random_state=5).fit_transform(X)
        cs = bootstrap_em_impute(X, ImputationConfig(3, 5))
        np.testing.assert_array_equal(Y[:, 0], cs.combined)

    def test_transform_multiple(self):
        X, _, _ = bivariate(80, 0.8, 1)
        outs = BootstrapEMImputer(n_imputations=4).fit(X).transform_multiple(X)
        assert len(outs) == 4 and all(o.shape == X.shape for o in outs)

    def test_in_pipeline(self):
        X, _, _ = bivariate(80, 0.8, 1)
        pipe = Pipeline([("impute", BootstrapEMImputer(n_imputations=2))])
        assert pipe.fit_transform(X).shape == X.shape
