import json
import math

import numpy as np
import pytest

from floodgate import (CustomRegression, CvConfig, Dataset,
                       LinearWorkingRegression, fit_lasso, fit_logistic,
                       fit_ols, fit_ridge, ols_oracle_lcb,
                       regression_from_json)
from floodgate.errors import (DegenerateLabelsError, ShapeError,
                              SingularDesignError, SizeError, ValidationError)
from floodgate.regression import LASSO, LOGIT_L1, LOGIT_L2, OLS, RIDGE, fold_assignments


def _linear_data(n=300, beta_x=1.5, beta_z=(0.5, -1.0), noise=0.5, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 1))
    z = rng.standard_normal((n, len(beta_z)))
    y = 0.7 + beta_x * x[:, 0] + z @ np.array(beta_z)
    y = y + noise * rng.standard_normal(n)
    return Dataset(y, x, z)


class TestLinearWorkingRegression:
    def test_identity_predict(self):
        mu = LinearWorkingRegression(OLS, 1.0, np.array([2.0]),
                                     np.array([0.5, -0.5]))
        x = np.array([[1.0], [0.0]])
        z = np.array([[2.0, 0.0], [0.0, 2.0]])
        assert np.allclose(mu.predict(x, z), [4.0, 0.0])

    def test_binary_link_bounds_and_value(self):
        mu = LinearWorkingRegression(LOGIT_L1, 0.0, np.array([1.0]),
                                     np.empty(0), link="binary_mean")
        vals = mu.predict(np.array([[0.0], [100.0], [-100.0], [1.0]]),
                          np.empty((4, 0)))
        assert vals[0] == pytest.approx(0.0)
        assert vals[1] == pytest.approx(1.0)
        assert vals[2] == pytest.approx(-1.0)
        # 2 expit(1) - 1
        assert vals[3] == pytest.approx(2.0 / (1.0 + math.exp(-1.0)) - 1.0)

    def test_focal_coef_hidden_behind_nonlinear_link(self):
        mu = LinearWorkingRegression(LOGIT_L1, 0.0, np.array([1.0]),
                                     np.empty(0), link="binary_mean")
        assert mu.linear_focal_coef is None

    def test_column_mismatch(self):
        mu = LinearWorkingRegression(OLS, 0.0, np.array([1.0, 2.0]), np.empty(0))
        with pytest.raises(ShapeError):
            mu.predict(np.zeros((3, 1)), np.empty((3, 0)))

    def test_unknown_link(self):
        with pytest.raises(ValidationError):
            LinearWorkingRegression(OLS, 0.0, np.array([1.0]), np.empty(0),
                                    link="probit")

    def test_json_round_trip(self):
        mu = LinearWorkingRegression(RIDGE, 0.25, np.array([1.0]),
                                     np.array([2.0, 3.0]))
        back = regression_from_json(mu.to_json())
        assert back == mu
        payload = json.loads(mu.to_json())
        assert payload["kind"] == RIDGE


class TestCustomRegression:
    def test_wraps_callable(self):
        mu = CustomRegression(lambda x, z: x[:, 0] ** 2 + z.sum(axis=1))
        out = mu.predict(np.array([[2.0], [3.0]]), np.ones((2, 2)))
        assert np.allclose(out, [6.0, 11.0])
        assert mu.linear_focal_coef is None

    def test_not_serializable(self):
        with pytest.raises(ValidationError):
            CustomRegression(lambda x, z: x[:, 0]).to_json()


class TestFoldAssignments:
    def test_balanced_and_deterministic(self):
        f = fold_assignments(23, 5, seed=4)
        counts = np.bincount(f, minlength=5)
        assert counts.max() - counts.min() <= 1
        assert np.array_equal(f, fold_assignments(23, 5, seed=4))
        assert not np.array_equal(f, fold_assignments(23, 5, seed=5))


class TestFitOls:
    def test_exact_recovery_noiseless(self):
        data = _linear_data(noise=0.0)
        fit = fit_ols(data)
        assert fit.intercept == pytest.approx(0.7, abs=1e-10)
        assert fit.x_coef[0] == pytest.approx(1.5, abs=1e-10)
        assert np.allclose(fit.z_coef, [0.5, -1.0], atol=1e-10)

    def test_standard_errors_match_classical_formula(self):
        data = _linear_data(n=80, seed=2)
        fit = fit_ols(data)
        design = np.hstack([np.ones((80, 1)), data.x, data.z])
        beta = np.linalg.lstsq(design, data.y, rcond=None)[0]
        resid = data.y - design @ beta
        sigma2 = resid @ resid / (80 - 4)
        cov = sigma2 * np.linalg.inv(design.T @ design)
        assert np.allclose(fit.diagnostics["coef_se"],
                           np.sqrt(np.diag(cov))[1:], atol=1e-10)
        assert fit.diagnostics["intercept_se"] == pytest.approx(
            math.sqrt(cov[0, 0]), abs=1e-10)

    def test_rank_deficient(self):
        rng = np.random.default_rng(0)
        z = rng.standard_normal((50, 2))
        x = z[:, [0]] + z[:, [1]]
        with pytest.raises(SingularDesignError):
            fit_ols(Dataset(rng.standard_normal(50), x, z))

    def test_too_few_rows(self):
        with pytest.raises(SizeError):
            fit_ols(Dataset(np.arange(3.0), np.eye(3)[:, :2], np.eye(3)[:, 2:]))


class TestOlsOracleLcb:
    def test_hand_computation(self):
        fit = LinearWorkingRegression(
            OLS, 0.0, np.array([2.0]), np.empty(0),
            diagnostics={"coef_se": np.array([0.5])})
        z05 = 1.6448536269514722
        got = ols_oracle_lcb(fit, 0.05, sign_of_beta=1, ev_cond_var=4.0)
        assert got == pytest.approx((2.0 - z05 * 0.5) * 2.0, abs=1e-9)

    def test_negative_sign_uses_upper_end(self):
        fit = LinearWorkingRegression(
            OLS, 0.0, np.array([-2.0]), np.empty(0),
            diagnostics={"coef_se": np.array([0.5])})
        z05 = 1.6448536269514722
        got = ols_oracle_lcb(fit, 0.05, sign_of_beta=-1, ev_cond_var=1.0)
        assert got == pytest.approx(2.0 - z05 * 0.5, abs=1e-9)

    def test_validation(self):
        fit = LinearWorkingRegression(OLS, 0.0, np.array([1.0]), np.empty(0),
                                      diagnostics={"coef_se": np.array([0.5])})
        with pytest.raises(ValidationError):
            ols_oracle_lcb(fit, 0.05, sign_of_beta=0, ev_cond_var=1.0)
        with pytest.raises(ValidationError):
            ols_oracle_lcb(fit, 0.05, sign_of_beta=1, ev_cond_var=-1.0)


def _lasso_kkt_violation(data, fit, lam):
    """Max violation of the subgradient conditions of the standardized
    L1 problem at the returned solution (an independent optimality check)."""
    w = np.hstack([data.x, data.z])
    means = w.mean(axis=0)
    sds = w.std(axis=0)
    ws = (w - means) / sds
    yc = data.y - data.y.mean()
    beta_std = np.concatenate([fit.x_coef, fit.z_coef]) * sds
    grad = ws.T @ (ws @ beta_std - yc) / len(yc)
    worst = 0.0
    for j in range(len(beta_std)):
        if beta_std[j] > 0:
            worst = max(worst, abs(grad[j] + lam))
        elif beta_std[j] < 0:
            worst = max(worst, abs(grad[j] - lam))
        else:
            worst = max(worst, max(abs(grad[j]) - lam, 0.0))
    return worst


class TestFitLasso:
    def test_single_predictor_soft_threshold(self):
        # One standardized predictor: the solution at penalty lam is
        # sign(c) max(|c| - lam, 0) with c the standardized covariance.
        rng = np.random.default_rng(0)
        x = rng.standard_normal(400)
        y = 2.0 * x
        data = Dataset(y, x[:, None], np.empty((400, 0)))
        lam = 0.3
        cv = CvConfig(folds=2, lambda_grid=(lam,))
        fit = fit_lasso(data, cv, seed=0)
        c = np.mean((x - x.mean()) / x.std() * (y - y.mean()))
        expected = (c - lam) / x.std()
        assert fit.x_coef[0] == pytest.approx(expected, abs=1e-6)

    def test_kkt_optimality(self):
        data = _linear_data(n=200, seed=5)
        fit = fit_lasso(data, CvConfig(folds=5), seed=1)
        assert _lasso_kkt_violation(data, fit, fit.diagnostics["lambda"]) < 1e-5

    def test_sparse_support_recovery(self):
        rng = np.random.default_rng(7)
        n, p = 300, 20
        w = rng.standard_normal((n, p))
        beta = np.zeros(p)
        beta[:3] = [2.0, -1.5, 1.0]
        y = w @ beta + 0.3 * rng.standard_normal(n)
        data = Dataset(y, w[:, :1], w[:, 1:])
        fit = fit_lasso(data, CvConfig(folds=5), seed=2)
        coef = np.concatenate([fit.x_coef, fit.z_coef])
        assert np.allclose(coef[:3], beta[:3], atol=0.2)
        assert np.max(np.abs(coef[3:])) < 0.15

    def test_deterministic(self):
        data = _linear_data(n=150, seed=9)
        a = fit_lasso(data, CvConfig(folds=5), seed=3)
        b = fit_lasso(data, CvConfig(folds=5), seed=3)
        assert a == b

    def test_kind_tag(self):
        fit = fit_lasso(_linear_data(n=100), CvConfig(folds=4), seed=0)
        assert fit.kind == LASSO


class TestFitRidge:
    def test_single_lambda_closed_form(self):
        data = _linear_data(n=250, seed=11)
        lam = 0.7
        fit = fit_ridge(data, CvConfig(folds=2, lambda_grid=(lam,)), seed=0)
        w = np.hstack([data.x, data.z])
        ws = (w - w.mean(axis=0)) / w.std(axis=0)
        yc = data.y - data.y.mean()
        n = len(yc)
        beta_std = np.linalg.solve(ws.T @ ws / n + lam * np.eye(3),
                                   ws.T @ yc / n)
        expected = beta_std / w.std(axis=0)
        assert np.allclose(np.concatenate([fit.x_coef, fit.z_coef]),
                           expected, atol=1e-10)

    def test_orthonormal_shrinkage_factor(self):
        # For standardized orthogonal columns ridge shrinks the OLS
        # solution by exactly 1 / (1 + lambda).
        rng = np.random.default_rng(1)
        raw = rng.standard_normal((500, 2))
        raw -= raw.mean(axis=0)           # columns orthogonal to the 1-vector
        q = np.linalg.qr(raw)[0] * math.sqrt(500)
        y = 3.0 * q[:, 0] - 1.0 * q[:, 1]
        data = Dataset(y, q[:, :1], q[:, 1:])
        lam = 0.5
        fit = fit_ridge(data, CvConfig(folds=2, lambda_grid=(lam,)), seed=0)
        ols = fit_ols(data)
        shrink = np.concatenate([fit.x_coef, fit.z_coef]) / np.concatenate(
            [ols.x_coef, ols.z_coef])
        assert np.allclose(shrink, 1.0 / (1.0 + lam), atol=1e-6)

    def test_cv_picks_small_penalty_for_clean_signal(self):
        data = _linear_data(n=400, noise=0.05, seed=13)
        fit = fit_ridge(data, CvConfig(folds=5), seed=0)
        grid = fit.diagnostics["lambda_grid"]
        assert fit.diagnostics["lambda"] < grid[0] / 10


class TestFitLogistic:
    def _logit_data(self, n=600, seed=0):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n, 1))
        z = rng.standard_normal((n, 2))
        f = 1.2 * x[:, 0] - 0.8 * z[:, 0]
        prob = 1.0 / (1.0 + np.exp(-f))
        y = np.where(rng.random(n) < prob, 1.0, -1.0)
        return Dataset(y, x, z)

    def test_label_validation(self):
        data = _linear_data(n=50)
        with pytest.raises(DegenerateLabelsError):
            fit_logistic(data, "L1", CvConfig(folds=2))
        ones = Dataset(np.ones(50), data.x, data.z)
        with pytest.raises(DegenerateLabelsError):
            fit_logistic(ones, "L1", CvConfig(folds=2))
        with pytest.raises(ValidationError):
            fit_logistic(self._logit_data(), "elastic", CvConfig(folds=2))

    def test_coefficient_recovery(self):
        data = self._logit_data(n=4000, seed=3)
        fit = fit_logistic(data, "L2",
                           CvConfig(folds=4, num_lambdas=10,
                                    lambda_min_ratio=1e-4), seed=0)
        assert fit.kind == LOGIT_L2
        assert fit.x_coef[0] == pytest.approx(1.2, abs=0.2)
        assert fit.z_coef[0] == pytest.approx(-0.8, abs=0.2)
        assert abs(fit.z_coef[1]) < 0.1

    def test_l1_kkt_optimality(self):
        data = self._logit_data(n=500, seed=4)
        fit = fit_logistic(data, "L1", CvConfig(folds=4, num_lambdas=15),
                           seed=0)
        lam = fit.diagnostics["lambda"]
        w = np.hstack([data.x, data.z])
        means, sds = w.mean(axis=0), w.std(axis=0)
        ws = (w - means) / sds
        design = np.hstack([np.ones((len(ws), 1)), ws])
        coef_std = np.concatenate([fit.x_coef, fit.z_coef]) * sds
        icept_std = fit.intercept + means @ np.concatenate(
            [fit.x_coef, fit.z_coef])
        coef = np.concatenate([[icept_std], coef_std])
        yf = data.y * (design @ coef)
        sig = 1.0 / (1.0 + np.exp(yf))
        grad = -(design.T @ (data.y * sig)) / len(data.y)
        assert abs(grad[0]) < 1e-4
        for j in range(1, len(coef)):
            if coef[j] != 0:
                assert abs(grad[j] + np.sign(coef[j]) * lam) < 1e-4
            else:
                assert abs(grad[j]) <= lam + 1e-4

    def test_predictions_on_mean_scale(self):
        fit = fit_logistic(self._logit_data(n=300, seed=5), "L1",
                           CvConfig(folds=3, num_lambdas=8), seed=0)
        data = self._logit_data(n=100, seed=6)
        preds = fit.predict(data.x, data.z)
        assert np.all(preds > -1.0) and np.all(preds < 1.0)
        assert fit.linear_focal_coef is None
        assert fit.kind == LOGIT_L1


class TestCvConfig:
    def test_validation(self):
        with pytest.raises(ValidationError):
            CvConfig(folds=1)
        with pytest.raises(ValidationError):
            CvConfig(lambda_grid=(0.1, 0.5))
        with pytest.raises(ValidationError):
            CvConfig(lambda_grid=(0.5, -0.1))
        with pytest.raises(ValidationError):
            CvConfig(tolerance=0.0)
