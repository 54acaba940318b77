"""Unit tests for the orthogonal second step and its inference."""

import numpy as np
import pytest
from pyrobustlasso.exceptions import CollinearityError, DataValidationError
from pyrobustlasso.inference.orthogonal import (
    confidence_intervals,
    ols_on_residuals,
    orthogonal_moment,
    standard_errors,
    two_step_fit,
)
from pyrobustlasso.models.dataset import PenaltyPlan, validate_dataset
from pyrobustlasso.solvers.sqrt_lasso import SolverOptions, default_penalty_plan

TIGHT = SolverOptions(max_outer_iters=200, objective_tol=1e-14, lasso_tol=1e-12)


def _two_treatment_dataset(rng):
    n, p = 80, 10
    X = rng.standard_normal((n, p))
    d1 = X[:, 0] + rng.standard_normal(n)
    d2 = X[:, 1] - 0.5 * d1 + rng.standard_normal(n)
    y = 1.0 * d1 - 0.5 * d2 + 2.0 * X[:, 2] + rng.standard_normal(n)
    return validate_dataset(y, np.column_stack([d1, d2]), X)


def _planted_shift_dataset(rng):
    # Few weak controls and large shifts: the default penalties leave the
    # noise-level fit intact, so flagging both rows is the optimum.
    n, p = 200, 5
    X = rng.standard_normal((n, p))
    d = X[:, 1] + rng.standard_normal(n)
    d[11] += 30.0
    y = d + X[:, 0] + rng.standard_normal(n)
    y[40] += 30.0
    return validate_dataset(y, d, X, treatment_names=("d",))


class TestOlsOnResiduals:
    """Test ols_on_residuals."""

    def test_single_ones_column_gives_mean(self):
        """Test that regressing on a column of ones returns the mean."""
        alpha = ols_on_residuals([1.0, 2.0, 3.0, 4.0], np.ones(4))

        assert alpha.shape == (1,)
        assert alpha[0] == pytest.approx(2.5, abs=1e-14)

    def test_orthogonal_columns_decouple(self):
        """Test that orthogonal columns give per-column projections."""
        E = np.array([[1.0, 1.0], [1.0, -1.0], [1.0, 1.0], [1.0, -1.0]])
        xi0 = np.array([3.0, 1.0, 2.0, 0.0])

        alpha = ols_on_residuals(xi0, E)

        expected = E.T @ xi0 / np.sum(E**2, axis=0)
        np.testing.assert_allclose(alpha, expected, atol=1e-14)

    def test_matches_least_squares(self, rng):
        """Test agreement with numpy's least squares on a random system."""
        E = rng.standard_normal((50, 3))
        xi0 = rng.standard_normal(50)

        expected, *_ = np.linalg.lstsq(E, xi0, rcond=None)

        np.testing.assert_allclose(ols_on_residuals(xi0, E), expected, atol=1e-12)

    def test_identical_columns_are_collinear(self, rng):
        """Test that duplicated residual columns raise CollinearityError."""
        column = rng.standard_normal(30)

        with pytest.raises(CollinearityError):
            ols_on_residuals(rng.standard_normal(30), np.column_stack([column, column]))

    def test_zero_column_is_collinear(self):
        """Test that an all-zero residual column raises CollinearityError."""
        with pytest.raises(CollinearityError):
            ols_on_residuals(np.ones(5), np.zeros((5, 1)))

    def test_needs_more_rows_than_treatments(self):
        """Test that n <= K raises DataValidationError."""
        with pytest.raises(DataValidationError, match="n > K"):
            ols_on_residuals([1.0, 2.0], np.eye(2))

    def test_shape_mismatch(self):
        """Test that a target of the wrong length raises."""
        with pytest.raises(DataValidationError):
            ols_on_residuals(np.ones(3), np.ones((4, 1)))


class TestConfidenceIntervals:
    """Test standard_errors and confidence_intervals."""

    def test_standard_normal_example(self):
        """Test alpha 1, sigma 1, Sigma_xi 1, n 100 gives 1 -/+ 1.959964/10."""
        lower, upper = confidence_intervals([1.0], 1.0, [[1.0]], 100)

        assert lower[0] == pytest.approx(1.0 - 0.1959964, abs=1e-7)
        assert upper[0] == pytest.approx(1.0 + 0.1959964, abs=1e-7)

    def test_scalar_inputs(self):
        """Test that scalar alpha and Sigma_xi are accepted for K = 1."""
        lower, upper = confidence_intervals(1.0, 1.0, 1.0, 100)

        assert lower.shape == upper.shape == (1,)

    def test_higher_level_contains_lower_level(self, rng):
        """Test that the 0.99 interval contains the 0.95 interval."""
        alpha = rng.standard_normal(3)
        A = rng.standard_normal((3, 3))
        sigma_xi = A @ A.T + np.eye(3)

        lo95, hi95 = confidence_intervals(alpha, 0.7, sigma_xi, 50, level=0.95)
        lo99, hi99 = confidence_intervals(alpha, 0.7, sigma_xi, 50, level=0.99)

        assert np.all(lo99 <= lo95)
        assert np.all(hi99 >= hi95)

    def test_zero_sigma_gives_zero_width(self):
        """Test that sigma_hat = 0 collapses the interval to the estimate."""
        lower, upper = confidence_intervals([0.3, -2.0], 0.0, np.eye(2), 10)

        np.testing.assert_array_equal(lower, [0.3, -2.0])
        np.testing.assert_array_equal(upper, [0.3, -2.0])

    @pytest.mark.parametrize("level", [0.0, 1.0, -0.5, 1.5])
    def test_invalid_level(self, level):
        """Test that levels outside (0, 1) raise."""
        with pytest.raises(DataValidationError):
            confidence_intervals([1.0], 1.0, [[1.0]], 100, level=level)

    def test_standard_errors_use_inverse_diagonal(self):
        """Test se_k = sigma * sqrt(inv(Sigma_xi)_kk / n) on a diagonal matrix."""
        se = standard_errors(2.0, np.diag([4.0, 0.25]), 16)

        np.testing.assert_allclose(se, [2.0 * 0.5 / 4.0, 2.0 * 2.0 / 4.0])

    def test_singular_gram_is_collinear(self):
        """Test that a singular Sigma_xi raises CollinearityError."""
        with pytest.raises(CollinearityError):
            standard_errors(1.0, np.ones((2, 2)), 10)


class TestTwoStepFit:
    """Test two_step_fit."""

    def test_no_controls_is_plain_ols(self, rng):
        """Test that p = 0 with lambda_gamma = 0 reduces to OLS of y on D."""
        D = rng.standard_normal((40, 2))
        y = D @ np.array([1.5, -0.5]) + rng.standard_normal(40)
        data = validate_dataset(y, D)
        plan = PenaltyPlan(lambda_beta=(0.0,) * 3, lambda_gamma=(0.0,) * 3)

        result = two_step_fit(data, plan)
        expected, *_ = np.linalg.lstsq(D, y, rcond=None)

        np.testing.assert_allclose(result.alpha_hat, expected, rtol=1e-12)
        assert result.converged

    def test_full_shrinkage_gives_simple_ratio(self, sparse_dataset):
        """Test that overwhelming lambda_beta gives alpha_hat = d'y / d'd."""
        plan = PenaltyPlan(lambda_beta=(1e8, 1e8), lambda_gamma=(0.0, 0.0))
        d = sparse_dataset.D[:, 0]
        y = sparse_dataset.y

        result = two_step_fit(sparse_dataset, plan)

        for fit in result.first_stages:
            assert fit.selected.size == 0
        assert result.alpha_hat[0] == pytest.approx((d @ y) / (d @ d), rel=1e-12)

    def test_orthogonal_moment_vanishes(self, sparse_dataset):
        """Test that the empirical orthogonal moment is zero at alpha_hat."""
        plan = default_penalty_plan(sparse_dataset.n, sparse_dataset.p, 1)

        result = two_step_fit(sparse_dataset, plan)

        assert np.max(np.abs(orthogonal_moment(result))) <= 1e-8

    def test_result_shapes_and_labels(self, sparse_dataset):
        """Test shapes of the result and the first-stage labels."""
        plan = default_penalty_plan(sparse_dataset.n, sparse_dataset.p, 1)

        result = two_step_fit(sparse_dataset, plan)

        assert result.alpha_hat.shape == (1,)
        assert result.sigma_xi_hat.shape == (1, 1)
        assert result.residual_matrix.shape == (sparse_dataset.n, 1)
        assert [fit.label for fit in result.first_stages] == ["y", "d"]
        assert result.treatment_names == ("d",)

    def test_interval_is_symmetric_around_estimate(self, sparse_dataset):
        """Test that ci_lower and ci_upper straddle alpha_hat symmetrically."""
        plan = default_penalty_plan(sparse_dataset.n, sparse_dataset.p, 1)

        result = two_step_fit(sparse_dataset, plan, level=0.9)

        np.testing.assert_allclose(
            result.alpha_hat - result.ci_lower,
            result.ci_upper - result.alpha_hat,
            rtol=1e-12,
        )
        assert result.level == 0.9

    def test_p_value_matches_z_statistic(self, sparse_dataset):
        """Test z = alpha_hat / se and a two-sided normal p-value."""
        plan = default_penalty_plan(sparse_dataset.n, sparse_dataset.p, 1)

        result = two_step_fit(sparse_dataset, plan)

        z = result.alpha_hat[0] / result.std_errors[0]
        assert result.z_stats[0] == pytest.approx(z, rel=1e-12)
        assert 0.0 <= result.p_values[0] <= 1.0
        assert result.p_values[0] < 1e-6

    def test_gram_is_symmetric_psd(self, rng):
        """Test that Sigma_xi_hat is symmetric positive semidefinite for K = 2."""
        data = _two_treatment_dataset(rng)
        plan = default_penalty_plan(data.n, data.p, data.K)

        result = two_step_fit(data, plan)

        np.testing.assert_array_equal(result.sigma_xi_hat, result.sigma_xi_hat.T)
        assert np.linalg.eigvalsh(result.sigma_xi_hat).min() >= -1e-12

    def test_threaded_first_stages_match_serial(self, rng):
        """Test that running first stages on threads changes nothing."""
        data = _two_treatment_dataset(rng)
        plan = default_penalty_plan(data.n, data.p, data.K)

        serial = two_step_fit(data, plan, SolverOptions(n_jobs=1))
        threaded = two_step_fit(data, plan, SolverOptions(n_jobs=3))

        np.testing.assert_array_equal(serial.alpha_hat, threaded.alpha_hat)
        np.testing.assert_array_equal(serial.std_errors, threaded.std_errors)

    def test_row_permutation_invariance(self, sparse_dataset, rng):
        """Test that permuting observations leaves alpha_hat unchanged."""
        plan = default_penalty_plan(sparse_dataset.n, sparse_dataset.p, 1)
        order = rng.permutation(sparse_dataset.n)

        base = two_step_fit(sparse_dataset, plan, TIGHT)
        permuted = two_step_fit(sparse_dataset.permuted(order), plan, TIGHT)

        np.testing.assert_allclose(permuted.alpha_hat, base.alpha_hat, atol=1e-6)
        np.testing.assert_allclose(permuted.std_errors, base.std_errors, atol=1e-6)

    def test_robust_fit_flags_planted_outliers(self, rng):
        """Test that the planted outcome and treatment shifts are flagged."""
        data = _planted_shift_dataset(rng)
        plan = default_penalty_plan(data.n, data.p, 1)

        result = two_step_fit(data, plan, TIGHT)

        # the treatment shift reaches y through d
        assert set(result.first_stages[0].outlier_set.tolist()) == {11, 40}
        assert result.first_stages[1].outlier_set.tolist() == [11]
        assert result.alpha_hat[0] == pytest.approx(1.0, abs=0.4)

    def test_plan_must_match_treatments(self, sparse_dataset):
        """Test that a plan for the wrong K raises DataValidationError."""
        plan = default_penalty_plan(sparse_dataset.n, sparse_dataset.p, 2)

        with pytest.raises(DataValidationError, match="treatments"):
            two_step_fit(sparse_dataset, plan)

    def test_invalid_level(self, sparse_dataset):
        """Test that level outside (0, 1) raises before any fitting."""
        plan = default_penalty_plan(sparse_dataset.n, sparse_dataset.p, 1)

        with pytest.raises(DataValidationError):
            two_step_fit(sparse_dataset, plan, level=1.0)

    def test_collinear_treatments(self, rng):
        """Test that two identical treatments raise CollinearityError."""
        X = rng.standard_normal((30, 3))
        d = rng.standard_normal(30)
        y = d + rng.standard_normal(30)
        data = validate_dataset(y, np.column_stack([d, d]), X)
        plan = default_penalty_plan(data.n, data.p, 2)

        with pytest.raises(CollinearityError):
            two_step_fit(data, plan)
