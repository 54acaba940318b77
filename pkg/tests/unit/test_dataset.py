"""Unit tests for datasets, column scaling and penalty plans."""

import numpy as np
import pytest
from pydantic import ValidationError
from pyrobustlasso.exceptions import DataValidationError
from pyrobustlasso.models.dataset import PenaltyPlan, column_scaler, validate_dataset


class TestValidateDataset:
    """Test validate_dataset."""

    def test_consistent_shapes(self):
        """Test that consistent shapes produce a Dataset."""
        data = validate_dataset([1.0, 2.0, 3.0], [[1.0], [0.0], [2.0]], np.ones((3, 2)))

        assert (data.n, data.K, data.p) == (3, 1, 2)
        assert data.treatment_names == ("d1",)
        assert data.control_names == ("x1", "x2")
        assert data.outcome_name == "y"

    def test_vector_treatment_becomes_column(self):
        """Test that a 1-D treatment is read as K = 1."""
        data = validate_dataset([1.0, 2.0, 3.0], [1.0, 0.0, 2.0])

        assert data.D.shape == (3, 1)
        assert data.p == 0

    def test_arrays_are_read_only(self):
        """Test that the validated arrays cannot be modified."""
        data = validate_dataset([1.0, 2.0], [3.0, 4.0], [[1.0], [2.0]])

        with pytest.raises(ValueError):
            data.y[0] = 5.0
        with pytest.raises(ValueError):
            data.X[0, 0] = 5.0

    def test_inputs_are_copied(self):
        """Test that later changes to the caller's arrays do not leak in."""
        y = np.array([1.0, 2.0, 3.0])
        data = validate_dataset(y, [1.0, 2.0, 4.0])
        y[0] = 100.0

        assert data.y[0] == 1.0

    def test_dimension_mismatch(self):
        """Test that row-count conflicts raise."""
        with pytest.raises(DataValidationError, match="Dimension mismatch"):
            validate_dataset([1.0, 2.0, 3.0], np.ones((4, 1)), np.ones((3, 2)))

    def test_nan_in_outcome_names_row(self):
        """Test that a NaN in y is reported with its row."""
        with pytest.raises(DataValidationError) as excinfo:
            validate_dataset([1.0, 2.0, np.nan], [1.0, 2.0, 3.0])

        assert excinfo.value.row == 2
        assert "row 2" in str(excinfo.value)

    def test_inf_in_controls_names_row_and_column(self):
        """Test that a non-finite control is reported with row and column name."""
        X = np.ones((5, 3))
        X[3, 1] = np.inf

        with pytest.raises(DataValidationError) as excinfo:
            validate_dataset(
                np.ones(5), np.arange(5.0), X, control_names=("a", "b", "c")
            )

        assert excinfo.value.row == 3
        assert excinfo.value.column == "b"

    def test_too_few_observations(self):
        """Test that n < 2 raises."""
        with pytest.raises(DataValidationError, match="at least 2"):
            validate_dataset([1.0], [1.0])

    def test_name_count_mismatch(self):
        """Test that wrong-length column names raise."""
        with pytest.raises(DataValidationError):
            validate_dataset([1.0, 2.0], [1.0, 2.0], treatment_names=("a", "b"))

    def test_non_numeric_input(self):
        """Test that non-numeric values raise a validation error."""
        with pytest.raises(DataValidationError):
            validate_dataset(["a", "b"], [1.0, 2.0])

    def test_idempotent(self, sparse_dataset):
        """Test that validating a Dataset's arrays again gives the same data."""
        again = validate_dataset(
            sparse_dataset.y,
            sparse_dataset.D,
            sparse_dataset.X,
            treatment_names=sparse_dataset.treatment_names,
            control_names=sparse_dataset.control_names,
        )

        np.testing.assert_array_equal(again.y, sparse_dataset.y)
        np.testing.assert_array_equal(again.D, sparse_dataset.D)
        np.testing.assert_array_equal(again.X, sparse_dataset.X)
        assert again.control_names == sparse_dataset.control_names

    def test_permuted_reorders_rows(self, sparse_dataset):
        """Test that permuted() reorders every array consistently."""
        order = np.arange(sparse_dataset.n)[::-1]
        permuted = sparse_dataset.permuted(order)

        np.testing.assert_array_equal(permuted.y, sparse_dataset.y[::-1])
        np.testing.assert_array_equal(permuted.X, sparse_dataset.X[::-1])
        assert permuted.treatment_names == sparse_dataset.treatment_names


class TestColumnScaler:
    """Test column_scaler."""

    def test_unit_column(self):
        """Test psi of a column of ones."""
        scaler = column_scaler([[1.0], [1.0], [1.0], [1.0]])

        np.testing.assert_array_equal(scaler.psi, [1.0])

    def test_single_spike(self):
        """Test psi = sqrt(4/4) for one entry of 2 among four rows."""
        scaler = column_scaler([[2.0], [0.0], [0.0], [0.0]])

        np.testing.assert_array_equal(scaler.psi, [1.0])

    def test_zero_columns(self):
        """Test that zero columns give psi = 0 and are inactive."""
        scaler = column_scaler(np.zeros((3, 2)))

        np.testing.assert_array_equal(scaler.psi, [0.0, 0.0])
        assert not scaler.active.any()

    def test_scale_equivariance(self, rng):
        """Test that scaling column j by a > 0 scales psi_j by a."""
        X = rng.standard_normal((30, 4))
        scaled = X.copy()
        scaled[:, 2] *= 3.5

        base = column_scaler(X).psi
        psi = column_scaler(scaled).psi

        np.testing.assert_allclose(psi[2], 3.5 * base[2], rtol=1e-14)
        np.testing.assert_array_equal(psi[[0, 1, 3]], base[[0, 1, 3]])


class TestPenaltyPlan:
    """Test PenaltyPlan validation."""

    def test_valid_plan(self):
        """Test a plan for K = 2 treatments."""
        plan = PenaltyPlan(lambda_beta=(1.0, 2.0, 3.0), lambda_gamma=(4.0, 5.0, 6.0))

        assert plan.K == 2
        assert plan.c_const == 1.01

    def test_length_mismatch(self):
        """Test that lambda vectors of different length are rejected."""
        with pytest.raises(ValidationError):
            PenaltyPlan(lambda_beta=(1.0, 2.0), lambda_gamma=(1.0, 2.0, 3.0))

    def test_negative_level(self):
        """Test that negative penalties are rejected."""
        with pytest.raises(ValidationError):
            PenaltyPlan(lambda_beta=(1.0, -2.0), lambda_gamma=(1.0, 2.0))

    def test_non_finite_level(self):
        """Test that infinite penalties are rejected."""
        with pytest.raises(ValidationError):
            PenaltyPlan(lambda_beta=(1.0, float("inf")), lambda_gamma=(1.0, 2.0))

    def test_c_const_must_exceed_one(self):
        """Test that c_const <= 1 is rejected."""
        with pytest.raises(ValidationError):
            PenaltyPlan(lambda_beta=(1.0, 1.0), lambda_gamma=(1.0, 1.0), c_const=1.0)

    def test_needs_outcome_and_one_treatment(self):
        """Test that a single-entry plan is rejected."""
        with pytest.raises(ValidationError):
            PenaltyPlan(lambda_beta=(1.0,), lambda_gamma=(1.0,))

    def test_without_outlier_penalty(self):
        """Test that the baseline plan zeroes lambda_gamma only."""
        plan = PenaltyPlan(lambda_beta=(10.0, 11.0), lambda_gamma=(3.0, 4.0))
        baseline = plan.without_outlier_penalty()

        assert baseline.lambda_beta == (10.0, 11.0)
        assert baseline.lambda_gamma == (0.0, 0.0)
        assert plan.lambda_gamma == (3.0, 4.0)

    def test_plan_is_frozen(self):
        """Test that a plan cannot be modified."""
        plan = PenaltyPlan(lambda_beta=(1.0, 1.0), lambda_gamma=(1.0, 1.0))

        with pytest.raises(ValidationError):
            plan.c_const = 2.0  # type: ignore[misc]
