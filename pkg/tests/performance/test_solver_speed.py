"""Performance tests for the first-stage solver."""

import time

import numpy as np
from pyrobustlasso.models.dataset import column_scaler
from pyrobustlasso.simulation.dgp import SimulationConfig, generate_dgp
from pyrobustlasso.solvers.sqrt_lasso import default_penalties, fit_first_stage


def test_first_stage_speed():
    """
    Test one first stage at n=p=500 finishes quickly.

    Success criteria: default options finish in under 5 seconds.
    """
    data, _ = generate_dgp(SimulationConfig.preset("table1", seed=1), 0)
    scaler = column_scaler(data.X)
    lambda_beta, lambda_gamma = default_penalties(data.n, data.p)

    start = time.perf_counter()
    fit = fit_first_stage(data.y, data.X, scaler, lambda_beta, lambda_gamma)
    elapsed = time.perf_counter() - start

    print(f"\nFirst stage: {elapsed:.3f}s, {fit.iterations} outer iterations")
    print(f"Selected {fit.selected.size} controls, {fit.outlier_set.size} outliers")

    assert np.all(np.isfinite(fit.beta_hat))
    assert elapsed < 5.0
