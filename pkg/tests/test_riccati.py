import numpy as np
import pytest
import scipy.linalg as sla

from covdesign import matlib
from covdesign.riccati import (
    SystemModel,
    check_assumptions,
    dare_defect,
    solve_dare,
    solve_dare_noiseless,
)

from conftest import PIXEL_Q, rand_spd, random_model

# Pixel-model reference values, frozen from two independent oracles
# (scipy.linalg.solve_discrete_are and the fixed-point iteration itself):
IDEAL_BOUND_POS = 50.199800796022265     # zero-noise steady-state position var
DARE_AT_1515_POS = 57.120905             # position var at R = 1.515 I


def scipy_dare(model, R):
    return sla.solve_discrete_are(model.F.T, model.H.T, model.Q, R)


class TestSolveDare:
    def test_forgetful_scalar_fixed_point(self):
        model = SystemModel([[0.0]], [[1.0]], [[1.0]])
        res = solve_dare(model, [[1.0]])
        assert res.converged
        assert np.isclose(res.sigma_inf[0, 0], 1.0)

    def test_pixel_at_published_precision(self, pixel_system):
        res = solve_dare(pixel_system, 1.515 * np.eye(2))
        assert res.converged
        assert np.allclose(np.diag(res.sigma_inf)[:2], DARE_AT_1515_POS, atol=1e-4)
        oracle = scipy_dare(pixel_system, 1.515 * np.eye(2))
        assert np.abs(res.sigma_inf - oracle).max() <= 1e-6

    def test_more_noise_worse_estimate(self, pixel_system):
        res = solve_dare(pixel_system, 1e6 * np.eye(2))
        assert res.sigma_inf[0, 0] > 10 * 82.34

    def test_defect_reevaluated_fresh(self, pixel_system):
        res = solve_dare(pixel_system, 1.515 * np.eye(2), tol=1e-10)
        defect = dare_defect(pixel_system, 1.515 * np.eye(2), res.sigma_inf)
        assert defect <= 1e-9 * (1.0 + np.linalg.norm(res.sigma_inf, "fro"))

    def test_negative_eigenvalue_rejected(self, pixel_system):
        with pytest.raises(ValueError, match="negative eigenvalue"):
            solve_dare(pixel_system, np.diag([1.0, -0.5]))

    def test_matches_scipy_on_random_models(self):
        rng = np.random.default_rng(21)
        for _ in range(5):
            n_x = int(rng.integers(2, 5))
            n_y = int(rng.integers(1, min(n_x, 2) + 1))
            model = random_model(rng, n_x, n_y)
            R = rand_spd(rng, n_y, floor=0.5)
            res = solve_dare(model, R, tol=1e-12)
            oracle = scipy_dare(model, R)
            assert np.abs(res.sigma_inf - oracle).max() <= 1e-7 * (1 + np.abs(oracle).max())

    def test_monotone_in_measurement_noise(self, pixel_system):
        rng = np.random.default_rng(22)
        for _ in range(20):
            r1 = rand_spd(rng, 2, floor=0.2)
            r2 = r1 + rand_spd(rng, 2, floor=0.1)
            s1 = solve_dare(pixel_system, r1).sigma_inf
            s2 = solve_dare(pixel_system, r2).sigma_inf
            assert matlib.min_eig(s2 - s1) >= -1e-6

    def test_unique_fixed_point_from_two_starts(self, pixel_system):
        r = 2.0 * np.eye(2)
        a = solve_dare(pixel_system, r, sigma0=PIXEL_Q).sigma_inf
        b = solve_dare(pixel_system, r, sigma0=1e3 * np.eye(4)).sigma_inf
        assert np.abs(a - b).max() <= 1e-6


class TestNoiselessBound:
    def test_pixel_zero_noise_limit(self, pixel_system):
        res = solve_dare_noiseless(pixel_system)
        assert res.converged
        assert np.allclose(np.diag(res.sigma_inf)[:2], IDEAL_BOUND_POS, atol=1e-7)
        # oracle: the R -> 0 limit of the standard solver
        oracle = scipy_dare(pixel_system, 1e-12 * np.eye(2))
        assert np.abs(res.sigma_inf - oracle).max() <= 1e-5

    def test_static_target_prior_is_process_noise(self):
        for q in (0.5, 2.0):
            model = SystemModel(np.eye(2), np.eye(2), q * np.eye(2))
            res = solve_dare_noiseless(model)
            assert np.allclose(res.sigma_inf, q * np.eye(2), atol=1e-9)

    def test_scalar_case(self):
        model = SystemModel([[1.0]], [[1.0]], [[1.0]])
        assert np.isclose(solve_dare_noiseless(model).sigma_inf[0, 0], 1.0)

    def test_lower_bound_property(self, pixel_system):
        lb = solve_dare_noiseless(pixel_system).sigma_inf
        rng = np.random.default_rng(23)
        for _ in range(20):
            R = rand_spd(rng, 2, floor=0.05)
            s = solve_dare(pixel_system, R).sigma_inf
            assert matlib.min_eig(s - lb) >= -1e-6

    def test_singular_projection_raises_with_iterate(self, pixel_system):
        model = SystemModel(pixel_system.F, pixel_system.H, np.zeros((4, 4)))
        with pytest.raises(matlib.SingularMatrixError, match="iterate"):
            solve_dare_noiseless(model)


class TestCheckAssumptions:
    def test_pixel_model_full_rank(self, pixel_system):
        diag = check_assumptions(pixel_system)
        assert diag.observability_rank == 4
        assert diag.controllability_rank == 4
        assert diag.observable and diag.controllable

    def test_no_observation(self, pixel_system):
        model = SystemModel(pixel_system.F, np.zeros((2, 4)), pixel_system.Q)
        assert check_assumptions(model).observability_rank == 0

    def test_no_process_noise(self, pixel_system):
        model = SystemModel(pixel_system.F, pixel_system.H, np.zeros((4, 4)))
        assert check_assumptions(model).controllability_rank == 0
