"""
Unit tests for the independent verification machinery.
"""
import dataclasses

import numpy as np
import pytest

from filterlab.core.errors import DimensionError, NumericalError
from filterlab.core.filters import (
    Belief,
    ErrorBelief,
    IterationConfig,
    iekf_correct,
    ieskf_step,
    kf_correct,
    kf_predict,
)
from filterlab.core.gaussian import Gaussian1D, woodbury_inverse
from filterlab.core.models import LinearModel, builtin_model
from filterlab.core.oracles import (
    GridBelief,
    MapProblem,
    conditional_correct,
    gaussian_envelope,
    gaussian_kernel,
    gaussian_likelihood,
    grid_correct,
    grid_moments,
    grid_predict,
    ieskf_cost,
    ieskf_cost_minimize,
    map_correct_gn,
    marginal_predict,
)
from filterlab.tools.validation_tool import random_error_state_model, random_range_bearing_correction

TIGHT = IterationConfig(epsilon=1e-12, max_iters=50)


def random_spd(rng, dim, lo=0.5, hi=2.0):
    basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return (basis * rng.uniform(lo, hi, size=dim)) @ basis.T


@pytest.fixture
def rng():
    """Seeded generator shared by the randomized tests."""
    return np.random.default_rng(7)


class TestGridBelief:
    """Tests for the grid density container."""

    def test_uniform_has_unit_mass(self):
        """Test a uniform density integrates to one."""
        assert GridBelief.uniform(-10.0, 10.0).mass() == pytest.approx(1.0, abs=1e-12)

    def test_from_gaussian_is_normalized(self):
        """Test discretized Gaussians are normalized and centred."""
        grid = GridBelief.from_gaussian(Gaussian1D(2.0, 0.25))
        assert grid.mass() == pytest.approx(1.0, abs=1e-12)
        assert (grid.lo, grid.hi) == pytest.approx((-2.0, 6.0))
        moments = grid_moments(grid)
        assert moments.mean == pytest.approx(2.0, abs=1e-9)
        assert moments.var == pytest.approx(0.25, abs=1e-6)

    def test_rejects_negative_density(self):
        """Test negative density values raise."""
        with pytest.raises(NumericalError):
            GridBelief(0.0, 1.0, [0.5, -0.1, 0.5])

    def test_rejects_empty_interval(self):
        """Test bounds must satisfy lo < hi."""
        with pytest.raises(DimensionError):
            GridBelief(1.0, 1.0, [1.0, 1.0])

    def test_envelope_needs_positive_variance(self):
        """Test a zero-variance Gaussian cannot size a grid."""
        with pytest.raises(NumericalError):
            gaussian_envelope(Gaussian1D(0.0, 0.0))

    def test_kernels_need_positive_variance(self):
        """Test degenerate motion and observation densities are refused."""
        with pytest.raises(NumericalError):
            gaussian_kernel(0.0)
        with pytest.raises(NumericalError):
            gaussian_likelihood(0.0)


class TestGridBayesFilter:
    """Tests for grid prediction and correction."""

    def test_uniform_prior_stays_flat(self):
        """Test a narrow kernel leaves a uniform prior flat away from the edges."""
        prior = GridBelief.uniform(-10.0, 10.0)
        predicted = grid_predict(prior, gaussian_kernel(0.0025), 0.0, bounds=(-10.5, 10.5))
        interior = predicted.values[np.abs(predicted.points) < 9.5]
        assert predicted.mass() == pytest.approx(1.0, abs=1e-12)
        assert np.ptp(interior) / np.mean(interior) < 1e-6
        assert np.mean(interior) == pytest.approx(0.05, rel=1e-3)

    def test_narrow_prior_shifts_by_control(self):
        """Test a near-Dirac prior moves by u and widens by the motion variance."""
        prior = GridBelief.from_gaussian(Gaussian1D(0.0, 0.01), bounds=(-5.0, 5.0))
        predicted = grid_predict(prior, gaussian_kernel(1e-4), 1.5)
        moments = grid_moments(predicted)
        assert moments.mean == pytest.approx(1.5, abs=1e-6)
        assert moments.var == pytest.approx(0.0101, abs=1e-6)

    def test_mirrored_observation(self):
        """Test prior N(-1, 1) with z = 1, R = 1 gives N(0, 0.5)."""
        prior = GridBelief.from_gaussian(Gaussian1D(-1.0, 1.0), bounds=(-8.0, 8.0))
        posterior = grid_correct(prior, gaussian_likelihood(1.0), 1.0)
        moments = grid_moments(posterior)
        assert posterior.mass() == pytest.approx(1.0, abs=1e-12)
        assert moments.mean == pytest.approx(0.0, abs=1e-6)
        assert moments.var == pytest.approx(0.5, abs=1e-6)

    def test_leakage_raises(self):
        """Test mass pushed off the output grid is detected."""
        prior = GridBelief.from_gaussian(Gaussian1D(0.0, 1.0))
        with pytest.raises(NumericalError):
            grid_predict(prior, gaussian_kernel(0.1), 20.0)

    def test_incompatible_observation_raises(self):
        """Test a likelihood that vanishes on the whole grid raises."""
        prior = GridBelief.from_gaussian(Gaussian1D(0.0, 1.0))
        with pytest.raises(NumericalError):
            grid_correct(prior, gaussian_likelihood(1.0), 1000.0)


class TestGaussNewtonMap:
    """Tests for the stacked-residual MAP solver."""

    @pytest.fixture
    def linear(self):
        """Constant-velocity model with position observations."""
        return builtin_model("linear-cv-2d")

    def _linear_problem(self, linear, prior, z):
        return MapProblem(prior=prior, h=lambda x: linear.H @ x, jac_h=lambda x: linear.H, R=linear.R, z=z)

    def test_linear_h_matches_kf_in_one_step(self, rng, linear):
        """Test one productive step reproduces the KF posterior."""
        for _ in range(10):
            prior = Belief(rng.standard_normal(4), random_spd(rng, 4))
            z = rng.standard_normal(2)
            gn, iterations = map_correct_gn(self._linear_problem(linear, prior, z))
            expected, _ = kf_correct(prior, linear, z)
            assert iterations == 1
            np.testing.assert_allclose(gn.x_hat, expected.x_hat, rtol=0, atol=1e-10)
            np.testing.assert_allclose(gn.P, expected.P, rtol=0, atol=1e-10)

    def test_stationary_point(self, rng, linear):
        """Test z = h(x_prior) leaves the mean and takes no productive step."""
        prior = Belief(rng.standard_normal(4), random_spd(rng, 4))
        gn, iterations = map_correct_gn(self._linear_problem(linear, prior, linear.H @ prior.x_hat))
        assert iterations == 0
        np.testing.assert_array_equal(gn.x_hat, prior.x_hat)

    def test_covariance_is_woodbury_form(self, rng, linear):
        """Test the GN covariance equals (P^-1 + H^T R^-1 H)^-1."""
        prior = Belief(rng.standard_normal(4), random_spd(rng, 4))
        gn, _ = map_correct_gn(self._linear_problem(linear, prior, rng.standard_normal(2)))
        expected = woodbury_inverse(np.linalg.inv(prior.P), linear.H.T, np.linalg.inv(linear.R), linear.H)
        np.testing.assert_allclose(gn.P, expected, rtol=0, atol=1e-9)

    def test_matches_converged_iekf(self, rng):
        """Test the GN MAP estimate equals the converged IEKF on range-bearing."""
        for _ in range(20):
            m, prior, z = random_range_bearing_correction(rng)
            gn, _ = map_correct_gn(MapProblem.from_model(prior, m, z), TIGHT)
            iekf, _ = iekf_correct(prior, m, z, TIGHT)
            np.testing.assert_allclose(gn.x_hat, iekf.x_hat, rtol=0, atol=1e-8)
            np.testing.assert_allclose(gn.P, iekf.P, rtol=0, atol=1e-8)

    def test_noise_shape_checked(self, rng):
        """Test R must match the observation length."""
        prior = Belief(np.zeros(2), np.eye(2))
        with pytest.raises(DimensionError):
            MapProblem(prior=prior, h=lambda x: x, jac_h=lambda x: np.eye(2), R=np.eye(3), z=[0.0, 0.0])


class TestIteratedErrorStateCost:
    """Tests for direct minimization of the linearized error-state cost."""

    def test_closed_form_matches_minimizer(self, rng):
        """Test the closed-form step equals the normal-equation minimizer."""
        for _ in range(30):
            n, k = (int(d) for d in rng.integers(1, 6, size=2))
            m = random_error_state_model(rng, n, k)
            prior = ErrorBelief.reset(rng.standard_normal(n), random_spd(rng, n))
            x_iter = prior.x_nominal + 0.3 * rng.standard_normal(n)
            z = rng.standard_normal(k)
            closed = ieskf_step(prior, m, z, x_iter).dx
            direct = ieskf_cost_minimize(prior, m, z, x_iter)
            np.testing.assert_allclose(closed, direct, rtol=0, atol=1e-6)

    def test_minimizer_is_a_minimum(self, rng):
        """Test perturbing the minimizer never lowers the cost."""
        m = random_error_state_model(rng, 3, 2)
        prior = ErrorBelief.reset(rng.standard_normal(3), random_spd(rng, 3))
        x_iter = prior.x_nominal + 0.2 * rng.standard_normal(3)
        z = rng.standard_normal(2)
        best = ieskf_step(prior, m, z, x_iter).dx
        floor = ieskf_cost(prior, m, z, x_iter, best)
        for _ in range(50):
            assert ieskf_cost(prior, m, z, x_iter, best + 1e-3 * rng.standard_normal(3)) >= floor

    def test_uninformative_observation_returns_to_prior(self, rng):
        """Test H = 0 makes the step -J^-1 (x_iter [-] x_prior)."""
        n, k = 3, 2
        base = random_error_state_model(rng, n, k)
        m = dataclasses.replace(base, h_nominal=lambda x: np.zeros(k), jac_h_dx=lambda x: np.zeros((k, n)))
        prior = ErrorBelief.reset(rng.standard_normal(n), random_spd(rng, n))
        x_iter = prior.x_nominal + 0.5 * rng.standard_normal(n)
        expected = -np.linalg.solve(m.jac_retraction(x_iter, prior.x_nominal), x_iter - prior.x_nominal)
        np.testing.assert_allclose(ieskf_cost_minimize(prior, m, np.ones(k), x_iter), expected, atol=1e-10)
        np.testing.assert_allclose(ieskf_step(prior, m, np.ones(k), x_iter).dx, expected, atol=1e-10)


class TestJointGaussianForms:
    """Tests for marginalization and conditioning forms of the KF."""

    def test_marginal_matches_predict(self, rng):
        """Test the x_t marginal equals kf_predict."""
        for _ in range(20):
            n = int(rng.integers(1, 6))
            m = LinearModel(
                F=np.eye(n) + 0.3 * rng.standard_normal((n, n)),
                B=rng.standard_normal((n, 2)),
                H=rng.standard_normal((1, n)),
                Q=random_spd(rng, n),
                R=[[1.0]],
            )
            b = Belief(rng.standard_normal(n), random_spd(rng, n))
            u = rng.standard_normal(2)
            marginal = marginal_predict(b, m.F, m.B, u, m.Q)
            predicted = kf_predict(b, m, u)
            np.testing.assert_allclose(marginal.mean, predicted.x_hat, rtol=0, atol=1e-10)
            np.testing.assert_allclose(marginal.cov, predicted.P, rtol=0, atol=1e-10)

    def test_conditional_matches_correct(self, rng):
        """Test the conditional of x given z equals kf_correct."""
        for _ in range(20):
            n, k = (int(d) for d in rng.integers(1, 6, size=2))
            H, R = rng.standard_normal((k, n)), random_spd(rng, k)
            m = LinearModel(F=np.eye(n), B=np.zeros((n, 1)), H=H, Q=np.zeros((n, n)), R=R)
            b = Belief(rng.standard_normal(n), random_spd(rng, n))
            z = rng.standard_normal(k)
            conditional = conditional_correct(b, H, R, z)
            corrected, _ = kf_correct(b, m, z)
            np.testing.assert_allclose(conditional.mean, corrected.x_hat, rtol=0, atol=1e-10)
            np.testing.assert_allclose(conditional.cov, corrected.P, rtol=0, atol=1e-10)
