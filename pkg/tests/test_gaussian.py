"""
Unit tests for the Gaussian primitives and matrix identities.
"""
import numpy as np
import pytest

from filterlab.core.errors import CovarianceError, DimensionError, SingularMatrixError
from filterlab.core.gaussian import (
    Gaussian,
    Gaussian1D,
    checked_inverse,
    checked_solve,
    conditional_gaussian,
    gaussian_product_1d,
    information_form_covariance,
    mahalanobis_sq,
    sqrt_psd,
    symmetrize,
    woodbury_inverse,
)


def random_spd(rng, dim, lo=0.5, hi=2.0):
    basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return (basis * rng.uniform(lo, hi, size=dim)) @ basis.T


@pytest.fixture
def rng():
    """Seeded generator shared by the randomized tests."""
    return np.random.default_rng(1234)


class TestGaussianTypes:
    """Tests for the Gaussian value types."""

    def test_gaussian_accepts_valid_covariance(self):
        """Test a valid mean/covariance pair is stored read-only."""
        g = Gaussian([1.0, 2.0], [[2.0, 0.5], [0.5, 1.0]])
        assert g.dim == 2
        with pytest.raises(ValueError):
            g.mean[0] = 5.0

    def test_gaussian_rejects_shape_mismatch(self):
        """Test covariance size must equal mean length."""
        with pytest.raises(DimensionError):
            Gaussian([0.0, 0.0], np.eye(3))

    def test_gaussian_rejects_asymmetric_covariance(self):
        """Test asymmetric covariances are rejected."""
        with pytest.raises(CovarianceError):
            Gaussian([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])

    def test_gaussian_rejects_indefinite_covariance(self):
        """Test covariances with negative eigenvalues are rejected."""
        with pytest.raises(CovarianceError):
            Gaussian([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])

    def test_gaussian_tolerates_round_off_asymmetry(self):
        """Test asymmetry below the relative tolerance is accepted."""
        Gaussian([0.0, 0.0], [[1.0, 0.5 + 1e-12], [0.5, 1.0]])

    def test_gaussian1d_rejects_negative_variance(self):
        """Test a scalar Gaussian needs var >= 0."""
        with pytest.raises(CovarianceError):
            Gaussian1D(0.0, -1.0)
        assert Gaussian1D(0.0, 0.0).std == 0.0


class TestMahalanobis:
    """Tests for the quadratic form."""

    def test_zero_vector(self):
        """Test the zero vector has zero norm."""
        assert mahalanobis_sq([0.0, 0.0], np.eye(2)) == 0.0

    def test_identity_metric(self):
        """Test the identity metric gives the squared Euclidean norm."""
        assert mahalanobis_sq([1.0, 1.0], np.eye(2)) == 2.0

    def test_diagonal_metric(self):
        """Test a hand-expanded diagonal case."""
        assert mahalanobis_sq([1.0, 2.0], [[2.0, 0.0], [0.0, 3.0]]) == 14.0

    def test_dimension_mismatch(self):
        """Test mismatched operands raise."""
        with pytest.raises(DimensionError):
            mahalanobis_sq([1.0, 2.0, 3.0], np.eye(2))

    def test_nonnegative_for_psd_metric(self, rng):
        """Test the form is nonnegative and vanishes on the null space."""
        v = rng.standard_normal(3)
        B = np.outer(v, v)
        for _ in range(20):
            assert mahalanobis_sq(rng.standard_normal(3), B) >= 0.0
        null = np.cross(v, rng.standard_normal(3))
        assert mahalanobis_sq(null, B) == pytest.approx(0.0, abs=1e-12)


class TestWoodbury:
    """Tests for the matrix inversion lemma."""

    def test_scalar_case(self):
        """Test (1 + 1)^-1."""
        np.testing.assert_allclose(woodbury_inverse([[1.0]], [[1.0]], [[1.0]], [[1.0]]), [[0.5]])

    def test_zero_update(self):
        """Test U = 0 leaves the inverse of A."""
        result = woodbury_inverse(2.0 * np.eye(2), np.zeros((2, 1)), [[1.0]], np.zeros((1, 2)))
        np.testing.assert_allclose(result, 0.5 * np.eye(2))

    def test_matches_direct_inverse(self, rng):
        """Test a random well-conditioned 4x4 instance against the dense inverse."""
        A = random_spd(rng, 4)
        U = rng.standard_normal((4, 2))
        C = random_spd(rng, 2)
        V = U.T
        direct = np.linalg.inv(A + U @ C @ V)
        assert np.max(np.abs(woodbury_inverse(A, U, C, V) - direct)) < 1e-9

    @pytest.mark.parametrize("dim", [1, 2, 4, 8])
    def test_inverse_property(self, rng, dim):
        """Test result times (A + UCV) is the identity."""
        k = max(1, dim // 2)
        A = random_spd(rng, dim)
        U = rng.standard_normal((dim, k))
        C = random_spd(rng, k)
        product = woodbury_inverse(A, U, C, U.T) @ (A + U @ C @ U.T)
        assert np.max(np.abs(product - np.eye(dim))) < 1e-8

    def test_singular_factor_is_named(self):
        """Test a singular A is reported by name."""
        with pytest.raises(SingularMatrixError) as excinfo:
            woodbury_inverse(np.zeros((2, 2)), np.eye(2), np.eye(2), np.eye(2))
        assert excinfo.value.name == "A"

    def test_singular_inner_term_is_named(self):
        """Test a singular C^-1 + V A^-1 U is reported by name."""
        with pytest.raises(SingularMatrixError) as excinfo:
            woodbury_inverse([[1.0]], [[1.0]], [[-1.0]], [[1.0]])
        assert excinfo.value.name == "C^-1 + V A^-1 U"


class TestConditionalGaussian:
    """Tests for conditioning a joint Gaussian."""

    def test_independent_blocks(self):
        """Test Cxz = 0 leaves the marginal of x."""
        g = conditional_gaussian([1.0, 2.0], [0.0], np.eye(2), np.zeros((2, 1)), [[3.0]], [5.0])
        np.testing.assert_array_equal(g.mean, [1.0, 2.0])
        np.testing.assert_array_equal(g.cov, np.eye(2))

    def test_zero_innovation_shrinks_covariance(self):
        """Test z = E[z] keeps the mean and shrinks the covariance."""
        Cxx = np.array([[2.0, 0.3], [0.3, 1.0]])
        Cxz = np.array([[1.0], [0.5]])
        g = conditional_gaussian([1.0, -1.0], [4.0], Cxx, Cxz, [[2.0]], [4.0])
        np.testing.assert_allclose(g.mean, [1.0, -1.0])
        np.testing.assert_allclose(g.cov, Cxx - Cxz @ Cxz.T / 2.0)

    def test_scalar_case(self):
        """Test mean 1.0 and covariance 0.5 for the scalar instance."""
        g = conditional_gaussian([0.0], [0.0], [[1.0]], [[1.0]], [[2.0]], [2.0])
        assert g.mean[0] == pytest.approx(1.0)
        assert g.cov[0, 0] == pytest.approx(0.5)

    def test_singular_czz(self):
        """Test a singular Czz raises."""
        with pytest.raises(SingularMatrixError):
            conditional_gaussian([0.0], [0.0], [[1.0]], [[0.0]], [[0.0]], [1.0])

    def test_schur_complement_is_psd(self, rng):
        """Test the conditional covariance of a valid joint covariance is PSD."""
        for _ in range(20):
            joint = random_spd(rng, 5)
            g = conditional_gaussian(
                np.zeros(3), np.zeros(2), joint[:3, :3], joint[:3, 3:], joint[3:, 3:], rng.standard_normal(2)
            )
            assert np.min(np.linalg.eigvalsh(g.cov)) >= -1e-12


class TestSymmetrize:
    """Tests for symmetrize."""

    def test_fixed_point(self):
        """Test a symmetric matrix is returned unchanged."""
        M = np.array([[1.0, 2.0], [2.0, 5.0]])
        np.testing.assert_array_equal(symmetrize(M), M)

    def test_average_off_diagonal(self):
        """Test off-diagonals are averaged."""
        np.testing.assert_array_equal(symmetrize([[1.0, 2.0], [0.0, 1.0]]), [[1.0, 1.0], [1.0, 1.0]])

    def test_exact_symmetry(self, rng):
        """Test the output equals its transpose exactly."""
        S = symmetrize(rng.standard_normal((5, 5)))
        assert np.max(np.abs(S - S.T)) == 0.0


class TestGaussianProduct1D:
    """Tests for the scalar Gaussian product."""

    def test_equal_variances(self):
        """Test the symmetric average of equal-variance Gaussians."""
        result = gaussian_product_1d(Gaussian1D(0.0, 1.0), Gaussian1D(2.0, 1.0))
        assert (result.mean, result.var) == (1.0, 0.5)

    def test_uninformative_factor(self):
        """Test a huge-variance factor leaves the other almost unchanged."""
        result = gaussian_product_1d(Gaussian1D(3.0, 2.0), Gaussian1D(-50.0, 1e12))
        assert result.mean == pytest.approx(3.0, abs=1e-9)
        assert result.var == pytest.approx(2.0, rel=1e-9)

    def test_worked_example(self):
        """Test (1, 2) times (4, 1) gives (3, 2/3)."""
        result = gaussian_product_1d(Gaussian1D(1.0, 2.0), Gaussian1D(4.0, 1.0))
        assert result.mean == pytest.approx(3.0)
        assert result.var == pytest.approx(2.0 / 3.0)

    def test_degenerate_product(self):
        """Test two zero variances raise."""
        with pytest.raises(SingularMatrixError):
            gaussian_product_1d(Gaussian1D(0.0, 0.0), Gaussian1D(1.0, 0.0))

    def test_commutative_and_contracting(self, rng):
        """Test commutativity and var <= min(a.var, b.var)."""
        for _ in range(50):
            a = Gaussian1D(rng.normal(), rng.uniform(0.01, 5.0))
            b = Gaussian1D(rng.normal(), rng.uniform(0.01, 5.0))
            ab, ba = gaussian_product_1d(a, b), gaussian_product_1d(b, a)
            assert ab.mean == pytest.approx(ba.mean)
            assert ab.var == pytest.approx(ba.var)
            assert ab.var <= min(a.var, b.var)


class TestCheckedLinearAlgebra:
    """Tests for the checked factorization path."""

    def test_solve(self):
        """Test a simple solve."""
        np.testing.assert_allclose(checked_solve([[2.0, 0.0], [0.0, 4.0]], [2.0, 2.0]), [1.0, 0.5])

    def test_singular_reports_condition(self):
        """Test singular input reports an infinite or huge condition estimate."""
        with pytest.raises(SingularMatrixError) as excinfo:
            checked_inverse([[1.0, 0.0], [0.0, 0.0]], "S")
        assert excinfo.value.name == "S"
        assert excinfo.value.condition > 1e15

    def test_step_tagging(self):
        """Test the step index is attached to the message."""
        err = SingularMatrixError("S", float("inf")).at_step(7)
        assert err.step == 7
        assert "at step 7" in str(err)

    def test_information_form(self, rng):
        """Test the information-form covariance against the gain form."""
        P, R = random_spd(rng, 3), random_spd(rng, 2)
        H = rng.standard_normal((2, 3))
        K = P @ H.T @ np.linalg.inv(H @ P @ H.T + R)
        expected = (np.eye(3) - K @ H) @ P
        assert np.max(np.abs(information_form_covariance(P, H, R) - expected)) < 1e-10

    def test_sqrt_psd(self, rng):
        """Test the symmetric square root reproduces the matrix and keeps zeros."""
        M = random_spd(rng, 4)
        root = sqrt_psd(M)
        np.testing.assert_allclose(root @ root, M, atol=1e-12)
        assert not np.any(sqrt_psd(np.zeros((3, 3))))
