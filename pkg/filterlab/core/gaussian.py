"""
Gaussian primitives and the matrix identities the filters are built on.

Every matrix inverse in the package goes through ``checked_inverse`` or
``checked_solve`` so that singular factors are reported with a condition
estimate instead of being silently regularized.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import numpy.typing as npt
from scipy.linalg import lu_factor, lu_solve

from .errors import CovarianceError, DimensionError, SingularMatrixError

Vector = npt.NDArray[np.float64]
Matrix = npt.NDArray[np.float64]

# Relative to the largest absolute entry of the matrix under test.
SYMMETRY_TOLERANCE = 1e-9
PSD_TOLERANCE = 1e-9

MAX_CONDITION = 1.0 / np.finfo(np.float64).eps


def as_vector(value, name: str = "vector") -> Vector:
    """Coerce a scalar or sequence into a 1-D float array."""
    arr = np.atleast_1d(np.asarray(value, dtype=np.float64))
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def as_matrix(value, name: str = "matrix") -> Matrix:
    """Coerce a scalar or nested sequence into a 2-D float array."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim < 2:
        arr = np.atleast_2d(arr) if arr.ndim == 1 else arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional, got shape {arr.shape}")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


def _require_square(M: Matrix, name: str) -> None:
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")


def check_covariance(P: Matrix, name: str = "covariance") -> None:
    """Raise ``CovarianceError`` unless ``P`` is symmetric PSD within tolerance."""
    _require_square(P, name)
    if not np.all(np.isfinite(P)):
        raise CovarianceError(f"{name} has non-finite entries")
    scale = max(float(np.max(np.abs(P))) if P.size else 0.0, 1.0e-300)
    asym = float(np.max(np.abs(P - P.T))) if P.size else 0.0
    if asym > SYMMETRY_TOLERANCE * scale:
        raise CovarianceError(f"{name} is not symmetric (max asymmetry {asym:.3e})")
    if P.size:
        min_eig = float(np.min(np.linalg.eigvalsh(symmetrize(P))))
        if min_eig < -PSD_TOLERANCE * scale:
            raise CovarianceError(
                f"{name} is not positive semidefinite (min eigenvalue {min_eig:.3e})"
            )


def condition_number(M: Matrix) -> float:
    """2-norm condition estimate, ``inf`` for singular input."""
    if M.size == 0:
        return 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = float(np.linalg.cond(M))
    return cond if np.isfinite(cond) else float("inf")


def checked_solve(M: Matrix, B, name: str = "matrix") -> np.ndarray:
    """Solve ``M X = B`` through an LU factorization of ``M``.

    Raises ``SingularMatrixError`` naming ``name`` when ``M`` is singular to
    working precision.
    """
    M = as_matrix(M, name)
    _require_square(M, name)
    if not np.all(np.isfinite(M)):
        raise SingularMatrixError(name, float("inf"))
    cond = condition_number(M)
    if cond > MAX_CONDITION:
        raise SingularMatrixError(name, cond)
    B = np.asarray(B, dtype=np.float64)
    if B.shape[0] != M.shape[0]:
        raise DimensionError(
            f"cannot solve with {name} of shape {M.shape} and right-hand side {B.shape}"
        )
    return lu_solve(lu_factor(M, check_finite=False), B, check_finite=False)


def checked_inverse(M: Matrix, name: str = "matrix") -> Matrix:
    """Inverse of ``M`` via ``checked_solve`` against the identity."""
    M = as_matrix(M, name)
    _require_square(M, name)
    return checked_solve(M, np.eye(M.shape[0]), name)


@dataclass(frozen=True)
class Gaussian:
    """Multivariate normal belief: mean vector and covariance matrix."""

    mean: Vector
    cov: Matrix

    def __post_init__(self):
        mean = as_vector(self.mean, "mean")
        cov = as_matrix(self.cov, "cov")
        if cov.shape != (mean.size, mean.size):
            raise DimensionError(
                f"covariance shape {cov.shape} does not match mean length {mean.size}"
            )
        check_covariance(cov, "cov")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class Gaussian1D:
    """Scalar normal belief."""

    mean: float
    var: float

    def __post_init__(self):
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "var", float(self.var))
        if not np.isfinite(self.mean) or not np.isfinite(self.var):
            raise CovarianceError("Gaussian1D requires finite mean and variance")
        if self.var < 0.0:
            raise CovarianceError(f"variance must be >= 0, got {self.var}")

    @property
    def std(self) -> float:
        return float(np.sqrt(self.var))


def symmetrize(M: Matrix) -> Matrix:
    """Return ``(M + M^T) / 2``."""
    M = as_matrix(M, "M")
    _require_square(M, "M")
    return (M + M.T) / 2.0


def mahalanobis_sq(a, B) -> float:
    """Quadratic form ``a^T B a``."""
    a = as_vector(a, "a")
    B = as_matrix(B, "B")
    if B.shape != (a.size, a.size):
        raise DimensionError(
            f"metric of shape {B.shape} does not match vector of length {a.size}"
        )
    return float(a @ B @ a)


def woodbury_inverse(A, U, C, V) -> Matrix:
    """``(A + U C V)^{-1}`` evaluated by the matrix inversion lemma.

    A^-1 - A^-1 U (C^-1 + V A^-1 U)^-1 V A^-1
    """
    A = as_matrix(A, "A")
    U = as_matrix(U, "U")
    C = as_matrix(C, "C")
    V = as_matrix(V, "V")
    _require_square(A, "A")
    _require_square(C, "C")
    n, k = A.shape[0], C.shape[0]
    if U.shape != (n, k) or V.shape != (k, n):
        raise DimensionError(
            f"Woodbury factors not conformable: A{A.shape} U{U.shape} C{C.shape} V{V.shape}"
        )
    A_inv = checked_inverse(A, "A")
    C_inv = checked_inverse(C, "C")
    inner = checked_inverse(C_inv + V @ A_inv @ U, "C^-1 + V A^-1 U")
    return A_inv - A_inv @ U @ inner @ V @ A_inv


def conditional_gaussian(mean_x, mean_z, Cxx, Cxz, Czz, z) -> Gaussian:
    """Distribution of x given an observed z under a joint Gaussian.

    mean = E[x] + Cxz Czz^-1 (z - E[z]), cov = Cxx - Cxz Czz^-1 Cxz^T
    """
    mean_x = as_vector(mean_x, "mean_x")
    mean_z = as_vector(mean_z, "mean_z")
    z = as_vector(z, "z")
    Cxx = as_matrix(Cxx, "Cxx")
    Cxz = as_matrix(Cxz, "Cxz")
    Czz = as_matrix(Czz, "Czz")
    n, k = mean_x.size, mean_z.size
    if Cxx.shape != (n, n) or Cxz.shape != (n, k) or Czz.shape != (k, k) or z.size != k:
        raise DimensionError("joint Gaussian blocks are not conformable")
    # Cxz Czz^-1 = (Czz^-T Cxz^T)^T and Czz is symmetric
    gain = checked_solve(Czz, Cxz.T, "Czz").T
    mean = mean_x + gain @ (z - mean_z)
    cov = symmetrize(Cxx - gain @ Cxz.T)
    return Gaussian(mean, cov)


def gaussian_product_1d(a: Gaussian1D, b: Gaussian1D) -> Gaussian1D:
    """Normalized product of two scalar Gaussian densities."""
    total = a.var + b.var
    if total <= 0.0:
        raise SingularMatrixError("a.var + b.var", float("inf"))
    mean = (b.mean * a.var + a.mean * b.var) / total
    var = a.var * b.var / total
    return Gaussian1D(mean, var)


def information_form_covariance(P, H, R) -> Matrix:
    """Posterior covariance in information form, ``(P^-1 + H^T R^-1 H)^-1``."""
    P = as_matrix(P, "P")
    H = as_matrix(H, "H")
    R = as_matrix(R, "R")
    info = checked_inverse(P, "P") + H.T @ checked_solve(R, H, "R")
    return symmetrize(checked_inverse(info, "P^-1 + H^T R^-1 H"))


def sqrt_psd(M: Matrix, name: Optional[str] = None) -> Matrix:
    """Symmetric square root of a PSD matrix; exact zeros stay zero."""
    M = as_matrix(M, name or "M")
    if not np.any(M):
        return np.zeros_like(M)
    eigvals, eigvecs = np.linalg.eigh(symmetrize(M))
    return (eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))) @ eigvecs.T
