"""
Independent verification machinery for the filters.

- A 1-D grid (histogram) Bayes filter evaluating the belief recursion by
  quadrature, used to check the scalar Kalman filter.
- A Gauss-Newton MAP solver over the stacked prior/observation residual,
  used to check the iterated EKF.
- A direct normal-equation minimizer of the linearized IESKF cost, used to
  check the closed-form iterated error-state update.
- Joint-Gaussian forms of the KF prediction (marginalization) and correction
  (conditioning).
"""
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import block_diag
from scipy.stats import norm

from .errors import DimensionError, NumericalError
from .filters import Belief, ErrorBelief, IterationConfig
from .gaussian import (
    Gaussian,
    Gaussian1D,
    Matrix,
    Vector,
    as_matrix,
    as_vector,
    checked_inverse,
    checked_solve,
    conditional_gaussian,
    mahalanobis_sq,
    symmetrize,
)
from .models import ErrorStateModel, NonlinearModel

MAX_LEAKAGE = 1e-4
GRID_WIDTH_SIGMAS = 8.0
GRID_CELLS = 4001
# Output rows per convolution block; bounds peak memory on fine grids.
CONVOLUTION_BLOCK = 512

MotionKernel = Callable[[np.ndarray, np.ndarray, float], np.ndarray]
Likelihood = Callable[[float, np.ndarray], np.ndarray]


# Grid Bayes filter


@dataclass(frozen=True)
class GridBelief:
    """Density sampled on ``cells`` uniformly spaced points spanning [lo, hi]."""

    lo: float
    hi: float
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 1 or values.size < 2:
            raise DimensionError("grid belief needs at least two cells")
        if not self.hi > self.lo:
            raise DimensionError(f"grid bounds must satisfy lo < hi, got [{self.lo}, {self.hi}]")
        if np.any(values < 0.0) or not np.all(np.isfinite(values)):
            raise NumericalError("grid densities must be finite and nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        object.__setattr__(self, "values", values)

    @property
    def cells(self) -> int:
        return self.values.size

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.cells)

    def mass(self) -> float:
        return float(trapezoid(self.values, self.points))

    def normalized(self) -> "GridBelief":
        total = self.mass()
        if not total > 0.0:
            raise NumericalError("grid belief has zero mass")
        return GridBelief(self.lo, self.hi, self.values / total)

    @classmethod
    def from_gaussian(
        cls,
        g: Gaussian1D,
        cells: int = GRID_CELLS,
        width: float = GRID_WIDTH_SIGMAS,
        bounds: Optional[Tuple[float, float]] = None,
    ) -> "GridBelief":
        """Discretize a Gaussian over ``mean +- width*std`` (or explicit bounds)."""
        lo, hi = bounds if bounds is not None else gaussian_envelope(g, width)
        points = np.linspace(lo, hi, cells)
        return cls(lo, hi, norm.pdf(points, loc=g.mean, scale=g.std)).normalized()

    @classmethod
    def uniform(cls, lo: float, hi: float, cells: int = GRID_CELLS) -> "GridBelief":
        return cls(lo, hi, np.full(cells, 1.0 / (hi - lo)))


def gaussian_envelope(g: Gaussian1D, width: float = GRID_WIDTH_SIGMAS) -> Tuple[float, float]:
    """Grid bounds ``mean +- width*std``."""
    if g.var <= 0.0:
        raise NumericalError("cannot size a grid from a zero-variance Gaussian")
    return g.mean - width * g.std, g.mean + width * g.std


def _normal_density(offset, var: float):
    return np.exp(-0.5 * offset * offset / var) / np.sqrt(2.0 * np.pi * var)


def gaussian_kernel(sigma2_motion: float) -> MotionKernel:
    """p(x | x_prev, u) for x = x_prev + u + w, w ~ N(0, sigma2_motion)."""
    var = float(sigma2_motion)
    if var <= 0.0:
        raise NumericalError("a grid motion kernel needs a positive variance")

    def kernel(x, x_prev, u):
        return _normal_density(x - x_prev - u, var)

    return kernel


def gaussian_likelihood(sigma2_obs: float) -> Likelihood:
    """p(z | x) for z = x + v, v ~ N(0, sigma2_obs)."""
    var = float(sigma2_obs)
    if var <= 0.0:
        raise NumericalError("a grid likelihood needs a positive variance")

    def likelihood(z, x):
        return _normal_density(z - x, var)

    return likelihood


def grid_predict(
    b: GridBelief,
    motion_kernel: MotionKernel,
    u: float,
    bounds: Optional[Tuple[float, float]] = None,
) -> GridBelief:
    """Prediction integral by trapezoidal quadrature over the prior grid.

    The output grid has the same cell count; ``bounds`` relocates it (default:
    the prior grid). Raises ``NumericalError`` when more than 1e-4 of the
    probability mass falls outside the output grid.
    """
    lo, hi = bounds if bounds is not None else (b.lo, b.hi)
    x_prev = b.points
    x_out = np.linspace(lo, hi, b.cells)
    weights = np.full(b.cells, x_prev[1] - x_prev[0])
    weights[0] *= 0.5
    weights[-1] *= 0.5
    weighted = weights * b.values

    predicted = np.empty(b.cells)
    # Each output cell depends only on its own row, so block order is irrelevant.
    for start in range(0, b.cells, CONVOLUTION_BLOCK):
        rows = x_out[start:start + CONVOLUTION_BLOCK]
        predicted[start:start + rows.size] = (
            motion_kernel(rows[:, None], x_prev[None, :], u) @ weighted
        )

    result = GridBelief(lo, hi, np.clip(predicted, 0.0, None))
    leaked = b.mass() - result.mass()
    if leaked > MAX_LEAKAGE:
        raise NumericalError(
            f"{leaked:.3e} of the probability mass left the grid [{lo}, {hi}]; widen the bounds"
        )
    return result.normalized()


def grid_correct(b: GridBelief, likelihood: Likelihood, z: float) -> GridBelief:
    """Pointwise product with the likelihood, normalized numerically."""
    posterior = b.values * likelihood(z, b.points)
    result = GridBelief(b.lo, b.hi, posterior)
    if not result.mass() > 0.0:
        raise NumericalError(f"observation z={z} is incompatible with the grid support")
    return result.normalized()


def grid_moments(b: GridBelief) -> Gaussian1D:
    """Trapezoidal mean and variance."""
    x = b.points
    mean = float(trapezoid(x * b.values, x))
    var = float(trapezoid((x - mean) ** 2 * b.values, x))
    return Gaussian1D(mean, max(var, 0.0))


# Gauss-Newton MAP


@dataclass(frozen=True)
class MapProblem:
    """Single-step MAP estimation: prior N(x_prior, P) and z = h(x) + v, v ~ N(0, R)."""

    prior: Belief
    h: Callable[[Vector], Vector]
    jac_h: Callable[[Vector], Matrix]
    R: Matrix
    z: Vector
    residual: Callable[[Vector, Vector], Vector] = field(default=lambda z, z_pred: z - z_pred)
    state_difference: Callable[[Vector, Vector], Vector] = field(default=lambda a, b: a - b)

    def __post_init__(self):
        object.__setattr__(self, "R", as_matrix(self.R, "R"))
        object.__setattr__(self, "z", as_vector(self.z, "z"))
        if self.R.shape != (self.z.size, self.z.size):
            raise DimensionError(f"R shape {self.R.shape} does not match observation length {self.z.size}")

    @classmethod
    def from_model(cls, prior: Belief, m: NonlinearModel, z) -> "MapProblem":
        """Build the problem from a model; the effective noise is Hv R Hv^T at the prior."""
        zero_v = np.zeros(m.k)
        Hv = m.jac_h_v(prior.x_hat)
        return cls(
            prior=prior,
            h=lambda x: m.h(x, zero_v),
            jac_h=m.jac_h_x,
            R=Hv @ m.R @ Hv.T,
            z=z,
            residual=m.residual,
            state_difference=m.state_difference,
        )


def map_correct_gn(p: MapProblem, cfg: Optional[IterationConfig] = None) -> Tuple[Belief, int]:
    """Undamped Gauss-Newton on the stacked residual y - g(x).

    y = [x_prior; z], g(x) = [x; h(x)], J = [I; H], P_e = blockdiag(P, R).
    Each step solves (J^T P_e^-1 J) dx = J^T P_e^-1 r. Returns the final
    iterate with covariance (J^T P_e^-1 J)^-1 from the last linearization and
    the number of steps whose norm reached epsilon.
    """
    cfg = cfg or IterationConfig()
    x_prior = p.prior.x_hat
    n = x_prior.size
    P_e = block_diag(p.prior.P, p.R)
    x = x_prior
    productive = 0
    for _ in range(cfg.max_iters):
        H = as_matrix(p.jac_h(x), "H")
        J = np.vstack([np.eye(n), H])
        r = np.concatenate([p.state_difference(x_prior, x), p.residual(p.z, p.h(x))])
        weighted_J = checked_solve(P_e, J, "P_e")
        normal = J.T @ weighted_J
        dx = checked_solve(normal, weighted_J.T @ r, "normal-equation matrix")
        x = x + dx
        if np.linalg.norm(dx) < cfg.epsilon:
            break
        productive += 1
    cov = symmetrize(checked_inverse(normal, "normal-equation matrix"))
    return Belief(x, cov), productive


# IESKF cost


def _ieskf_linearization(prior: ErrorBelief, m: ErrorStateModel, z, x_iter):
    z = as_vector(z, "z")
    x_iter = as_vector(x_iter, "x_iter")
    H = m.jac_h_dx(x_iter)
    Hv = m.jac_h_v(x_iter)
    R_eff = Hv @ m.R @ Hv.T
    J = m.jac_retraction(x_iter, prior.x_nominal)
    c = m.boxminus(x_iter, prior.x_nominal)
    r = m.residual(z, m.h_nominal(x_iter))
    return H, R_eff, J, c, r


def ieskf_cost(prior: ErrorBelief, m: ErrorStateModel, z, x_iter, dx) -> float:
    """Linearized MAP cost at ``x_iter``.

    ||r - H dx||^2 weighted by (Hv R Hv^T)^-1 plus ||c + J dx||^2 weighted by P^-1.
    """
    H, R_eff, J, c, r = _ieskf_linearization(prior, m, z, x_iter)
    dx = as_vector(dx, "dx")
    return mahalanobis_sq(r - H @ dx, checked_inverse(R_eff, "Hv R Hv^T")) + mahalanobis_sq(
        c + J @ dx, checked_inverse(prior.P, "P")
    )


def ieskf_cost_minimize(prior: ErrorBelief, m: ErrorStateModel, z, x_init) -> Vector:
    """Minimize ``ieskf_cost`` in dx by solving its normal equations directly.

    (H^T R^-1 H + J^T P^-1 J) dx = H^T R^-1 r - J^T P^-1 c
    """
    H, R_eff, J, c, r = _ieskf_linearization(prior, m, z, x_init)
    R_inv_H = checked_solve(R_eff, H, "Hv R Hv^T")
    P_inv_J = checked_solve(prior.P, J, "P")
    normal = H.T @ R_inv_H + J.T @ P_inv_J
    rhs = R_inv_H.T @ r - P_inv_J.T @ c
    return checked_solve(normal, rhs, "normal-equation matrix")


# Joint-Gaussian forms of the KF steps


def marginal_predict(b: Belief, F, B, u, Q) -> Gaussian:
    """Prediction as the x_t marginal of the joint Gaussian of (x_{t-1}, x_t)."""
    F, B, Q = as_matrix(F, "F"), as_matrix(B, "B"), as_matrix(Q, "Q")
    u = as_vector(u, "u")
    n = b.dim
    mean = np.concatenate([b.x_hat, F @ b.x_hat + B @ u])
    cov = np.block([[b.P, b.P @ F.T], [F @ b.P, F @ b.P @ F.T + Q]])
    return Gaussian(mean[n:], symmetrize(cov[n:, n:]))


def conditional_correct(b: Belief, H, R, z) -> Gaussian:
    """Correction as the conditional of x_t given z_t under their joint Gaussian."""
    H, R = as_matrix(H, "H"), as_matrix(R, "R")
    return conditional_gaussian(
        mean_x=b.x_hat,
        mean_z=H @ b.x_hat,
        Cxx=b.P,
        Cxz=b.P @ H.T,
        Czz=H @ b.P @ H.T + R,
        z=z,
    )
