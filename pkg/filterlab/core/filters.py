"""
Kalman filter family: KF, scalar KF, EKF, ESKF, IEKF and IESKF.

Every operation is a pure function from an immutable belief (and model) to a
new belief. Covariances are re-symmetrized after every update.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import DimensionError, NumericalError
from .gaussian import (
    Gaussian1D,
    Matrix,
    Vector,
    as_matrix,
    as_vector,
    check_covariance,
    checked_inverse,
    checked_solve,
    gaussian_product_1d,
    symmetrize,
)
from .models import ErrorStateModel, Linear1DModel, LinearModel, NonlinearModel

logger = logging.getLogger(__name__)

INNOVATION_COVARIANCE = "innovation covariance"


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Belief:
    """Gaussian filter state (x_hat, P)."""

    x_hat: Vector
    P: Matrix

    def __post_init__(self):
        x_hat = as_vector(self.x_hat, "x_hat")
        P = as_matrix(self.P, "P")
        if P.shape != (x_hat.size, x_hat.size):
            raise DimensionError(f"P shape {P.shape} does not match state length {x_hat.size}")
        check_covariance(P, "P")
        object.__setattr__(self, "x_hat", _frozen(x_hat))
        object.__setattr__(self, "P", _frozen(P))

    @property
    def dim(self) -> int:
        return self.x_hat.size


@dataclass(frozen=True)
class ErrorBelief:
    """Error-state filter state: nominal state, error mean and error covariance."""

    x_nominal: Vector
    dx_hat: Vector
    P: Matrix

    def __post_init__(self):
        x_nominal = as_vector(self.x_nominal, "x_nominal")
        dx_hat = as_vector(self.dx_hat, "dx_hat")
        P = as_matrix(self.P, "P")
        if P.shape != (dx_hat.size, dx_hat.size):
            raise DimensionError(
                f"P shape {P.shape} does not match error dimension {dx_hat.size}"
            )
        check_covariance(P, "P")
        object.__setattr__(self, "x_nominal", _frozen(x_nominal))
        object.__setattr__(self, "dx_hat", _frozen(dx_hat))
        object.__setattr__(self, "P", _frozen(P))

    @classmethod
    def reset(cls, x_nominal, P) -> "ErrorBelief":
        """Belief with the error mean at exactly zero."""
        P = as_matrix(P, "P")
        return cls(x_nominal, np.zeros(P.shape[0]), P)


class IterationConfig(BaseModel):
    """Stopping rule for the iterated corrections."""

    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    epsilon: float = Field(default=1e-8, gt=0, description="Threshold on the Euclidean norm of each step")
    max_iters: int = Field(default=20, ge=1)
    recompute_retraction_jacobian: bool = Field(
        default=True,
        description="Re-evaluate J at every iterate (otherwise keep J at the prior)",
    )


@dataclass(frozen=True)
class CorrectionDiagnostics:
    iterations: int
    final_step_norm: float
    innovation: Vector
    kalman_gain: Matrix
    converged: bool = True
    steps: Tuple[Vector, ...] = ()
    # Pre-reset posterior error mean (error-state filters only)
    error_mean: Optional[Vector] = None


@dataclass(frozen=True)
class IeskfStep:
    """One evaluation of the iterated error-state update at a given iterate."""

    dx: Vector
    kalman_gain: Matrix
    H: Matrix
    P_bar: Matrix
    innovation: Vector


def _control(u, expected: int) -> Vector:
    u = as_vector(u, "u") if np.size(u) else np.zeros(0)
    if u.size != expected:
        raise DimensionError(f"control has length {u.size}, model expects {expected}")
    return u


def _observation(z, expected: int) -> Vector:
    z = as_vector(z, "z")
    if z.size != expected:
        raise DimensionError(f"observation has length {z.size}, model expects {expected}")
    return z


def _require_finite(vec: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(vec)):
        raise NumericalError(f"{what} produced non-finite values")
    return vec


def _gain(P: Matrix, H: Matrix, S: Matrix) -> Matrix:
    # K = P H^T S^-1 = (S^-1 H P)^T for symmetric P and S
    return checked_solve(S, H @ P, INNOVATION_COVARIANCE).T


def _as_linear(m: Union[LinearModel, Linear1DModel]) -> LinearModel:
    return m.as_linear() if isinstance(m, Linear1DModel) else m


# KF


def kf_predict(b: Belief, m: Union[LinearModel, Linear1DModel], u) -> Belief:
    """x = F x + B u, P = F P F^T + Q."""
    m = _as_linear(m)
    if b.dim != m.n:
        raise DimensionError(f"belief has dimension {b.dim}, model expects {m.n}")
    u = _control(u, m.m)
    x_hat = m.F @ b.x_hat + m.B @ u
    P = symmetrize(m.F @ b.P @ m.F.T + m.Q)
    return Belief(x_hat, P)


def kf_correct(
    b: Belief, m: Union[LinearModel, Linear1DModel], z
) -> Tuple[Belief, CorrectionDiagnostics]:
    """K = P H^T (H P H^T + R)^-1, x += K (z - H x), P = (I - K H) P."""
    m = _as_linear(m)
    if b.dim != m.n:
        raise DimensionError(f"belief has dimension {b.dim}, model expects {m.n}")
    z = _observation(z, m.k)
    S = m.H @ b.P @ m.H.T + m.R
    K = _gain(b.P, m.H, S)
    innovation = z - m.H @ b.x_hat
    step = K @ innovation
    P = symmetrize((np.eye(m.n) - K @ m.H) @ b.P)
    diagnostics = CorrectionDiagnostics(
        iterations=1,
        final_step_norm=float(np.linalg.norm(step)),
        innovation=innovation,
        kalman_gain=K,
        steps=(step,),
    )
    return Belief(b.x_hat + step, P), diagnostics


def kf1d_predict(b: Gaussian1D, m: Linear1DModel, u: float) -> Gaussian1D:
    return Gaussian1D(b.mean + float(u), b.var + m.sigma2_motion)


def kf1d_correct(b: Gaussian1D, m: Linear1DModel, z: float) -> Gaussian1D:
    """Scalar correction: product of the prior with N(z, sigma2_obs)."""
    return gaussian_product_1d(b, Gaussian1D(float(z), m.sigma2_obs))


# EKF / IEKF


def ekf_predict(b: Belief, m: NonlinearModel, u) -> Belief:
    """Propagate the mean through f and the covariance through its Jacobians at x_prev."""
    if b.dim != m.n:
        raise DimensionError(f"belief has dimension {b.dim}, model expects {m.n}")
    u = _control(u, m.m)
    x_prev = b.x_hat
    x_hat = _require_finite(as_vector(m.f(x_prev, u, np.zeros(m.Q.shape[0]))), "motion model")
    F = m.jac_f_x(x_prev, u)
    Fw = m.jac_f_w(x_prev, u)
    P = symmetrize(F @ b.P @ F.T + Fw @ m.Q @ Fw.T)
    return Belief(x_hat, P)


def _iekf_iteration(x_prior: Vector, P: Matrix, x_iter: Vector, m: NonlinearModel, z: Vector):
    H = m.jac_h_x(x_iter)
    Hv = m.jac_h_v(x_iter)
    S = H @ P @ H.T + Hv @ m.R @ Hv.T
    K = _gain(P, H, S)
    z_pred = _require_finite(as_vector(m.h(x_iter, np.zeros(m.k))), "observation model")
    innovation = m.residual(z, z_pred) - H @ m.state_difference(x_prior, x_iter)
    step = K @ innovation - m.state_difference(x_iter, x_prior)
    return step, K, H, innovation


def ekf_correct(b: Belief, m: NonlinearModel, z) -> Tuple[Belief, CorrectionDiagnostics]:
    """Single linearization at the predicted mean."""
    if b.dim != m.n:
        raise DimensionError(f"belief has dimension {b.dim}, model expects {m.n}")
    z = _observation(z, m.k)
    step, K, H, innovation = _iekf_iteration(b.x_hat, b.P, b.x_hat, m, z)
    P = symmetrize((np.eye(m.n) - K @ H) @ b.P)
    diagnostics = CorrectionDiagnostics(
        iterations=1,
        final_step_norm=float(np.linalg.norm(step)),
        innovation=innovation,
        kalman_gain=K,
        steps=(step,),
    )
    return Belief(b.x_hat + step, P), diagnostics


def iekf_correct(
    b: Belief, m: NonlinearModel, z, cfg: Optional[IterationConfig] = None
) -> Tuple[Belief, CorrectionDiagnostics]:
    """Iterated correction, relinearizing h at every iterate.

    Each iterate is x_{j+1} = x_prior + K_j r_j with
    r_j = z - h(x_j) - H_j (x_prior - x_j), i.e. a Gauss-Newton step on the
    MAP cost. The first iterate is exactly the EKF update. The covariance
    uses the gain and Jacobian of the final iteration.
    """
    cfg = cfg or IterationConfig()
    if b.dim != m.n:
        raise DimensionError(f"belief has dimension {b.dim}, model expects {m.n}")
    z = _observation(z, m.k)

    x_prior = b.x_hat
    x_iter = x_prior
    steps = []
    converged = False
    for _ in range(cfg.max_iters):
        step, K, H, innovation = _iekf_iteration(x_prior, b.P, x_iter, m, z)
        x_iter = _require_finite(x_iter + step, "iterated update")
        steps.append(step)
        if np.linalg.norm(step) < cfg.epsilon:
            converged = True
            break
    if not converged:
        logger.debug(
            "IEKF did not converge in %d iterations (last step %.3e)",
            cfg.max_iters,
            float(np.linalg.norm(steps[-1])),
        )

    P = symmetrize((np.eye(m.n) - K @ H) @ b.P)
    diagnostics = CorrectionDiagnostics(
        iterations=len(steps),
        final_step_norm=float(np.linalg.norm(steps[-1])),
        innovation=innovation,
        kalman_gain=K,
        converged=converged,
        steps=tuple(steps),
    )
    return Belief(x_iter, P), diagnostics


# ESKF / IESKF


def eskf_predict(b: ErrorBelief, m: ErrorStateModel, u) -> ErrorBelief:
    """Propagate the nominal state; the predicted error mean is always zero."""
    if b.P.shape[0] != m.d:
        raise DimensionError(f"error covariance has dimension {b.P.shape[0]}, model expects {m.d}")
    u = _control(u, m.m)
    x_prev = b.x_nominal
    x_nominal = _require_finite(as_vector(m.f_nominal(x_prev, u)), "nominal motion model")
    F = m.jac_f_dx(x_prev, u)
    Fw = m.jac_f_w(x_prev, u)
    P = symmetrize(F @ b.P @ F.T + Fw @ m.Q @ Fw.T)
    return ErrorBelief.reset(x_nominal, P)


def _inject_and_reset(
    m: ErrorStateModel, x_nominal: Vector, P: Matrix, dx_hat: Vector
) -> ErrorBelief:
    G = m.jac_reset(dx_hat)
    return ErrorBelief.reset(x_nominal, symmetrize(G @ P @ G.T))


def eskf_correct(b: ErrorBelief, m: ErrorStateModel, z) -> Tuple[ErrorBelief, CorrectionDiagnostics]:
    """Estimate the error state, inject it with boxplus, then reset."""
    if b.P.shape[0] != m.d:
        raise DimensionError(f"error covariance has dimension {b.P.shape[0]}, model expects {m.d}")
    z = _observation(z, m.k)
    x = b.x_nominal
    H = m.jac_h_dx(x)
    Hv = m.jac_h_v(x)
    S = H @ b.P @ H.T + Hv @ m.R @ Hv.T
    K = _gain(b.P, H, S)
    z_pred = _require_finite(as_vector(m.h_nominal(x)), "nominal observation model")
    innovation = m.residual(z, z_pred)
    dx_hat = K @ innovation
    x_nominal = _require_finite(as_vector(m.boxplus(x, dx_hat)), "boxplus")
    P = symmetrize((np.eye(m.d) - K @ H) @ b.P)
    diagnostics = CorrectionDiagnostics(
        iterations=1,
        final_step_norm=float(np.linalg.norm(dx_hat)),
        innovation=innovation,
        kalman_gain=K,
        steps=(dx_hat,),
        error_mean=dx_hat,
    )
    return _inject_and_reset(m, x_nominal, P, dx_hat), diagnostics


def ieskf_step(
    prior: ErrorBelief, m: ErrorStateModel, z, x_iter, J: Optional[Matrix] = None
) -> IeskfStep:
    """Closed-form minimizer of the linearized MAP cost at iterate ``x_iter``.

    S = H J^-1 P J^-T H^T + Hv R Hv^T
    K = J^-1 P J^-T H^T S^-1
    dx = K (z - h(x_iter) + H J^-1 c) - J^-1 c, with c = x_iter [-] x_prior
    """
    z = _observation(z, m.k)
    x_iter = as_vector(x_iter, "x_iter")
    x_prior = prior.x_nominal
    if J is None:
        J = m.jac_retraction(x_iter, x_prior)
    J_inv = checked_inverse(J, "retraction Jacobian J")
    c = m.boxminus(x_iter, x_prior)
    H = m.jac_h_dx(x_iter)
    Hv = m.jac_h_v(x_iter)
    P_bar = J_inv @ prior.P @ J_inv.T
    S = H @ P_bar @ H.T + Hv @ m.R @ Hv.T
    K = _gain(P_bar, H, S)
    z_pred = _require_finite(as_vector(m.h_nominal(x_iter)), "nominal observation model")
    innovation = m.residual(z, z_pred)
    prior_offset = J_inv @ c
    dx = K @ (innovation + H @ prior_offset) - prior_offset
    return IeskfStep(dx=dx, kalman_gain=K, H=H, P_bar=P_bar, innovation=innovation)


def ieskf_correct(
    b: ErrorBelief, m: ErrorStateModel, z, cfg: Optional[IterationConfig] = None
) -> Tuple[ErrorBelief, CorrectionDiagnostics]:
    """Iterated error-state correction followed by injection and reset."""
    cfg = cfg or IterationConfig()
    if b.P.shape[0] != m.d:
        raise DimensionError(f"error covariance has dimension {b.P.shape[0]}, model expects {m.d}")
    z = _observation(z, m.k)

    x_prior = b.x_nominal
    x_iter = x_prior
    fixed_J = None if cfg.recompute_retraction_jacobian else m.jac_retraction(x_prior, x_prior)
    steps = []
    converged = False
    for _ in range(cfg.max_iters):
        result = ieskf_step(b, m, z, x_iter, fixed_J)
        x_iter = _require_finite(as_vector(m.boxplus(x_iter, result.dx)), "boxplus")
        steps.append(result.dx)
        if np.linalg.norm(result.dx) < cfg.epsilon:
            converged = True
            break
    if not converged:
        logger.debug(
            "IESKF did not converge in %d iterations (last step %.3e)",
            cfg.max_iters,
            float(np.linalg.norm(steps[-1])),
        )

    K, H = result.kalman_gain, result.H
    P = symmetrize((np.eye(m.d) - K @ H) @ result.P_bar)
    error_mean = m.boxminus(x_iter, x_prior)
    diagnostics = CorrectionDiagnostics(
        iterations=len(steps),
        final_step_norm=float(np.linalg.norm(steps[-1])),
        innovation=result.innovation,
        kalman_gain=K,
        converged=converged,
        steps=tuple(steps),
        error_mean=error_mean,
    )
    return _inject_and_reset(m, x_iter, P, error_mean), diagnostics
