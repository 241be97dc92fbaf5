"""
State-space models consumed by the filters.

Three abstractions are provided: ``LinearModel`` (plus its scalar special
case ``Linear1DModel``), ``NonlinearModel`` with analytic Jacobians, and
``ErrorStateModel`` which splits the true state into a nominal state and a
small error state joined by a retraction (boxplus).

Noise enters additively in all built-in models, so the noise Jacobians are
identities there; the abstractions still carry them explicitly.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, DimensionError, NumericalError, UnknownModelError
from .gaussian import Matrix, Vector, as_matrix, as_vector, check_covariance

MotionFn = Callable[[Vector, Vector, Vector], Vector]
ObservationFn = Callable[[Vector, Vector], Vector]
MotionJacobian = Callable[[Vector, Vector], Matrix]
ObservationJacobian = Callable[[Vector], Matrix]

FD_RELATIVE_STEP = 1e-6


def wrap_angle(theta):
    """Map angles into (-pi, pi]; values already in range are returned untouched."""
    theta = np.asarray(theta, dtype=np.float64)
    wrapped = np.pi - np.mod(np.pi - theta, 2.0 * np.pi)
    return np.where((theta > np.pi) | (theta <= -np.pi), wrapped, theta)


def _wrap_indices(vec: Vector, indices: Tuple[int, ...]) -> Vector:
    if not indices:
        return vec
    out = np.array(vec, dtype=np.float64, copy=True)
    idx = list(indices)
    out[idx] = wrap_angle(out[idx])
    return out


def _frozen(value, name: str) -> Matrix:
    arr = as_matrix(value, name).copy()
    arr.setflags(write=False)
    return arr


def finite_difference_jacobian(
    fn: Callable[[Vector], Vector],
    x,
    step: Optional[Union[float, Sequence[float]]] = None,
) -> Matrix:
    """Central-difference Jacobian of ``fn`` at ``x``.

    Column j is ``(fn(x + s_j e_j) - fn(x - s_j e_j)) / (2 s_j)``. With no
    ``step`` the per-coordinate step is ``1e-6 * (1 + |x_j|)``.
    """
    x = as_vector(x, "x")
    if step is None:
        steps = FD_RELATIVE_STEP * (1.0 + np.abs(x))
    else:
        steps = np.broadcast_to(np.asarray(step, dtype=np.float64), x.shape)
    if np.any(steps <= 0.0):
        raise ValueError("finite-difference step must be positive")

    columns = []
    for j in range(x.size):
        offset = np.zeros_like(x)
        offset[j] = steps[j]
        forward = as_vector(fn(x + offset), "fn(x + step)")
        backward = as_vector(fn(x - offset), "fn(x - step)")
        if not (np.all(np.isfinite(forward)) and np.all(np.isfinite(backward))):
            raise NumericalError(f"non-finite function value while differencing column {j}")
        columns.append((forward - backward) / (2.0 * steps[j]))
    return np.column_stack(columns) if columns else np.zeros((0, 0))


@dataclass(frozen=True)
class LinearModel:
    """x_t = F x_{t-1} + B u_t + w_t, z_t = H x_t + v_t."""

    F: Matrix
    B: Matrix
    H: Matrix
    Q: Matrix
    R: Matrix
    name: str = "linear"

    def __post_init__(self):
        for attr in ("F", "B", "H", "Q", "R"):
            object.__setattr__(self, attr, _frozen(getattr(self, attr), attr))
        n, k = self.n, self.k
        if self.F.shape != (n, n):
            raise DimensionError(f"F must be {n}x{n}, got {self.F.shape}")
        if self.B.shape[0] != n:
            raise DimensionError(f"B must have {n} rows, got {self.B.shape}")
        if self.H.shape[1] != n:
            raise DimensionError(f"H must have {n} columns, got {self.H.shape}")
        if self.Q.shape != (n, n):
            raise DimensionError(f"Q must be {n}x{n}, got {self.Q.shape}")
        if self.R.shape != (k, k):
            raise DimensionError(f"R must be {k}x{k}, got {self.R.shape}")
        check_covariance(self.Q, "Q")
        check_covariance(self.R, "R")
        if k and float(np.min(np.linalg.eigvalsh(self.R))) <= 0.0:
            raise ConfigError("R must be positive definite", "R")

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def k(self) -> int:
        return self.H.shape[0]

    @property
    def angle_state(self) -> Tuple[int, ...]:
        return ()

    def transition(self, x: Vector, u: Vector, w: Vector) -> Vector:
        return self.F @ x + self.B @ u + w

    def observe(self, x: Vector, v: Vector) -> Vector:
        return self.H @ x + v

    def residual(self, z: Vector, z_pred: Vector) -> Vector:
        return z - z_pred

    def state_difference(self, a: Vector, b: Vector) -> Vector:
        return a - b

    def as_nonlinear(self) -> "NonlinearModel":
        """Wrap as f = Fx + Bu + w, h = Hx + v with constant Jacobians."""
        F, B, H = self.F, self.B, self.H
        eye_n, eye_k = np.eye(self.n), np.eye(self.k)
        return NonlinearModel(
            name=self.name,
            f=lambda x, u, w: F @ x + B @ u + w,
            h=lambda x, v: H @ x + v,
            jac_f_x=lambda x, u: F,
            jac_f_w=lambda x, u: eye_n,
            jac_h_x=lambda x: H,
            jac_h_v=lambda x: eye_k,
            Q=self.Q,
            R=self.R,
            n=self.n,
            m=self.m,
            k=self.k,
        )

    def as_error_state(self) -> "ErrorStateModel":
        """Error-state view with vector-space retraction and G = I."""
        return self.as_nonlinear().as_error_state()


@dataclass(frozen=True)
class Linear1DModel:
    """Scalar random walk driven by the control: x_t = x_{t-1} + u_t + w_t, z_t = x_t + v_t."""

    sigma2_motion: float
    sigma2_obs: float
    name: str = "linear-1d"

    def __post_init__(self):
        if not np.isfinite(self.sigma2_motion) or self.sigma2_motion < 0.0:
            raise ConfigError("must be >= 0", "sigma2_motion")
        if not np.isfinite(self.sigma2_obs) or self.sigma2_obs <= 0.0:
            raise ConfigError("must be > 0", "sigma2_obs")

    def as_linear(self) -> LinearModel:
        return LinearModel(
            F=[[1.0]],
            B=[[1.0]],
            H=[[1.0]],
            Q=[[self.sigma2_motion]],
            R=[[self.sigma2_obs]],
            name=self.name,
        )

    def as_nonlinear(self) -> "NonlinearModel":
        return self.as_linear().as_nonlinear()

    def as_error_state(self) -> "ErrorStateModel":
        return self.as_linear().as_error_state()


@dataclass(frozen=True)
class NonlinearModel:
    """x_t = f(x_{t-1}, u_t, w_t), z_t = h(x_t, v_t) with analytic Jacobians.

    Jacobian evaluators are called at the linearization point with zero
    noise: ``jac_f_x(x, u)``, ``jac_f_w(x, u)``, ``jac_h_x(x)``, ``jac_h_v(x)``.
    Components listed in ``angle_state`` / ``angle_obs`` are wrapped to
    (-pi, pi] in differences and residuals.
    """

    f: MotionFn
    h: ObservationFn
    jac_f_x: MotionJacobian
    jac_f_w: MotionJacobian
    jac_h_x: ObservationJacobian
    jac_h_v: ObservationJacobian
    Q: Matrix
    R: Matrix
    n: int
    m: int
    k: int
    name: str = "nonlinear"
    angle_state: Tuple[int, ...] = ()
    angle_obs: Tuple[int, ...] = ()
    landmarks: Matrix = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        object.__setattr__(self, "Q", _frozen(self.Q, "Q"))
        object.__setattr__(self, "R", _frozen(self.R, "R"))
        object.__setattr__(self, "landmarks", _frozen(np.reshape(self.landmarks, (-1, 2)), "landmarks"))
        if self.R.shape != (self.k, self.k):
            raise DimensionError(f"R must be {self.k}x{self.k}, got {self.R.shape}")
        check_covariance(self.Q, "Q")
        check_covariance(self.R, "R")

    def transition(self, x: Vector, u: Vector, w: Vector) -> Vector:
        return self.f(x, u, w)

    def observe(self, x: Vector, v: Vector) -> Vector:
        return _wrap_indices(self.h(x, v), self.angle_obs)

    def residual(self, z: Vector, z_pred: Vector) -> Vector:
        return _wrap_indices(z - z_pred, self.angle_obs)

    def state_difference(self, a: Vector, b: Vector) -> Vector:
        return _wrap_indices(a - b, self.angle_state)

    def as_error_state(self) -> "ErrorStateModel":
        """Error-state view: nominal f, h at zero noise, additive retraction."""
        zero_w = np.zeros(self.Q.shape[0])
        zero_v = np.zeros(self.k)
        angles = self.angle_state
        eye = np.eye(self.n)
        return ErrorStateModel(
            name=self.name,
            f_nominal=lambda x, u: self.f(x, u, zero_w),
            h_nominal=lambda x: self.h(x, zero_v),
            jac_f_dx=self.jac_f_x,
            jac_f_w=self.jac_f_w,
            jac_h_dx=self.jac_h_x,
            jac_h_v=self.jac_h_v,
            boxplus=lambda x, dx: _wrap_indices(x + dx, angles),
            boxminus=lambda a, b: _wrap_indices(a - b, angles),
            jac_retraction=lambda x_iter, x_prior: eye,
            jac_reset=lambda dx: eye,
            Q=self.Q,
            R=self.R,
            n=self.n,
            d=self.n,
            m=self.m,
            k=self.k,
            angle_obs=self.angle_obs,
            landmarks=self.landmarks,
        )


@dataclass(frozen=True)
class ErrorStateModel:
    """Nominal-state model with an error state joined by a retraction.

    ``boxplus(x, dx)`` maps an error vector onto the nominal state,
    ``boxminus(a, b)`` is its inverse difference, ``jac_retraction(x_iter,
    x_prior)`` is the Jacobian of ``(x_iter [+] dx) [-] x_prior`` at dx = 0 and
    ``jac_reset(dx_hat)`` is the reset Jacobian G.
    """

    f_nominal: Callable[[Vector, Vector], Vector]
    h_nominal: Callable[[Vector], Vector]
    jac_f_dx: MotionJacobian
    jac_f_w: MotionJacobian
    jac_h_dx: ObservationJacobian
    jac_h_v: ObservationJacobian
    boxplus: Callable[[Vector, Vector], Vector]
    boxminus: Callable[[Vector, Vector], Vector]
    jac_retraction: Callable[[Vector, Vector], Matrix]
    jac_reset: Callable[[Vector], Matrix]
    Q: Matrix
    R: Matrix
    n: int
    d: int
    m: int
    k: int
    name: str = "error-state"
    angle_obs: Tuple[int, ...] = ()
    landmarks: Matrix = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        object.__setattr__(self, "Q", _frozen(self.Q, "Q"))
        object.__setattr__(self, "R", _frozen(self.R, "R"))
        object.__setattr__(self, "landmarks", _frozen(np.reshape(self.landmarks, (-1, 2)), "landmarks"))
        if self.R.shape != (self.k, self.k):
            raise DimensionError(f"R must be {self.k}x{self.k}, got {self.R.shape}")
        check_covariance(self.Q, "Q")
        check_covariance(self.R, "R")

    def transition(self, x: Vector, u: Vector, w: Vector) -> Vector:
        return self.boxplus(self.f_nominal(x, u), self.jac_f_w(x, u) @ w)

    def observe(self, x: Vector, v: Vector) -> Vector:
        return _wrap_indices(self.h_nominal(x) + self.jac_h_v(x) @ v, self.angle_obs)

    def residual(self, z: Vector, z_pred: Vector) -> Vector:
        return _wrap_indices(z - z_pred, self.angle_obs)

    def state_difference(self, a: Vector, b: Vector) -> Vector:
        return self.boxminus(a, b)


Model = Union[LinearModel, Linear1DModel, NonlinearModel, ErrorStateModel]


def jacobian_errors(model: Model, x: Vector, u: Vector, rng: np.random.Generator) -> Dict[str, float]:
    """Worst relative error of each analytic Jacobian against central differences at (x, u)."""

    def rel(analytic: Matrix, numeric: Matrix) -> float:
        analytic = as_matrix(analytic)
        if analytic.shape != numeric.shape:
            raise DimensionError(f"Jacobian shape {analytic.shape} != {numeric.shape}")
        scale = max(1.0, float(np.max(np.abs(numeric))) if numeric.size else 1.0)
        return float(np.max(np.abs(analytic - numeric))) / scale if numeric.size else 0.0

    if isinstance(model, Linear1DModel):
        model = model.as_linear()
    if isinstance(model, LinearModel):
        model = model.as_nonlinear()

    if isinstance(model, NonlinearModel):
        zero_w = np.zeros(model.Q.shape[0])
        zero_v = np.zeros(model.k)
        base_x = model.f(x, u, zero_w)
        base_z = model.h(x, zero_v)
        return {
            "jac_f_x": rel(
                model.jac_f_x(x, u),
                finite_difference_jacobian(
                    lambda p: model.state_difference(model.f(p, u, zero_w), base_x), x
                ),
            ),
            "jac_f_w": rel(
                model.jac_f_w(x, u),
                finite_difference_jacobian(
                    lambda w: model.state_difference(model.f(x, u, w), base_x), zero_w
                ),
            ),
            "jac_h_x": rel(
                model.jac_h_x(x),
                finite_difference_jacobian(
                    lambda p: model.residual(model.h(p, zero_v), base_z), x
                ),
            ),
            "jac_h_v": rel(
                model.jac_h_v(x),
                finite_difference_jacobian(
                    lambda v: model.residual(model.h(x, v), base_z), zero_v
                ),
            ),
        }

    zero_dx = np.zeros(model.d)
    zero_w = np.zeros(model.Q.shape[0])
    zero_v = np.zeros(model.k)
    base_x = model.f_nominal(x, u)
    base_z = model.h_nominal(x)
    x_prior = model.boxplus(x, 0.1 * rng.standard_normal(model.d))
    return {
        "jac_f_dx": rel(
            model.jac_f_dx(x, u),
            finite_difference_jacobian(
                lambda dx: model.boxminus(model.f_nominal(model.boxplus(x, dx), u), base_x),
                zero_dx,
            ),
        ),
        "jac_f_w": rel(
            model.jac_f_w(x, u),
            finite_difference_jacobian(
                lambda w: model.boxminus(model.transition(x, u, w), base_x), zero_w
            ),
        ),
        "jac_h_dx": rel(
            model.jac_h_dx(x),
            finite_difference_jacobian(
                lambda dx: model.residual(model.h_nominal(model.boxplus(x, dx)), base_z),
                zero_dx,
            ),
        ),
        "jac_h_v": rel(
            model.jac_h_v(x),
            finite_difference_jacobian(
                lambda v: model.residual(model.observe(x, v), model.observe(x, zero_v)),
                zero_v,
            ),
        ),
        "jac_retraction": rel(
            model.jac_retraction(x, x_prior),
            finite_difference_jacobian(
                lambda dx: model.boxminus(model.boxplus(x, dx), x_prior), zero_dx
            ),
        ),
    }


# Built-in scenario library

BUILTIN_MODELS = (
    "linear-1d",
    "linear-cv-2d",
    "range-bearing-2d",
    "heading-robot-se2-lite",
)

MODEL_DEFAULTS: Dict[str, Dict[str, object]] = {
    "linear-1d": {
        "dt": 1.0,
        "motion_noise": [0.5],
        "obs_noise": [1.0],
        "landmarks": [],
        "control": [1.0],
    },
    "linear-cv-2d": {
        "dt": 0.1,
        "motion_noise": [0.2, 0.2],
        "obs_noise": [0.05, 0.05],
        "landmarks": [],
        "control": [0.2, -0.1],
    },
    "range-bearing-2d": {
        "dt": 0.1,
        "motion_noise": [1e-3, 1e-3, 1e-4],
        "obs_noise": [1e-2, 1e-3],
        "landmarks": [[0.0, 5.0], [8.0, 8.0]],
        "control": [1.0, 0.2],
    },
    "heading-robot-se2-lite": {
        "dt": 0.1,
        "motion_noise": [1e-3, 1e-3, 1e-4],
        "obs_noise": [1e-2, 1e-3],
        "landmarks": [[0.0, 3.0], [6.0, 6.0]],
        "control": [1.0, 0.3],
    },
}


def default_controls(model_id: str) -> Vector:
    """Constant control vector used when a scenario gives none."""
    _require_known(model_id)
    return np.asarray(MODEL_DEFAULTS[model_id]["control"], dtype=np.float64)


def _require_known(name: str) -> None:
    if name not in BUILTIN_MODELS:
        raise UnknownModelError(
            f"Unknown model '{name}'. Must be one of: {', '.join(BUILTIN_MODELS)}"
        )


def _expect_length(values: Sequence[float], length: int, field_name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (length,):
        raise ConfigError(f"expected {length} values, got {arr.size}", field_name)
    if np.any(arr < 0.0):
        raise ConfigError("noise variances must be >= 0", field_name)
    return arr


def _unicycle(x: Vector, u: Vector, dt: float) -> Vector:
    px, py, theta = x
    v, omega = u
    return np.array(
        [
            px + v * dt * np.cos(theta),
            py + v * dt * np.sin(theta),
            theta + omega * dt,
        ]
    )


def _unicycle_jacobian(x: Vector, u: Vector, dt: float) -> Matrix:
    theta = x[2]
    v = u[0]
    return np.array(
        [
            [1.0, 0.0, -v * dt * np.sin(theta)],
            [0.0, 1.0, v * dt * np.cos(theta)],
            [0.0, 0.0, 1.0],
        ]
    )


def _expect_positive(arr: np.ndarray, field_name: str) -> np.ndarray:
    if np.any(arr <= 0.0):
        raise ConfigError("observation noise variances must be > 0 for a linear model", field_name)
    return arr


def _landmark_offsets(x: Vector, landmarks: Matrix):
    dx = landmarks[:, 0] - x[0]
    dy = landmarks[:, 1] - x[1]
    q = dx * dx + dy * dy
    return dx, dy, q, np.sqrt(q)


def _build_linear_1d(params) -> Linear1DModel:
    motion = _expect_length(params["motion_noise"], 1, "motion_noise")
    obs = _expect_positive(_expect_length(params["obs_noise"], 1, "obs_noise"), "obs_noise")
    return Linear1DModel(sigma2_motion=float(motion[0]), sigma2_obs=float(obs[0]))


def _build_linear_cv_2d(params) -> LinearModel:
    dt = float(params["dt"])
    q = _expect_length(params["motion_noise"], 2, "motion_noise")
    r = _expect_positive(_expect_length(params["obs_noise"], 2, "obs_noise"), "obs_noise")
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    B = np.array([[dt * dt / 2.0, 0.0], [0.0, dt * dt / 2.0], [dt, 0.0], [0.0, dt]])
    H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
    # Continuous white-noise acceleration, per axis
    block = np.array([[dt**3 / 3.0, dt**2 / 2.0], [dt**2 / 2.0, dt]])
    Q = np.zeros((4, 4))
    for axis, (pos, vel) in enumerate(((0, 2), (1, 3))):
        Q[np.ix_([pos, vel], [pos, vel])] = q[axis] * block
    return LinearModel(F=F, B=B, H=H, Q=Q, R=np.diag(r), name="linear-cv-2d")


def _landmark_array(params) -> Matrix:
    landmarks = np.asarray(params["landmarks"], dtype=np.float64).reshape(-1, 2)
    if landmarks.shape[0] == 0:
        raise ConfigError("at least one landmark is required", "landmarks")
    return landmarks


def _build_range_bearing_2d(params) -> NonlinearModel:
    dt = float(params["dt"])
    Q = np.diag(_expect_length(params["motion_noise"], 3, "motion_noise"))
    range_var, bearing_var = _expect_length(params["obs_noise"], 2, "obs_noise")
    landmarks = _landmark_array(params)
    count = landmarks.shape[0]
    R = np.diag(np.tile([range_var, bearing_var], count))
    bearings = tuple(range(1, 2 * count, 2))

    def f(x, u, w):
        out = _unicycle(x, u, dt) + w
        out[2] = wrap_angle(out[2])
        return out

    def h(x, v):
        dx, dy, _, r = _landmark_offsets(x, landmarks)
        z = np.empty(2 * count)
        z[0::2] = r
        z[1::2] = np.arctan2(dy, dx) - x[2]
        return _wrap_indices(z + v, bearings)

    def jac_h_x(x):
        dx, dy, q, r = _landmark_offsets(x, landmarks)
        H = np.zeros((2 * count, 3))
        H[0::2, 0] = -dx / r
        H[0::2, 1] = -dy / r
        H[1::2, 0] = dy / q
        H[1::2, 1] = -dx / q
        H[1::2, 2] = -1.0
        return H

    eye3, eye_k = np.eye(3), np.eye(2 * count)
    return NonlinearModel(
        name="range-bearing-2d",
        f=f,
        h=h,
        jac_f_x=lambda x, u: _unicycle_jacobian(x, u, dt),
        jac_f_w=lambda x, u: eye3,
        jac_h_x=jac_h_x,
        jac_h_v=lambda x: eye_k,
        Q=Q,
        R=R,
        n=3,
        m=2,
        k=2 * count,
        angle_state=(2,),
        angle_obs=bearings,
        landmarks=landmarks,
    )


def _build_heading_robot(params) -> ErrorStateModel:
    dt = float(params["dt"])
    Q = np.diag(_expect_length(params["motion_noise"], 3, "motion_noise"))
    range_var, heading_var = _expect_length(params["obs_noise"], 2, "obs_noise")
    landmarks = _landmark_array(params)
    count = landmarks.shape[0]
    R = np.diag(np.append(np.full(count, range_var), heading_var))
    heading = (count,)

    def boxplus(x, dx):
        return _wrap_indices(x + dx, (2,))

    def boxminus(a, b):
        return _wrap_indices(a - b, (2,))

    def f_nominal(x, u):
        return boxplus(_unicycle(x, u, dt), np.zeros(3))

    def h_nominal(x):
        _, _, _, r = _landmark_offsets(x, landmarks)
        return np.append(r, x[2])

    def jac_h_dx(x):
        # d h / d x_true composed with d (x [+] dx) / d dx = I
        dx, dy, _, r = _landmark_offsets(x, landmarks)
        H = np.zeros((count + 1, 3))
        H[:count, 0] = -dx / r
        H[:count, 1] = -dy / r
        H[count, 2] = 1.0
        return H

    eye3, eye_k = np.eye(3), np.eye(count + 1)
    return ErrorStateModel(
        name="heading-robot-se2-lite",
        f_nominal=f_nominal,
        h_nominal=h_nominal,
        jac_f_dx=lambda x, u: _unicycle_jacobian(x, u, dt),
        jac_f_w=lambda x, u: eye3,
        jac_h_dx=jac_h_dx,
        jac_h_v=lambda x: eye_k,
        boxplus=boxplus,
        boxminus=boxminus,
        jac_retraction=lambda x_iter, x_prior: eye3,
        jac_reset=lambda dx: eye3,
        Q=Q,
        R=R,
        n=3,
        d=3,
        m=2,
        k=count + 1,
        angle_obs=heading,
        landmarks=landmarks,
    )


_BUILDERS = {
    "linear-1d": _build_linear_1d,
    "linear-cv-2d": _build_linear_cv_2d,
    "range-bearing-2d": _build_range_bearing_2d,
    "heading-robot-se2-lite": _build_heading_robot,
}


def builtin_model(name: str, **params) -> Model:
    """Construct a built-in model; unspecified parameters take per-model defaults."""
    _require_known(name)
    merged = dict(MODEL_DEFAULTS[name])
    merged.update({key: value for key, value in params.items() if value is not None})
    if float(merged["dt"]) <= 0.0:
        raise ConfigError("must be > 0", "dt")
    return _BUILDERS[name](merged)


JACOBIAN_CHECK_POINTS = 100
# Minimum distance from any landmark for a Jacobian sample point.
LANDMARK_CLEARANCE = 1.0


def _sample_point(model: Model, rng: np.random.Generator) -> Tuple[Vector, Vector]:
    landmarks = getattr(model, "landmarks", np.zeros((0, 2)))
    if landmarks.size:
        while True:
            position = rng.uniform(-2.0, 10.0, size=2)
            if np.min(np.linalg.norm(landmarks - position, axis=1)) > LANDMARK_CLEARANCE:
                break
        x = np.append(position, rng.uniform(-2.5, 2.5))
        u = np.array([rng.uniform(0.0, 2.0), rng.uniform(-0.5, 0.5)])
        return x, u
    if isinstance(model, Linear1DModel):
        model = model.as_linear()
    return 5.0 * rng.standard_normal(model.n), rng.standard_normal(model.m)


def check_model_jacobians(
    model: Model, rng: np.random.Generator, points: int = JACOBIAN_CHECK_POINTS
) -> Dict[str, float]:
    """Worst relative error per analytic Jacobian over ``points`` random evaluation points."""
    worst: Dict[str, float] = {}
    for _ in range(points):
        x, u = _sample_point(model, rng)
        for name, error in jacobian_errors(model, x, u, rng).items():
            worst[name] = max(worst.get(name, 0.0), error)
    return worst
