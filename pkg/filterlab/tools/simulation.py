"""
Scenario generation, filter execution and evaluation metrics.

All randomness flows from ``Scenario.seed`` through ``GaussianSampler``:
a PCG64 bit generator feeding pairwise Box-Muller draws, so a trajectory is
fully determined by its scenario.
"""
import dataclasses
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import chi2

from filterlab.core.errors import (
    ConfigError,
    DimensionError,
    IncompatibleFilterError,
    NumericalError,
    SingularMatrixError,
)
from filterlab.core.filters import (
    Belief,
    CorrectionDiagnostics,
    ErrorBelief,
    IterationConfig,
    ekf_correct,
    ekf_predict,
    eskf_correct,
    eskf_predict,
    iekf_correct,
    ieskf_correct,
    kf1d_correct,
    kf1d_predict,
    kf_correct,
    kf_predict,
)
from filterlab.core.gaussian import (
    Gaussian1D,
    Matrix,
    Vector,
    as_matrix,
    check_covariance,
    checked_solve,
    sqrt_psd,
)
from filterlab.core.models import (
    ErrorStateModel,
    Linear1DModel,
    LinearModel,
    Model,
    NonlinearModel,
    builtin_model,
    default_controls,
)
from filterlab.models.schemas import (
    FILTER_KINDS,
    ReportRow,
    RunSummary,
    ScenarioDocument,
)

logger = logging.getLogger(__name__)

DEFAULT_INITIAL_VARIANCE = 1e-2


def state_dim(model: Model) -> int:
    return 1 if isinstance(model, Linear1DModel) else model.n


def control_dim(model: Model) -> int:
    return 1 if isinstance(model, Linear1DModel) else model.m


def _dynamics(model: Model) -> Union[LinearModel, NonlinearModel, ErrorStateModel]:
    return model.as_linear() if isinstance(model, Linear1DModel) else model


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything needed to generate data and run filters on it."""

    model_id: str
    model: Model
    horizon: int
    controls: np.ndarray
    seed: int
    initial_belief: Belief
    initial_state: Optional[Vector] = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("must be >= 1", "horizon")
        controls = np.array(self.controls, dtype=np.float64, copy=True)
        if controls.shape != (self.horizon, control_dim(self.model)):
            raise ConfigError(
                f"expected {self.horizon} controls of length {control_dim(self.model)}, "
                f"got shape {controls.shape}",
                "controls",
            )
        controls.setflags(write=False)
        object.__setattr__(self, "controls", controls)
        if self.initial_belief.dim != state_dim(self.model):
            raise ConfigError(
                f"expected state dimension {state_dim(self.model)}", "initial_belief.mean"
            )
        if self.initial_state is not None:
            x0 = np.array(self.initial_state, dtype=np.float64)
            if x0.shape != (state_dim(self.model),):
                raise ConfigError(
                    f"expected {state_dim(self.model)} values, got {x0.size}", "initial_state"
                )
            object.__setattr__(self, "initial_state", x0)

    def with_seed(self, seed: int) -> "Scenario":
        return dataclasses.replace(self, seed=seed)

    @classmethod
    def from_document(cls, doc: ScenarioDocument) -> "Scenario":
        model_id = doc.model.id
        params = doc.model.params.model_dump()
        try:
            model = builtin_model(model_id, **params)
        except ConfigError as exc:
            raise ConfigError(str(exc).split(": ", 1)[-1], f"model.params.{exc.field}") from exc
        n, m = state_dim(model), control_dim(model)

        if doc.controls is None:
            controls = np.tile(default_controls(model_id), (doc.horizon, 1))
        elif doc.controls.constant is not None:
            if len(doc.controls.constant) != m:
                raise ConfigError(f"expected {m} values", "controls.constant")
            controls = np.tile(np.asarray(doc.controls.constant, dtype=np.float64), (doc.horizon, 1))
        else:
            steps = doc.controls.steps
            if len(steps) != doc.horizon:
                raise ConfigError(f"expected {doc.horizon} entries, got {len(steps)}", "controls.steps")
            for index, entry in enumerate(steps):
                if len(entry) != m:
                    raise ConfigError(f"expected {m} values", f"controls.steps.{index}")
            controls = np.asarray(steps, dtype=np.float64)

        return cls(
            model_id=model_id,
            model=model,
            horizon=doc.horizon,
            controls=controls,
            seed=doc.seed,
            initial_belief=_initial_belief(doc, n),
            initial_state=doc.initial_state,
        )


def _initial_belief(doc: ScenarioDocument, n: int) -> Belief:
    section = doc.initial_belief
    mean = np.zeros(n) if section.mean is None else np.asarray(section.mean, dtype=np.float64)
    if mean.shape != (n,):
        raise ConfigError(f"expected {n} values, got {mean.size}", "initial_belief.mean")
    if section.cov is not None:
        P = as_matrix(section.cov, "initial_belief.cov")
        if P.shape != (n, n):
            raise ConfigError(f"expected a {n}x{n} matrix", "initial_belief.cov")
        try:
            check_covariance(P, "P_0")
        except ValueError as exc:
            raise ConfigError(str(exc), "initial_belief.cov") from exc
    elif section.cov_diag is not None:
        if len(section.cov_diag) != n:
            raise ConfigError(f"expected {n} values", "initial_belief.cov_diag")
        P = np.diag(section.cov_diag)
    else:
        P = DEFAULT_INITIAL_VARIANCE * np.eye(n)
    return Belief(mean, P)


def load_scenario(path: Union[str, Path]) -> Tuple[ScenarioDocument, Scenario]:
    """
    Parse and validate a scenario document from a JSON file.

    Args:
        path: Path to a schema-version-1 scenario document

    Returns:
        The validated document and the scenario built from it
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario document: {exc.strerror}", str(path)) from exc
    doc = ScenarioDocument.model_validate_json(text)
    return doc, Scenario.from_document(doc)


def apply_overrides(
    doc: ScenarioDocument, seed: Optional[int] = None, kind: Optional[str] = None
) -> ScenarioDocument:
    """
    Re-validate the document with command-line overrides applied.

    Args:
        doc: Validated scenario document
        seed: Replacement seed, if any
        kind: Replacement filter kind, if any

    Returns:
        A new validated document
    """
    data = doc.model_dump()
    if seed is not None:
        data["seed"] = seed
    if kind is not None:
        data["filter"]["kind"] = kind
    return ScenarioDocument.model_validate(data)


# Random draws


class GaussianSampler:
    """Seeded standard-normal source using PCG64 and pairwise Box-Muller.

    Each call consumes ``ceil(size / 2)`` pairs of uniforms (u1, u2), with
    u1 taken from (0, 1] so the logarithm is finite, and emits
    ``r cos(2 pi u2), r sin(2 pi u2)`` with ``r = sqrt(-2 ln u1)``.
    An unused second value of the last pair is discarded.
    """

    def __init__(self, seed: int):
        self._rng = np.random.Generator(np.random.PCG64(seed))

    def standard_normal(self, size: int) -> Vector:
        pairs = (size + 1) // 2
        u1 = 1.0 - self._rng.random(pairs)
        u2 = self._rng.random(pairs)
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        draws = np.empty(2 * pairs)
        draws[0::2] = radius * np.cos(angle)
        draws[1::2] = radius * np.sin(angle)
        return draws[:size]

    def sample(self, cov: Matrix, mean: Optional[Vector] = None) -> Vector:
        """Draw from N(mean, cov); a zero covariance still consumes draws."""
        cov = as_matrix(cov, "cov")
        draw = sqrt_psd(cov) @ self.standard_normal(cov.shape[0])
        return draw if mean is None else mean + draw


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Ground truth x_0..x_T, observations z_1..z_T and controls u_1..u_T."""

    truth_states: np.ndarray
    measurements: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        steps = self.controls.shape[0]
        if self.truth_states.shape[0] != steps + 1 or self.measurements.shape[0] != steps:
            raise DimensionError(
                f"inconsistent trajectory lengths: {self.truth_states.shape[0]} states, "
                f"{self.measurements.shape[0]} measurements, {steps} controls"
            )

    @property
    def horizon(self) -> int:
        return self.controls.shape[0]


def simulate(s: Scenario) -> Trajectory:
    """
    Roll out the truth and noisy observations, deterministically in the seed.

    Args:
        s: Scenario to simulate

    Returns:
        Trajectory with T + 1 truth states, T controls and T observations
    """
    model = _dynamics(s.model)
    sampler = GaussianSampler(s.seed)
    if s.initial_state is not None:
        x = np.array(s.initial_state, dtype=np.float64)
    else:
        x = sampler.sample(s.initial_belief.P, s.initial_belief.x_hat)

    states = [x]
    measurements = []
    for t, u in enumerate(s.controls, start=1):
        w = sampler.sample(model.Q)
        x = np.asarray(model.transition(x, u, w), dtype=np.float64)
        v = sampler.sample(model.R)
        z = np.asarray(model.observe(x, v), dtype=np.float64)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            raise NumericalError(f"simulation produced non-finite values at step {t}")
        states.append(x)
        measurements.append(z)
    return Trajectory(
        truth_states=np.vstack(states),
        measurements=np.vstack(measurements),
        controls=np.array(s.controls),
    )


# Filter execution


@dataclass(frozen=True, eq=False)
class RunReport:
    """Per-step posteriors and metrics of one filter over one trajectory."""

    kind: str
    means: np.ndarray
    covs: np.ndarray
    errors: np.ndarray
    nees: np.ndarray
    iterations: np.ndarray
    innovation_norms: np.ndarray
    converged: np.ndarray
    error_means: Tuple[Optional[Vector], ...]
    # Error-state mean carried by the belief after each step (exactly zero after a reset)
    error_states: Tuple[Optional[Vector], ...] = ()
    wall_time: float = 0.0

    @property
    def steps(self) -> int:
        return self.means.shape[0]

    @property
    def rmse(self) -> Vector:
        return np.sqrt(np.mean(self.errors**2, axis=0))

    @property
    def mean_nees(self) -> float:
        return float(np.mean(self.nees))

    @property
    def mean_iterations(self) -> float:
        return float(np.mean(self.iterations))

    def rows(self) -> List[ReportRow]:
        return [
            ReportRow(
                step=t + 1,
                filter=self.kind,
                x_hat=self.means[t].tolist(),
                P_diag=np.diag(self.covs[t]).tolist(),
                nees=float(self.nees[t]),
                iterations=int(self.iterations[t]),
                innovation_norm=float(self.innovation_norms[t]),
            )
            for t in range(self.steps)
        ]

    def summary(self) -> RunSummary:
        return RunSummary(
            filter=self.kind,
            steps=self.steps,
            rmse=self.rmse.tolist(),
            mean_nees=self.mean_nees,
            mean_iterations=self.mean_iterations,
            converged_fraction=float(np.mean(self.converged)),
        )


def _incompatible(kind: str, model: Model) -> IncompatibleFilterError:
    return IncompatibleFilterError(
        f"filter '{kind}' cannot run on model '{model.name}' ({type(model).__name__})"
    )


def _filter_model(kind: str, model: Model):
    """The model view a filter kind consumes, wrapping vector-space models where exact."""
    if kind == "kf1d":
        if isinstance(model, Linear1DModel):
            return model
        raise _incompatible(kind, model)
    if kind == "kf":
        if isinstance(model, (LinearModel, Linear1DModel)):
            return model.as_linear() if isinstance(model, Linear1DModel) else model
        raise _incompatible(kind, model)
    if kind in ("ekf", "iekf"):
        if isinstance(model, (LinearModel, Linear1DModel)):
            return model.as_nonlinear()
        if isinstance(model, NonlinearModel):
            return model
        raise _incompatible(kind, model)
    if kind in ("eskf", "ieskf"):
        if isinstance(model, ErrorStateModel):
            return model
        return model.as_error_state()
    if kind == "dead-reckoning":
        return model.as_linear() if isinstance(model, Linear1DModel) else model
    raise ConfigError(f"Invalid filter kind '{kind}'. Must be one of: {', '.join(FILTER_KINDS)}", "filter.kind")


class _FilterRunner:
    """Uniform predict/correct interface over the filter family."""

    def __init__(self, kind: str, model, cfg: IterationConfig):
        self.kind = kind
        self.model = model
        self.cfg = cfg

    def initial(self, b: Belief):
        if self.kind == "kf1d":
            return Gaussian1D(b.x_hat[0], b.P[0, 0])
        if isinstance(self.model, ErrorStateModel):
            return ErrorBelief.reset(b.x_hat, b.P)
        return b

    def predict(self, state, u):
        if self.kind == "kf1d":
            return kf1d_predict(state, self.model, u[0])
        if isinstance(self.model, LinearModel):
            return kf_predict(state, self.model, u)
        if isinstance(self.model, NonlinearModel):
            return ekf_predict(state, self.model, u)
        return eskf_predict(state, self.model, u)

    def correct(self, state, z) -> Tuple[object, Optional[CorrectionDiagnostics]]:
        if self.kind == "kf1d":
            innovation = np.array([z[0] - state.mean])
            gain = state.var / (state.var + self.model.sigma2_obs)
            diagnostics = CorrectionDiagnostics(
                iterations=1,
                final_step_norm=abs(gain * innovation[0]),
                innovation=innovation,
                kalman_gain=np.array([[gain]]),
            )
            return kf1d_correct(state, self.model, z[0]), diagnostics
        if self.kind == "kf":
            return kf_correct(state, self.model, z)
        if self.kind == "ekf":
            return ekf_correct(state, self.model, z)
        if self.kind == "iekf":
            return iekf_correct(state, self.model, z, self.cfg)
        if self.kind == "eskf":
            return eskf_correct(state, self.model, z)
        if self.kind == "ieskf":
            return ieskf_correct(state, self.model, z, self.cfg)
        return state, None

    def moments(self, state) -> Tuple[Vector, Matrix]:
        if isinstance(state, Gaussian1D):
            return np.array([state.mean]), np.array([[state.var]])
        if isinstance(state, ErrorBelief):
            return np.array(state.x_nominal), np.array(state.P)
        return np.array(state.x_hat), np.array(state.P)

    def difference(self, a: Vector, b: Vector) -> Vector:
        if isinstance(self.model, Linear1DModel):
            return a - b
        return self.model.state_difference(a, b)


def run_filter(
    kind: str, s: Scenario, traj: Trajectory, cfg: Optional[IterationConfig] = None
) -> RunReport:
    """
    Alternate predict and correct over the trajectory, recording metrics per step.

    NEES_t = e^T P_t^-1 e with e = x_hat_t [-] x_t, the model's wrapped difference.

    Args:
        kind: Filter kind, one of FILTER_KINDS
        s: Scenario supplying the model and initial belief
        traj: Trajectory to filter
        cfg: Iteration settings for iekf and ieskf

    Returns:
        Report with per-step posteriors, NEES, iterations and innovation norms
    """
    cfg = cfg or IterationConfig()
    runner = _FilterRunner(kind, _filter_model(kind, s.model), cfg)
    correcting = kind != "dead-reckoning"

    means, covs, errors, nees = [], [], [], []
    iterations, innovation_norms, converged, error_means = [], [], [], []
    error_states = []
    started = time.perf_counter()
    state = runner.initial(s.initial_belief)
    for t in range(traj.horizon):
        step = t + 1
        try:
            state = runner.predict(state, traj.controls[t])
            diagnostics = None
            if correcting:
                state, diagnostics = runner.correct(state, traj.measurements[t])
            x_hat, P = runner.moments(state)
            e = runner.difference(x_hat, traj.truth_states[step])
            nees_t = float(e @ checked_solve(P, e, "P"))
        except SingularMatrixError as exc:
            raise exc.at_step(step) from exc

        means.append(x_hat)
        error_states.append(np.array(state.dx_hat) if isinstance(state, ErrorBelief) else None)
        covs.append(P)
        errors.append(e)
        nees.append(max(nees_t, 0.0))
        if diagnostics is not None:
            iterations.append(diagnostics.iterations)
            innovation_norms.append(float(np.linalg.norm(diagnostics.innovation)))
            converged.append(diagnostics.converged)
            error_means.append(diagnostics.error_mean)
        else:
            iterations.append(1 if correcting else 0)
            innovation_norms.append(0.0)
            converged.append(True)
            error_means.append(None)

    report = RunReport(
        kind=kind,
        means=np.vstack(means),
        covs=np.stack(covs),
        errors=np.vstack(errors),
        nees=np.asarray(nees),
        iterations=np.asarray(iterations, dtype=np.int64),
        innovation_norms=np.asarray(innovation_norms),
        converged=np.asarray(converged, dtype=bool),
        error_means=tuple(error_means),
        error_states=tuple(error_states),
        wall_time=time.perf_counter() - started,
    )
    logger.debug(
        "%s on %s: rmse=%s mean_nees=%.4g", kind, s.model_id, np.array2string(report.rmse), report.mean_nees
    )
    return report


def compare_filters(
    kinds: Sequence[str], s: Scenario, cfg: Optional[IterationConfig] = None
) -> List[RunReport]:
    """
    Run every kind on one shared trajectory.

    Args:
        kinds: Filter kinds to run
        s: Scenario to simulate once
        cfg: Iteration settings for the iterated filters

    Returns:
        One report per kind, in ``kinds`` order
    """
    if not kinds:
        raise ConfigError("at least one filter kind is required", "compare")
    traj = simulate(s)
    return [run_filter(kind, s, traj, cfg) for kind in kinds]


def monte_carlo(
    kinds: Sequence[str],
    s: Scenario,
    cfg: Optional[IterationConfig] = None,
    seeds: Sequence[int] = (),
    workers: Optional[int] = None,
) -> Dict[int, List[RunReport]]:
    """
    Run ``compare_filters`` over many seeds on a thread pool.

    Args:
        kinds: Filter kinds to run
        s: Scenario whose seed is replaced per run
        cfg: Iteration settings for the iterated filters
        seeds: Seeds to run
        workers: Thread pool size (executor default when None)

    Returns:
        Reports keyed by seed, in seed order
    """
    seeds = list(seeds)
    if not seeds:
        raise ConfigError("at least one seed is required", "seed")
    logger.info("Monte Carlo: %d seeds x %d filters on %s", len(seeds), len(kinds), s.model_id)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda seed: compare_filters(kinds, s.with_seed(seed), cfg), seeds))
    return dict(zip(seeds, results))


def nees_consistency_band(
    dim: int, steps: int = 1, runs: int = 1, confidence: float = 0.95
) -> Tuple[float, float]:
    """
    Two-sided chi-square acceptance interval for a NEES average.

    The average of ``steps * runs`` independent NEES samples of a consistent
    filter is chi2(dim * steps * runs) / (steps * runs).

    Args:
        dim: State dimension
        steps: Time steps averaged per run
        runs: Independent runs averaged
        confidence: Probability mass inside the interval

    Returns:
        Lower and upper bound of the average
    """
    if dim < 1 or steps < 1 or runs < 1:
        raise ValueError("dim, steps and runs must be positive")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    samples = steps * runs
    tail = (1.0 - confidence) / 2.0
    dof = dim * samples
    return float(chi2.ppf(tail, dof) / samples), float(chi2.ppf(1.0 - tail, dof) / samples)
