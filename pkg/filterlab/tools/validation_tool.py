"""
Tool for running the oracle validation suites.

Each suite cross-checks the filters against an independent computation and
returns a ``SuiteResult`` listing every check with its measured value, its
threshold and the remaining margin.
"""
import dataclasses
import logging
from typing import Callable, Dict, List

import numpy as np
from pydantic import BaseModel

from filterlab.core.errors import ConfigError
from filterlab.core.filters import (
    Belief,
    ErrorBelief,
    IterationConfig,
    eskf_correct,
    iekf_correct,
    ieskf_step,
    kf1d_correct,
    kf1d_predict,
    kf_correct,
    kf_predict,
)
from filterlab.core.gaussian import (
    Gaussian1D,
    checked_inverse,
    information_form_covariance,
    woodbury_inverse,
)
from filterlab.core.models import (
    BUILTIN_MODELS,
    ErrorStateModel,
    Linear1DModel,
    LinearModel,
    builtin_model,
    check_model_jacobians,
    default_controls,
)
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
    ieskf_cost_minimize,
    map_correct_gn,
    marginal_predict,
)
from filterlab.tools.simulation import Scenario, run_filter, simulate, state_dim

logger = logging.getLogger(__name__)

VALIDATION_SEED = 20240607
RANDOM_INSTANCES = 100

GRID_TOLERANCE = 1e-3
COLLAPSE_TOLERANCE = 1e-10
GN_TOLERANCE = 1e-8
COST_TOLERANCE = 1e-6
JACOBIAN_TOLERANCE = 1e-5
COVARIANCE_FORM_TOLERANCE = 1e-8
WOODBURY_TOLERANCE = 1e-9

TIGHT_ITERATION = IterationConfig(epsilon=1e-12, max_iters=50)


class CheckResult(BaseModel):
    """One measured quantity against its acceptance threshold (value < threshold)."""

    name: str
    value: float
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(self.value < self.threshold)

    @property
    def margin(self) -> float:
        return self.threshold - self.value


class SuiteResult(BaseModel):
    suite: str
    checks: List[CheckResult]

    @property
    def valid(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def errors(self) -> List[str]:
        return [
            f"{check.name}: {check.value:.3e} >= {check.threshold:.1e}"
            for check in self.checks
            if not check.passed
        ]

    def to_dict(self) -> Dict:
        return {
            "suite": self.suite,
            "valid": self.valid,
            "checks": [
                {**check.model_dump(), "passed": check.passed, "margin": check.margin}
                for check in self.checks
            ],
            "errors": self.errors,
        }


def _max_abs(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def _random_spd(rng: np.random.Generator, dim: int, lo: float = 0.5, hi: float = 2.0) -> np.ndarray:
    """Random SPD matrix with eigenvalues in [lo, hi]."""
    basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return (basis * rng.uniform(lo, hi, size=dim)) @ basis.T


def _scenario(model_id: str, horizon: int, seed: int = VALIDATION_SEED, **params) -> Scenario:
    model = builtin_model(model_id, **params)
    n = state_dim(model)
    return Scenario(
        model_id=model_id,
        model=model,
        horizon=horizon,
        controls=np.tile(default_controls(model_id), (horizon, 1)),
        seed=seed,
        initial_belief=Belief(np.zeros(n), 1e-2 * np.eye(n)),
    )


# Suites


def validate_grid_vs_kf() -> SuiteResult:
    """Grid Bayes filter against the scalar KF on linear-1d, 20 steps."""
    s = _scenario("linear-1d", horizon=20)
    traj = simulate(s)
    m = s.model
    kernel = gaussian_kernel(m.sigma2_motion)
    likelihood = gaussian_likelihood(m.sigma2_obs)

    kf = Gaussian1D(s.initial_belief.x_hat[0], s.initial_belief.P[0, 0])
    grid = GridBelief.from_gaussian(kf)
    mean_gap = var_gap = mass_gap = 0.0
    for t in range(traj.horizon):
        u, z = float(traj.controls[t][0]), float(traj.measurements[t][0])
        kf_pred = kf1d_predict(kf, m, u)
        grid = grid_predict(grid, kernel, u, bounds=gaussian_envelope(kf_pred))
        kf = kf1d_correct(kf_pred, m, z)
        grid = grid_correct(grid, likelihood, z)
        moments = grid_moments(grid)
        mean_gap = max(mean_gap, abs(moments.mean - kf.mean))
        var_gap = max(var_gap, abs(moments.var - kf.var))
        mass_gap = max(mass_gap, abs(grid.mass() - 1.0))
    return SuiteResult(
        suite="grid-vs-kf",
        checks=[
            CheckResult(name="max |grid mean - KF mean|", value=mean_gap, threshold=GRID_TOLERANCE),
            CheckResult(name="max |grid var - KF var|", value=var_gap, threshold=GRID_TOLERANCE),
            CheckResult(name="max |grid mass - 1|", value=mass_gap, threshold=1e-6),
        ],
    )


def random_range_bearing_correction(rng: np.random.Generator):
    """
    Prior belief and observation for one randomized range-bearing correction.

    Args:
        rng: Generator the instance is drawn from

    Returns:
        Tuple of (model, prior belief, observation)
    """
    m = builtin_model("range-bearing-2d")
    while True:
        position = rng.uniform(-2.0, 10.0, size=2)
        if np.min(np.linalg.norm(m.landmarks - position, axis=1)) > 2.0:
            break
    x_hat = np.append(position, rng.uniform(-2.5, 2.5))
    std = np.diag([0.1, 0.1, 0.05])
    correlation = np.eye(3) + 0.3 * (np.ones((3, 3)) - np.eye(3))
    P = std @ correlation @ std
    truth = x_hat + np.linalg.cholesky(P) @ rng.standard_normal(3)
    z = m.observe(truth, np.linalg.cholesky(m.R) @ rng.standard_normal(m.k))
    return m, Belief(x_hat, P), z


def validate_gn_vs_iekf() -> SuiteResult:
    """Converged IEKF against Gauss-Newton MAP on randomized range-bearing corrections."""
    rng = np.random.default_rng(VALIDATION_SEED)
    mean_gap = cov_gap = gradient = 0.0
    unconverged = 0
    for _ in range(RANDOM_INSTANCES):
        m, prior, z = random_range_bearing_correction(rng)
        posterior, diagnostics = iekf_correct(prior, m, z, TIGHT_ITERATION)
        problem = MapProblem.from_model(prior, m, z)
        gn, _ = map_correct_gn(problem, TIGHT_ITERATION)
        mean_gap = max(mean_gap, _max_abs(posterior.x_hat, gn.x_hat))
        cov_gap = max(cov_gap, _max_abs(posterior.P, gn.P))
        unconverged += not diagnostics.converged

        # Gradient of the stacked least-squares cost at the IEKF fixed point
        x = posterior.x_hat
        H = m.jac_h_x(x)
        prior_term = checked_inverse(prior.P, "P") @ m.state_difference(x, prior.x_hat)
        obs_term = H.T @ checked_inverse(m.R, "R") @ m.residual(z, m.h(x, np.zeros(m.k)))
        gradient = max(gradient, float(np.linalg.norm(prior_term - obs_term)))

    # Linear h: one productive GN step reproduces the KF posterior
    linear = builtin_model("linear-cv-2d")
    linear_gap = 0.0
    extra_iterations = 0
    for _ in range(10):
        prior = Belief(rng.standard_normal(linear.n), _random_spd(rng, linear.n))
        z = rng.standard_normal(linear.k)
        expected, _ = kf_correct(prior, linear, z)
        gn, iterations = map_correct_gn(
            MapProblem(prior=prior, h=lambda x: linear.H @ x, jac_h=lambda x: linear.H, R=linear.R, z=z)
        )
        linear_gap = max(linear_gap, _max_abs(gn.x_hat, expected.x_hat), _max_abs(gn.P, expected.P))
        extra_iterations += abs(iterations - 1)

    return SuiteResult(
        suite="gn-vs-iekf",
        checks=[
            CheckResult(name="max |IEKF mean - GN mean|", value=mean_gap, threshold=GN_TOLERANCE),
            CheckResult(name="max |IEKF cov - GN cov|", value=cov_gap, threshold=GN_TOLERANCE),
            CheckResult(name="max GN gradient norm at IEKF fixed point", value=gradient, threshold=GN_TOLERANCE),
            CheckResult(name="unconverged IEKF corrections", value=unconverged, threshold=1),
            CheckResult(name="max |GN - KF| on linear h", value=linear_gap, threshold=COLLAPSE_TOLERANCE),
            CheckResult(name="GN iterations beyond 1 on linear h", value=extra_iterations, threshold=1),
        ],
    )


def random_error_state_model(rng: np.random.Generator, n: int, k: int) -> ErrorStateModel:
    """Well-conditioned random error-state model with a mildly nonlinear h.

    h(x) = A x + 0.1 sin(C x); the retraction Jacobian J is a fixed random
    near-identity matrix.
    """
    A = rng.standard_normal((k, n))
    C = rng.standard_normal((k, n))
    J = np.eye(n) + 0.2 * rng.standard_normal((n, n)) / np.sqrt(n)
    eye = np.eye(n)
    return ErrorStateModel(
        name="random",
        f_nominal=lambda x, u: x,
        h_nominal=lambda x: A @ x + 0.1 * np.sin(C @ x),
        jac_f_dx=lambda x, u: eye,
        jac_f_w=lambda x, u: eye,
        jac_h_dx=lambda x: A + 0.1 * np.cos(C @ x)[:, None] * C,
        jac_h_v=lambda x: np.eye(k),
        boxplus=lambda x, dx: x + dx,
        boxminus=lambda a, b: a - b,
        jac_retraction=lambda x_iter, x_prior: J,
        jac_reset=lambda dx: eye,
        Q=1e-2 * eye,
        R=_random_spd(rng, k),
        n=n,
        d=n,
        m=0,
        k=k,
    )


def validate_cost_vs_ieskf() -> SuiteResult:
    """Closed-form iterated error-state step against direct cost minimization."""
    rng = np.random.default_rng(VALIDATION_SEED)
    generic_gap = first_gap = 0.0
    for _ in range(RANDOM_INSTANCES):
        n, k = rng.integers(1, 6, size=2)
        m = random_error_state_model(rng, int(n), int(k))
        prior = ErrorBelief.reset(rng.standard_normal(n), _random_spd(rng, int(n)))
        z = rng.standard_normal(k)
        x_iter = prior.x_nominal + 0.3 * rng.standard_normal(n)

        closed = ieskf_step(prior, m, z, x_iter).dx
        direct = ieskf_cost_minimize(prior, m, z, x_iter)
        generic_gap = max(generic_gap, _max_abs(closed, direct))

        # At the prior the cost minimizer is the plain ESKF error estimate when J = I
        at_prior = dataclasses.replace(m, jac_retraction=lambda x_iter, x_prior: np.eye(n))
        _, diagnostics = eskf_correct(prior, at_prior, z)
        first = ieskf_cost_minimize(prior, at_prior, z, prior.x_nominal)
        first_gap = max(first_gap, _max_abs(first, diagnostics.error_mean))

    return SuiteResult(
        suite="cost-vs-ieskf",
        checks=[
            CheckResult(name="max |closed-form dx - cost minimizer|", value=generic_gap, threshold=COST_TOLERANCE),
            CheckResult(name="max |ESKF dx - cost minimizer at prior|", value=first_gap, threshold=COLLAPSE_TOLERANCE),
        ],
    )


def _collapse_gaps(s: Scenario) -> Dict[str, float]:
    traj = simulate(s)
    reference = run_filter("kf", s, traj)
    runs = {
        "ekf": run_filter("ekf", s, traj),
        "eskf": run_filter("eskf", s, traj),
    }
    for max_iters in (1, 2, 5, 20):
        cfg = IterationConfig(max_iters=max_iters)
        runs[f"iekf@{max_iters}"] = run_filter("iekf", s, traj, cfg)
        runs[f"ieskf@{max_iters}"] = run_filter("ieskf", s, traj, cfg)
    return {
        label: max(_max_abs(report.means, reference.means), _max_abs(report.covs, reference.covs))
        for label, report in runs.items()
    }


def validate_linear_collapse() -> SuiteResult:
    """Every filter reduces to the KF on linear models, step by step over 100 steps."""
    checks = []
    for model_id in ("linear-1d", "linear-cv-2d"):
        for label, gap in _collapse_gaps(_scenario(model_id, horizon=100)).items():
            checks.append(
                CheckResult(name=f"{model_id} {label} max deviation from kf", value=gap, threshold=COLLAPSE_TOLERANCE)
            )
    return SuiteResult(suite="linear-collapse", checks=checks)


def validate_jacobians() -> SuiteResult:
    """Analytic Jacobians of every built-in against central differences."""
    rng = np.random.default_rng(VALIDATION_SEED)
    checks = []
    for model_id in BUILTIN_MODELS:
        for name, error in check_model_jacobians(builtin_model(model_id), rng).items():
            checks.append(
                CheckResult(name=f"{model_id} {name} relative error", value=error, threshold=JACOBIAN_TOLERANCE)
            )
    return SuiteResult(suite="jacobians", checks=checks)


def validate_covariance_forms() -> SuiteResult:
    """Gain-form, information-form and joint-Gaussian forms of the KF agree."""
    rng = np.random.default_rng(VALIDATION_SEED)
    info_gap = woodbury_gap = marginal_gap = conditional_gap = 0.0
    for _ in range(RANDOM_INSTANCES):
        n, k = (int(d) for d in rng.integers(1, 7, size=2))
        P, R, Q = _random_spd(rng, n), _random_spd(rng, k), _random_spd(rng, n)
        H = rng.standard_normal((k, n))
        F = np.eye(n) + 0.3 * rng.standard_normal((n, n))
        B = rng.standard_normal((n, 1))
        m = LinearModel(F=F, B=B, H=H, Q=Q, R=R)
        b = Belief(rng.standard_normal(n), P)
        u, z = rng.standard_normal(1), rng.standard_normal(k)

        corrected, _ = kf_correct(b, m, z)
        info_gap = max(info_gap, _max_abs(corrected.P, information_form_covariance(P, H, R)))

        direct = np.linalg.inv(P + H.T @ R @ H)
        woodbury_gap = max(woodbury_gap, _max_abs(woodbury_inverse(P, H.T, R, H), direct))

        predicted = kf_predict(b, m, u)
        marginal = marginal_predict(b, F, B, u, Q)
        marginal_gap = max(
            marginal_gap, _max_abs(marginal.mean, predicted.x_hat), _max_abs(marginal.cov, predicted.P)
        )
        conditional = conditional_correct(b, H, R, z)
        conditional_gap = max(
            conditional_gap,
            _max_abs(conditional.mean, corrected.x_hat),
            _max_abs(conditional.cov, corrected.P),
        )
    return SuiteResult(
        suite="covariance-forms",
        checks=[
            CheckResult(name="max |(I - KH)P - (P^-1 + H^T R^-1 H)^-1|", value=info_gap, threshold=COVARIANCE_FORM_TOLERANCE),
            CheckResult(name="max |Woodbury - direct inverse|", value=woodbury_gap, threshold=WOODBURY_TOLERANCE),
            CheckResult(name="max |marginal - kf_predict|", value=marginal_gap, threshold=COLLAPSE_TOLERANCE),
            CheckResult(name="max |conditional - kf_correct|", value=conditional_gap, threshold=COLLAPSE_TOLERANCE),
        ],
    )


def scalar_gain(prior_var: float, sigma2_motion: float, sigma2_obs: float) -> float:
    """
    Kalman gain of one predict-correct cycle of the scalar filter.

    Args:
        prior_var: Variance before the predict
        sigma2_motion: Motion noise variance
        sigma2_obs: Observation noise variance

    Returns:
        The scalar gain
    """
    m = Linear1DModel(sigma2_motion=sigma2_motion, sigma2_obs=sigma2_obs)
    predicted = kf_predict(Belief([0.0], [[prior_var]]), m, [0.0])
    _, diagnostics = kf_correct(predicted, m, [0.0])
    return float(diagnostics.kalman_gain[0, 0])


def validate_gain_monotonicity() -> SuiteResult:
    """Scalar gain falls strictly with R and rises strictly with Q."""
    sweep = np.logspace(-3, 3, 13)
    gains_r = np.array([scalar_gain(1e-2, 0.5, r) for r in sweep])
    gains_q = np.array([scalar_gain(1e-2, q, 1.0) for q in sweep])
    # value < 0 means every consecutive difference has the required sign
    return SuiteResult(
        suite="gain-monotonicity",
        checks=[
            CheckResult(name="max consecutive gain change over R sweep", value=float(np.max(np.diff(gains_r))), threshold=0.0),
            CheckResult(name="max consecutive gain change over Q sweep (negated)", value=float(np.max(-np.diff(gains_q))), threshold=0.0),
            CheckResult(name="gain at R = 1e3", value=float(gains_r[-1]), threshold=1e-3),
        ],
    )


SUITES: Dict[str, Callable[[], SuiteResult]] = {
    "grid-vs-kf": validate_grid_vs_kf,
    "gn-vs-iekf": validate_gn_vs_iekf,
    "cost-vs-ieskf": validate_cost_vs_ieskf,
    "linear-collapse": validate_linear_collapse,
    "jacobians": validate_jacobians,
    "covariance-forms": validate_covariance_forms,
    "gain-monotonicity": validate_gain_monotonicity,
}

SUITE_NAMES = tuple(SUITES) + ("all",)


def run_suite(name: str) -> List[SuiteResult]:
    """
    Run one suite, or every suite for ``all``, in a fixed order.

    Args:
        name: Suite name from SUITE_NAMES

    Returns:
        One result per suite run
    """
    if name == "all":
        names = list(SUITES)
    elif name in SUITES:
        names = [name]
    else:
        raise ConfigError(f"Unknown suite '{name}'. Must be one of: {', '.join(SUITE_NAMES)}", "suite")
    results = []
    for suite in names:
        logger.info("Running validation suite %s", suite)
        result = SUITES[suite]()
        if not result.valid:
            logger.warning("Suite %s failed: %s", suite, "; ".join(result.errors))
        results.append(result)
    return results
