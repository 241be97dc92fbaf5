"""
Pydantic models and schemas for scenario documents and run reports.
"""
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, field_validator, model_validator

from filterlab.core.filters import IterationConfig
from filterlab.core.models import BUILTIN_MODELS

SCHEMA_VERSION = 1
MAX_SEED = 2**64

FILTER_KINDS = ("kf", "kf1d", "ekf", "iekf", "eskf", "ieskf", "dead-reckoning")

DEFAULT_FILTERS = {
    "linear-1d": "kf",
    "linear-cv-2d": "kf",
    "range-bearing-2d": "ekf",
    "heading-robot-se2-lite": "eskf",
}


def check_filter_kind(kind: str) -> str:
    if kind not in FILTER_KINDS:
        raise ValueError(f"Invalid filter kind '{kind}'. Must be one of: {', '.join(FILTER_KINDS)}")
    return kind


class StrictDocument(BaseModel):
    """Base for every section of a scenario document."""

    model_config = ConfigDict(extra="forbid", allow_inf_nan=False, frozen=True)


class ModelParams(StrictDocument):
    """Model parameters; anything omitted takes the built-in default."""

    dt: Optional[float] = Field(default=None, gt=0, description="Time step in seconds")
    motion_noise: Optional[List[NonNegativeFloat]] = Field(
        default=None, description="Per-component motion noise variances"
    )
    obs_noise: Optional[List[NonNegativeFloat]] = Field(
        default=None, description="Observation noise variances"
    )
    landmarks: Optional[List[Tuple[float, float]]] = None


class ModelSection(StrictDocument):
    """Built-in model selection."""

    id: str
    params: ModelParams = ModelParams()

    @field_validator("id")
    @classmethod
    def check_model_id(cls, value: str) -> str:
        if value not in BUILTIN_MODELS:
            raise ValueError(f"Unknown model '{value}'. Must be one of: {', '.join(BUILTIN_MODELS)}")
        return value


class ControlSchedule(StrictDocument):
    """Either one control applied at every step or an explicit per-step list."""

    constant: Optional[List[float]] = None
    steps: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def check_exactly_one(self) -> "ControlSchedule":
        if (self.constant is None) == (self.steps is None):
            raise ValueError("give exactly one of 'constant' or 'steps'")
        return self


class InitialBelief(StrictDocument):
    """x_hat_0 and P_0; defaults are the zero vector and 1e-2 * I."""

    mean: Optional[List[float]] = None
    cov_diag: Optional[List[NonNegativeFloat]] = None
    cov: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def check_single_covariance(self) -> "InitialBelief":
        if self.cov_diag is not None and self.cov is not None:
            raise ValueError("give at most one of 'cov_diag' or 'cov'")
        return self


class FilterSection(StrictDocument):
    """Filter selection for the run subcommand."""

    kind: Optional[str] = None
    iteration: IterationConfig = IterationConfig()

    @field_validator("kind")
    @classmethod
    def check_kind(cls, value: Optional[str]) -> Optional[str]:
        return None if value is None else check_filter_kind(value)


class ScenarioDocument(StrictDocument):
    """Top-level scenario document."""

    schema_version: int
    model: ModelSection
    horizon: int = Field(..., ge=1)
    seed: int = Field(..., ge=0, lt=MAX_SEED)
    controls: Optional[ControlSchedule] = None
    initial_belief: InitialBelief = InitialBelief()
    initial_state: Optional[List[float]] = Field(
        default=None, description="Truth x_0; drawn from the initial belief when omitted"
    )
    filter: FilterSection = FilterSection()
    compare: List[str] = Field(default_factory=list)

    @field_validator("schema_version")
    @classmethod
    def check_schema_version(cls, value: int) -> int:
        if value != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {value}; expected {SCHEMA_VERSION}")
        return value

    @field_validator("compare")
    @classmethod
    def check_compare_kinds(cls, value: List[str]) -> List[str]:
        for kind in value:
            check_filter_kind(kind)
        return value

    @property
    def filter_kind(self) -> str:
        return self.filter.kind or DEFAULT_FILTERS[self.model.id]


class ReportRow(BaseModel):
    """One CSV row: a filter's posterior at one step."""

    step: int = Field(..., ge=1)
    filter: str
    x_hat: List[float]
    P_diag: List[float]
    nees: float = Field(..., ge=0)
    iterations: int = Field(..., ge=0)
    innovation_norm: float = Field(..., ge=0)


class RunSummary(BaseModel):
    """Aggregate metrics of one filter run."""

    filter: str
    steps: int
    rmse: List[float]
    mean_nees: float
    mean_iterations: float
    converged_fraction: float = Field(..., ge=0, le=1)


class SummaryFile(BaseModel):
    """Sidecar JSON written next to run and compare CSVs."""

    model: str
    seed: int
    horizon: int
    runs: List[RunSummary]
