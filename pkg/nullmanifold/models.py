from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Annotated, Any, Dict, List, Literal, Optional, Union

from nullmanifold.config import settings


# --- Robot description files ---

class OriginSpec(BaseModel):
    translation: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0], min_length=3, max_length=3)
    rotation_rpy: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0], min_length=3, max_length=3)


class JointSpec(BaseModel):
    axis: List[float] = Field(min_length=3, max_length=3)
    origin: OriginSpec = Field(default_factory=OriginSpec)


class PlanarRobotSpec(BaseModel):
    type: Literal["planar"]
    name: Optional[str] = None
    link_lengths: List[float] = Field(min_length=1)
    ready: Optional[List[float]] = None

    @field_validator("link_lengths")
    @classmethod
    def _positive_links(cls, v):
        if any(l <= 0 for l in v):
            raise ValueError("link lengths must be positive")
        return v


class ChainRobotSpec(BaseModel):
    type: Literal["chain"]
    name: Optional[str] = None
    joints: List[JointSpec] = Field(min_length=1)
    tool: OriginSpec = Field(default_factory=OriginSpec)
    ready: Optional[List[float]] = None


RobotSpec = Annotated[Union[PlanarRobotSpec, ChainRobotSpec], Field(discriminator="type")]


# --- Task files ---

TaskKind = Literal["planar_position", "planar_x", "position3", "pose6", "position_fixed_orientation"]


class PoseSpec(BaseModel):
    translation: List[float] = Field(min_length=3, max_length=3)
    rotation_rpy: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0], min_length=3, max_length=3)


class TaskSpec(BaseModel):
    kind: TaskKind
    target: Union[PoseSpec, List[float]]
    orientation: Optional[Literal["down"]] = None
    yaw: float = 0.0
    start: Optional[List[float]] = None


class FamilySpec(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    family: Literal["line", "rectangle"]
    from_: Optional[List[float]] = Field(default=None, alias="from")
    to: Optional[List[float]] = None
    min: Optional[List[float]] = None
    max: Optional[List[float]] = None
    z: Optional[float] = None
    count: int = Field(default=30, ge=2)
    counts: List[int] = Field(default_factory=lambda: [10, 20], min_length=2, max_length=2)
    orientation: Literal["down"] = "down"
    yaw: float = 0.0
    start: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check_geometry(self):
        if self.family == "line":
            if self.from_ is None or self.to is None:
                raise ValueError("line family needs 'from' and 'to'")
            if len(self.from_) != len(self.to):
                raise ValueError("'from' and 'to' must have the same length")
            if self.from_ == self.to:
                raise ValueError("line family endpoints must differ")
        else:
            if self.min is None or self.max is None:
                raise ValueError("rectangle family needs 'min' and 'max'")
            if len(self.min) != 2 or len(self.max) != 2:
                raise ValueError("rectangle bounds are [x, y] pairs")
            if not all(lo < hi for lo, hi in zip(self.min, self.max)):
                raise ValueError("rectangle bounds must satisfy min < max")
            if any(c < 2 for c in self.counts):
                raise ValueError("rectangle counts must be >= 2")
        return self


# --- Parameters ---

class TraversalParams(BaseModel):
    beta: float = Field(default=0.5, gt=0)
    eps_proj: float = Field(default=settings.EPS_PROJ, gt=0)
    gamma: float = Field(default=settings.GAMMA, gt=1)
    max_steps: int = Field(default=settings.MAX_STEPS, ge=1)
    max_proj_iters: int = Field(default=10, ge=1)
    max_newton_iters: int = Field(default=50, ge=1)
    termination_skip: int = Field(default=3, ge=1)
    null_space_tol: float = Field(default=1e-8, gt=0)
    seed: int = 0
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check_box(self):
        if (self.lower is None) != (self.upper is None):
            raise ValueError("joint box needs both lower and upper")
        if self.lower is not None:
            if len(self.lower) != len(self.upper) or not all(a < b for a, b in zip(self.lower, self.upper)):
                raise ValueError("joint box must satisfy lower < upper per joint")
        return self


class CoverageParams(BaseModel):
    spacing: float = Field(default=0.05, gt=0)
    epsilon: float = Field(default=0.5, gt=0)
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None
    mc_points: int = Field(default=10**6, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_bounds(self):
        if (self.lower is None) != (self.upper is None):
            raise ValueError("coverage bounds need both lower and upper")
        if self.lower is not None and not all(a < b for a, b in zip(self.lower, self.upper)):
            raise ValueError("coverage bounds must be nonempty")
        return self


class GpSettings(BaseModel):
    lengthscale: float = Field(default=settings.LENGTHSCALE, gt=0)
    noise: float = Field(default=settings.NOISE, ge=0)
    threshold: float = Field(default=settings.THRESHOLD, gt=0, lt=1)


# --- Files written by the library ---

class SampleMetadata(BaseModel):
    method: Literal["newton", "zigzag", "random_ik"]
    beta: Optional[float] = None
    n_joints: int
    count: int
    family_dim: int = 0
    sampling_time_ms: float
    complete: bool = True
    warnings: List[str] = []
    seed: Optional[int] = None
    robot: Optional[str] = None
    task: Optional[str] = None


class ModelFile(BaseModel):
    lengthscale: float = Field(gt=0)
    noise: float = Field(ge=0)
    threshold: float = Field(gt=0, lt=1)
    points: List[List[float]] = Field(min_length=1)
    alpha: List[float] = Field(min_length=1)
    jitter: float = 0.0

    @model_validator(mode="after")
    def _check_shapes(self):
        if len(self.points) != len(self.alpha):
            raise ValueError("points and alpha must have the same length")
        if len({len(p) for p in self.points}) != 1:
            raise ValueError("all points must have the same dimension")
        return self


# --- Benchmarks ---

class MethodSpec(BaseModel):
    method: Literal["newton", "zigzag", "random_ik"]
    beta: List[float] = []
    n: List[int] = []

    @field_validator("method", mode="before")
    @classmethod
    def _normalize(cls, v):
        return v.replace("-", "_") if isinstance(v, str) else v

    @model_validator(mode="after")
    def _check_grid(self):
        if self.method == "random_ik" and any(n < 1 for n in self.n):
            raise ValueError("random_ik sample counts must be >= 1")
        if self.method != "random_ik" and any(b <= 0 for b in self.beta):
            raise ValueError("beta values must be positive")
        return self


class BenchCase(BaseModel):
    name: str
    robot: str
    task: str
    methods: List[MethodSpec] = []
    build_model: bool = False
    coverage: bool = True
    rmse_oracle_n: int = Field(default=0, ge=0)
    # None: no restarts for single tasks, settings.FAMILY_RESTARTS for families
    restarts: Optional[int] = Field(default=None, ge=0)
    # overrides the config-wide GP settings for this case
    gp: Optional[GpSettings] = None
    params: Dict[str, Any] = {}


class BenchConfig(BaseModel):
    cases: List[BenchCase] = []
    coverage: CoverageParams = Field(default_factory=CoverageParams)
    gp: GpSettings = Field(default_factory=GpSettings)
    seed: int = 0
    parallel: bool = False


class BenchRow(BaseModel):
    case: str
    method: str
    beta: Optional[float] = None
    n: Optional[int] = None
    samples: Optional[int] = None
    sampling_time_ms: Optional[float] = None
    coverage_volume: Optional[float] = None
    coverage_stderr: Optional[float] = None
    mean_residual: Optional[float] = None
    residual_rmse: Optional[float] = None
    build_time_ms: Optional[float] = None
    distance_rmse: Optional[float] = None
    error: Optional[str] = None


class BenchReport(BaseModel):
    rows: List[BenchRow] = []
    timing: bool = True
