from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# ---------------------------------------------
# Configuration models
# ---------------------------------------------

class SceneObject(BaseModel):
    model_config = ConfigDict(extra="forbid")

    start: Tuple[float, float] = Field(..., description="Start position of the object center (px)")
    velocity: Tuple[float, float] = Field((0.0, 0.0), description="Velocity of the center (px/s)")
    radius: float = Field(3.0, ge=0, description="Shape radius (px)")
    rate: float = Field(2000.0, ge=0, description="Event rate (events/s)")


class SceneSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    objects: List[SceneObject] = Field(default_factory=list, description="Moving objects")
    noise_rate: float = Field(0.0, ge=0, description="Uniform background events per second")
    duration: float = Field(..., description="Scene duration (s)")
    seed: int = Field(0, description="Generator seed")
    width: int = Field(128, ge=1, description="Sensor width (px)")
    height: int = Field(128, ge=1, description="Sensor height (px)")

    @field_validator("duration")
    def validate_duration(cls, value):
        if not value > 0:
            raise ValueError("duration must be positive.")
        return value


class SamplingConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    k: int = Field(4, ge=1, description="Neighbor count for the density estimate")
    epsilon: float = Field(1e-3, gt=0, description="Density stabilizer")
    alpha: float = Field(10.0, gt=0, description="Sigmoid sensitivity")
    beta: float = Field(0.05, description="Motion-intensity bias (normalized time squared)")
    seed: int = Field(0, description="Bernoulli retention seed")
    spatial_time_scale: Optional[float] = Field(
        None, gt=0, description="px per microsecond; defaults to sensor diagonal / window length"
    )
    mode: Literal["adaptive", "uniform"] = Field("adaptive", description="Sampling strategy")
    uniform_rate: float = Field(0.5, ge=0, le=1, description="Retention rate of uniform sampling")


class MvfConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sigma_v: float = Field(0.75, gt=0, description="Direction tolerance")
    sigma_s: float = Field(2.0, gt=0, description="Intensity tolerance (px)")
    gamma: float = Field(0.5, description="Hyperedge threshold")
    candidate_k: int = Field(8, ge=1, description="Neighbors scored per event")

    @field_validator("gamma")
    def validate_gamma(cls, value):
        if not 0 < value < 1:
            raise ValueError("gamma must lie in (0, 1).")
        return value


class NetworkConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    euclidean_widths: List[int] = Field([16], description="Output widths of the Euclidean GCN layers")
    hyperbolic_widths: List[int] = Field([16, 16], description="Output widths of the hyperbolic GCN layers")
    input_dim: int = Field(4, ge=1, description="Node feature width")
    initial_c: float = Field(1.0, gt=0, description="Initial curvature magnitude of every layer")
    learning_rate: float = Field(0.02, ge=0, description="Learning rate for all parameters, curvature included")
    num_classes: int = Field(3, ge=2, description="Number of window classes")
    seed: int = Field(0, description="Weight initialization seed")
    aggregation_source: Literal["pairwise", "hypergraph", "both"] = Field(
        "both", description="Structure feeding the hyperbolic aggregation"
    )
    activation: Literal["relu", "identity", "tanh"] = Field("relu", description="Activation of every layer")
    geometry: Literal["dual", "euclidean"] = Field("dual", description="Dual-space or pure Euclidean stack")
    fusion: bool = Field(False, description="Moebius neighbor fusion after each hyperbolic layer")
    optimizer: Literal["sgd", "adam"] = Field("adam", description="Optimizer for weights and biases")
    phase1_steps: int = Field(150, ge=0, description="Euclidean-only steps")
    phase2_steps: int = Field(150, ge=0, description="Steps with hyperbolic layers and curvatures unfrozen")
    c_min: float = Field(1e-4, gt=0, description="Curvature floor")
    learn_curvature: bool = Field(True, description="Update curvatures during phase 2")
    log_every: int = Field(25, ge=1, description="Training log interval (steps)")

    @field_validator("euclidean_widths", "hyperbolic_widths")
    def validate_widths(cls, value):
        if not value:
            raise ValueError("at least one layer of each kind is required.")
        if any(width < 1 for width in value):
            raise ValueError("layer widths must be >= 1.")
        return value


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(0, description="Global seed, split into component seeds")
    window_us: int = Field(50_000, description="Window length in microseconds")
    graph_k: int = Field(4, ge=1, description="Neighbor count of the pairwise graph")
    sampling: SamplingConfig = Field(default_factory=SamplingConfig)
    mvf: MvfConfig = Field(default_factory=MvfConfig)
    network: NetworkConfig = Field(default_factory=NetworkConfig)

    @field_validator("window_us")
    def validate_window(cls, value):
        if value <= 0:
            raise ValueError("window_us must be positive.")
        return value


class WindowStats(BaseModel):
    num_nodes: int = Field(..., ge=0)
    pairwise_nnz: int = Field(0, ge=0, description="Non-zeros of the pairwise aggregation matrix")
    hypergraph_nnz: int = Field(0, ge=0, description="Non-zeros of the hypergraph aggregation matrix")
    num_hyperedges: int = Field(0, ge=0)


# ---------------------------------------------
# Emitted records
# ---------------------------------------------

class EventRecord(BaseModel):
    x: int = Field(..., ge=0)
    y: int = Field(..., ge=0)
    t: int = Field(..., ge=0)
    p: int

    @field_validator("p")
    def validate_polarity(cls, value):
        if value not in (-1, 1):
            raise ValueError("polarity must be -1 or +1.")
        return value


class SampleDiagnostic(BaseModel):
    window: int
    index: int
    t: int
    density: float
    probability: float
    kept: bool


class HypergraphHeader(BaseModel):
    window: int
    num_vertices: int
    num_hyperedges: int
    gamma: float
    sigma_v: float
    sigma_s: float


class HyperedgeRecord(BaseModel):
    window: int
    vertices: List[int]


class HypergraphStats(BaseModel):
    num_windows: int
    num_vertices: int
    num_hyperedges: int
    size_histogram: Dict[str, int]
    purity: Optional[float] = None


class FlopEntry(BaseModel):
    layer: str
    op: str
    flops: int


class FlopReport(BaseModel):
    total: int
    per_event: float
    parameters: int
    per_layer: Dict[str, int]
    entries: List[FlopEntry]


class TraceRow(BaseModel):
    step: int
    phase: int
    loss: float
    accuracy: float
    curvatures: List[float]


class EvalMetrics(BaseModel):
    split: str
    num_windows: int
    num_empty: int
    accuracy: float
    max_events: Optional[int] = None


class ManifestRecord(BaseModel):
    file: str
    label: int = Field(..., ge=0)
    split: Literal["train", "test"]
    t_start: int = Field(0, ge=0)
    t_end: int
    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)

    @model_validator(mode="after")
    def validate_bounds(self):
        if self.t_end <= self.t_start:
            raise ValueError("t_end must exceed t_start.")
        return self


class Checkpoint(BaseModel):
    version: str
    config: NetworkConfig
    state: Dict[str, List[float]]
    shapes: Dict[str, List[int]]


class AblationRow(BaseModel):
    adaptive_sampling: bool
    motion_hypergraph: bool
    hyperbolic_embedding: bool
    mean_accuracy: float
    accuracies: List[float]
