"""Request and response schemas for the service endpoints.

Matrices travel as row-major nested lists; kernel and density specs are the
same JSON records the CLI reads from disk.  Every response echoes the fully
resolved request under ``config`` together with a format-version tag.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

KernelKind = Literal[
    "gaussian", "epanechnikov", "higher_order4", "product_of_1d", "spike_train"
]


class KernelSpec(BaseModel):
    kind: KernelKind
    dim: int = Field(ge=1, le=10)
    params: dict = Field(default_factory=dict)


class MixtureComponent(BaseModel):
    weight: float = Field(gt=0)
    mean: list[float]
    cov: list[list[float]]


class DensitySpec(BaseModel):
    kind: Literal["gaussian_mixture", "far_mass"]
    dim: int = Field(ge=1, le=10)
    components: Optional[list[MixtureComponent]] = None
    max_deriv_order: int = 6
    far_direction: Optional[list[float]] = None
    far_radius: float = 1.05
    shell_width: float = 0.05
    inner_sigma: Optional[float] = None
    inner_mass: float = 0.5

    def to_core_json(self) -> dict:
        out: dict = {"kind": self.kind, "dim": self.dim}
        if self.kind == "gaussian_mixture":
            out["components"] = [c.model_dump() for c in self.components or []]
            out["max_deriv_order"] = self.max_deriv_order
        else:
            out.update(
                far_direction=self.far_direction,
                far_radius=self.far_radius,
                shell_width=self.shell_width,
                inner_sigma=self.inner_sigma,
                inner_mass=self.inner_mass,
            )
        return out


class QuadOptions(BaseModel):
    rel_tol: Optional[float] = Field(default=None, gt=0)
    abs_tol: Optional[float] = Field(default=None, gt=0)
    max_depth: int = Field(default=40, ge=1, le=60)


class RunOptions(BaseModel):
    seed: int = 0
    threads: int = Field(default=1, ge=1, le=256)
    quad: QuadOptions = Field(default_factory=QuadOptions)


# -- kernel-info --------------------------------------------------------------


class KernelInfoRequest(RunOptions):
    kernel: KernelSpec
    j_max: int = Field(default=8, ge=0, le=8)
    envelope_radii: Optional[list[float]] = None
    verify_order_v: Optional[int] = Field(default=None, ge=1, le=6)


class MomentEntry(BaseModel):
    j: int
    value: float
    converged: bool


class EnvelopeSample(BaseModel):
    r: float
    psi: float


class OrderCheckEntry(BaseModel):
    alpha: list[int]
    value: float
    passed: bool


class OrderReportModel(BaseModel):
    order: int
    unit_mass: float
    unit_mass_ok: bool
    checks: list[OrderCheckEntry]
    verified: bool


class KernelInfoResponse(BaseModel):
    format_version: str
    command: Literal["kernel-info"] = "kernel-info"
    config: dict
    kernel: KernelSpec
    moments: list[MomentEntry]
    envelope: list[EnvelopeSample]
    order_report: Optional[OrderReportModel] = None


# -- estimate -----------------------------------------------------------------


class EstimateRequest(RunOptions):
    kernel: KernelSpec
    bandwidth: list[list[float]]
    samples: list[list[float]] = Field(min_length=1)
    queries: list[list[float]] = Field(min_length=1)


class EstimateResponse(BaseModel):
    format_version: str
    command: Literal["estimate"] = "estimate"
    config: dict
    values: list[float]


# -- bias-report ---------------------------------------------------------------


class BiasReportRequest(RunOptions):
    kernel: KernelSpec
    density: DensitySpec
    bandwidths: list[list[list[float]]] = Field(min_length=1)
    queries: list[list[float]] = Field(min_length=1)
    k: int = Field(default=2, ge=0, le=6)
    delta: Optional[float] = Field(default=None, gt=0)


class BiasReportRow(BaseModel):
    x_query: list[float]
    h_entries: list[list[float]]
    h_norm: float
    h_det: float
    k: int
    exact_bias: float
    moment_terms: list[float]
    empirical_remainder: float
    delta_used: float
    tail_term: float
    taylor_term: float
    bound_total: float
    bound_times_hk: float
    bound_satisfied: bool
    remainder_over_hk: float
    remainder_over_h2: float
    margin_ratio: float


class BiasReportResponse(BaseModel):
    format_version: str
    command: Literal["bias-report"] = "bias-report"
    config: dict
    reports: list[BiasReportRow]
    all_bounds_satisfied: bool


# -- bias-scaling ----------------------------------------------------------------


class BiasScalingRequest(RunOptions):
    kernel: KernelSpec
    density: DensitySpec
    queries: list[list[float]] = Field(min_length=1)
    h_values: list[float] = Field(min_length=2)


class ScalingPointRow(BaseModel):
    h_value: float
    bias: float
    included: bool


class BiasScalingPerQuery(BaseModel):
    x_query: list[float]
    slope: float
    intercept: float
    points: list[ScalingPointRow]


class BiasScalingResponse(BaseModel):
    format_version: str
    command: Literal["bias-scaling"] = "bias-scaling"
    config: dict
    per_query: list[BiasScalingPerQuery]


# -- mse-scaling -----------------------------------------------------------------


class MseScalingRequest(RunOptions):
    kernel: KernelSpec
    density: DensitySpec
    query: list[float]
    n_values: list[int] = Field(min_length=2)
    replicates: int = Field(default=200, ge=1)
    bandwidth_constant: float = 1.06


class MsePointRow(BaseModel):
    n: int
    mse: float
    mean_h: float


class MseScalingResponse(BaseModel):
    format_version: str
    command: Literal["mse-scaling"] = "mse-scaling"
    config: dict
    slope: float
    intercept: float
    points: list[MsePointRow]


# -- blowup-demo -------------------------------------------------------------------


class BlowupRequest(RunOptions):
    p: float = Field(ge=0)
    ell: int = Field(default=0, ge=0)
    dim: int = Field(default=1, ge=1, le=2)
    schedule: Literal["balanced", "unbalanced"] = "balanced"
    eps_start: float = Field(default=0.5, gt=0, lt=1)
    eps_steps: int = Field(default=6, ge=2, le=16)
    eps_ratio: float = Field(default=0.5, gt=0, lt=1)
    far_radius: float = Field(default=1.05, ge=1.0)
    n_max: int = Field(default=10_000, ge=2)


class BlowupStepRow(BaseModel):
    eps: float
    eigenvalues: list[float]
    n_star: int
    bump_center_radius: float
    bump_radius: float
    value: float
    error_estimate: float
    converged: bool
    predicted: float
    floor: float


class BlowupResponse(BaseModel):
    format_version: str
    command: Literal["blowup-demo"] = "blowup-demo"
    config: dict
    fitted_slope: float
    predicted_slope: float
    normalization_c: float
    steps: list[BlowupStepRow]


# -- moments ----------------------------------------------------------------------


class MomentsRequest(RunOptions):
    p: float = Field(ge=0)
    ell: int = Field(default=2, ge=0)
    dim: int = Field(default=1, ge=1, le=3)
    n_max: int = Field(default=10_000, ge=2)
    j_max: Optional[int] = Field(default=None, ge=0)


class MomentsResponse(BaseModel):
    format_version: str
    command: Literal["moments"] = "moments"
    config: dict
    normalization_c: float
    rows: list[MomentEntry]


class HealthResponse(BaseModel):
    status: str
    format_version: str


class ErrorBody(BaseModel):
    error_kind: Literal["input", "numerical"]
    detail: str
