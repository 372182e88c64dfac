"""Request/response schemas for the HTTP service."""
from __future__ import annotations

from pydantic import BaseModel, Field

from ..pipeline import BatchConfig


class HealthResponse(BaseModel):
    status: str
    version: str


class PriorCreateRequest(BaseModel):
    config: BatchConfig


class PriorCreateResponse(BaseModel):
    prior_id: str
    config_digest: str
    header: dict


class PriorInfo(BaseModel):
    prior_id: str
    config_digest: str
    seed: int
    batch_size: int
    next_batch_index: int
    n_batches_served: int


class NextBatchResponse(BaseModel):
    """``records`` holds the batch's NDJSON lines exactly as the CLI writes
    them (canonical bytes), newline-separated."""

    batch_index: int
    n_records: int
    records: str


class ClosedResponse(BaseModel):
    prior_id: str
    closed: bool


class StabilityRequest(BaseModel):
    theta: float = Field(gt=0.0)
    dt: float = Field(gt=0.0)


class BiasRequest(BaseModel):
    theta: float = Field(gt=0.0)
    sigma: float = Field(default=1.0, gt=0.0)
    dts: list[float]
    n_mc: int = Field(default=200_000, ge=2)
    seed: int = 0
    share_noise: bool = True


class InvarianceRequest(BaseModel):
    """Scalar OU benchmark: schedule A with gap_a, schedule B with gap_b,
    compared at their shared times up to the horizon."""

    theta: float = Field(default=0.5, gt=0.0)
    sigma: float = Field(default=1.0, gt=0.0)
    gap_a: float = Field(default=1.0, gt=0.0)
    gap_b: float = Field(default=0.5, gt=0.0)
    horizon: float = Field(default=8.0, gt=0.0)
    substeps: int = Field(default=64, ge=1)
    n_checkpoints: int = Field(default=4, ge=1)
    n_mc: int = Field(default=512, ge=16)
    n_permutations: int = Field(default=200, ge=20)
    level: float = Field(default=0.01, gt=0.0, lt=1.0)
    seed: int = 0


class DivergenceRequest(BaseModel):
    theta: float = Field(gt=0.0)
    sigma: float = Field(default=1.0, gt=0.0)
    dt: float = Field(gt=0.0)
    n_obs: int = Field(default=200, ge=1)
    n_paths: int = Field(default=1000, ge=1)
    overflow_guard: float = Field(default=1e6, gt=0.0)
    seed: int = 0


class DivergenceResponse(BaseModel):
    theta: float
    dt: float
    theta_dt: float
    divergence_rate: float
    overflow_guard: float


class SaturationRequest(BaseModel):
    unstable: BatchConfig
    stable: BatchConfig
    n_batches: int = Field(default=20, ge=1)
    tiers: list[int] = [1, 8]


class SaturationResponse(BaseModel):
    rows: list[dict]
