"""HTTP service wrapping the engine.

Prior handles are server-side sessions: creating one registers a validated
config, ``next`` serves consecutive batches, and batches are also addressable
by index (stateless, identical bytes). Record payloads for batch endpoints
are returned as canonical NDJSON text so that what a client writes to disk is
byte-identical to the CLI's local export.
"""
from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse

from .. import __version__
from ..analysis import (
    em_bias_curve,
    ou_divergence_rate,
    saturation_study,
    scalar_ou_spec,
    schedule_invariance_test,
    stability_report,
)
from ..errors import ConfigurationError, ContractViolation
from ..pipeline import BatchConfig, batch_record_lines, config_digest
from ..records import canonical_json, make_header
from ..schedule import sample_schedule
from ..rng import RngStream
from .models import (
    BiasRequest,
    ClosedResponse,
    DivergenceRequest,
    DivergenceResponse,
    HealthResponse,
    InvarianceRequest,
    NextBatchResponse,
    PriorCreateRequest,
    PriorCreateResponse,
    PriorInfo,
    SaturationRequest,
    SaturationResponse,
    StabilityRequest,
)


@dataclass
class _PriorSession:
    prior_id: str
    config: BatchConfig
    digest: str
    next_index: int = 0
    served: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


def create_app() -> FastAPI:
    app = FastAPI(title="ctprior", version=__version__)
    priors: dict[str, _PriorSession] = {}
    registry_lock = threading.Lock()

    def get_prior(prior_id: str) -> _PriorSession:
        session = priors.get(prior_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"no open prior {prior_id!r}")
        return session

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/priors", response_model=PriorCreateResponse, status_code=201)
    def create_prior(req: PriorCreateRequest) -> PriorCreateResponse:
        digest = config_digest(req.config)
        prior_id = uuid.uuid4().hex[:12]
        with registry_lock:
            priors[prior_id] = _PriorSession(prior_id=prior_id, config=req.config, digest=digest)
        return PriorCreateResponse(
            prior_id=prior_id, config_digest=digest,
            header=make_header(digest, req.config.seed))

    @app.get("/priors/{prior_id}", response_model=PriorInfo)
    def prior_info(prior_id: str) -> PriorInfo:
        s = get_prior(prior_id)
        return PriorInfo(
            prior_id=s.prior_id, config_digest=s.digest, seed=s.config.seed,
            batch_size=s.config.batch_size, next_batch_index=s.next_index,
            n_batches_served=s.served)

    @app.get("/priors/{prior_id}/header", response_class=PlainTextResponse)
    def prior_header(prior_id: str) -> str:
        s = get_prior(prior_id)
        return canonical_json(make_header(s.digest, s.config.seed)) + "\n"

    @app.get("/priors/{prior_id}/batches/{index}", response_class=PlainTextResponse)
    def batch_by_index(prior_id: str, index: int) -> str:
        s = get_prior(prior_id)
        if index < 0:
            raise HTTPException(status_code=422, detail="batch index must be >= 0")
        try:
            lines = batch_record_lines(s.config, index)
        except ConfigurationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return "\n".join(lines) + "\n"

    @app.post("/priors/{prior_id}/next", response_model=NextBatchResponse)
    def next_batch(prior_id: str) -> NextBatchResponse:
        s = get_prior(prior_id)
        with s.lock:
            index = s.next_index
            s.next_index += 1
            s.served += 1
        lines = batch_record_lines(s.config, index)
        return NextBatchResponse(batch_index=index, n_records=len(lines),
                                 records="\n".join(lines) + "\n")

    @app.delete("/priors/{prior_id}", response_model=ClosedResponse)
    def close_prior(prior_id: str) -> ClosedResponse:
        with registry_lock:
            session = priors.pop(prior_id, None)
        if session is None:
            raise HTTPException(status_code=404, detail=f"no open prior {prior_id!r}")
        return ClosedResponse(prior_id=prior_id, closed=True)

    @app.post("/analyses/stability")
    def analyse_stability(req: StabilityRequest) -> dict:
        return stability_report(req.theta, req.dt).to_dict()

    @app.post("/analyses/bias")
    def analyse_bias(req: BiasRequest) -> dict:
        points = em_bias_curve(req.theta, req.sigma, req.dts, n_mc=req.n_mc,
                               seed=req.seed, share_noise=req.share_noise)
        return {"theta": req.theta, "sigma": req.sigma, "points": points}

    @app.post("/analyses/invariance")
    def analyse_invariance(req: InvarianceRequest) -> dict:
        spec = scalar_ou_spec(req.theta, req.sigma)
        rng_a = RngStream(req.seed).child("sched-a")
        rng_b = RngStream(req.seed).child("sched-b")
        sched_a = sample_schedule("regular", req.horizon, req.gap_a, 0.0, rng_a)
        sched_b = sample_schedule("regular", req.horizon, req.gap_b, 0.0, rng_b)
        shared = sorted(set(sched_a.times.tolist()) & set(sched_b.times.tolist()))
        if not shared:
            raise HTTPException(status_code=422,
                                detail="schedules share no checkpoint times")
        checkpoints = shared[-req.n_checkpoints:]
        try:
            report = schedule_invariance_test(
                spec, req.substeps, sched_a, sched_b, checkpoints,
                n_mc=req.n_mc, seed=req.seed, level=req.level,
                n_permutations=req.n_permutations)
        except ContractViolation as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return report.to_dict()

    @app.post("/analyses/divergence", response_model=DivergenceResponse)
    def analyse_divergence(req: DivergenceRequest) -> DivergenceResponse:
        rate = ou_divergence_rate(req.theta, req.sigma, req.dt, req.n_obs,
                                  req.n_paths, seed=req.seed,
                                  overflow_guard=req.overflow_guard)
        return DivergenceResponse(theta=req.theta, dt=req.dt, theta_dt=req.theta * req.dt,
                                  divergence_rate=rate, overflow_guard=req.overflow_guard)

    @app.post("/analyses/saturation", response_model=SaturationResponse)
    def analyse_saturation(req: SaturationRequest) -> SaturationResponse:
        rows = saturation_study(req.unstable, req.stable, req.n_batches,
                                tiers=tuple(req.tiers))
        return SaturationResponse(rows=rows)

    return app
