"""Drift/diffusion mechanisms for temporal structural causal models.

Every variable v follows

    dX_v = mu_v(X) dt + sigma_v dW_v

where the drift is mean-reverting plus a parent coupling term. Two families:

- linear:  mu_v = -theta_v X_v + sum_u w_vu X_u          (u over parents)
- neural:  mu_v = -theta_v X_v + s_v tanh(MLP(z)),  z = [X_v, parents]

The MLP has one tanh hidden layer; the outer tanh and the gain s_v keep the
nonlinear term bounded in [-s_v, s_v] so trajectories cannot blow up through
the coupling alone.

A spec optionally carries regime banks: R full (drifts, sigmas) sets plus a
row-stochastic transition matrix. Bank 0 is the spec's own drifts/sigmas.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from pydantic import ConfigDict, BaseModel, Field, model_validator

from .dists import LogNormalDist, ScalarDist, UniformDist, strictly_positive
from .errors import ConfigurationError, ContractViolation
from .graph import Dag
from .rng import RngStream

__all__ = [
    "LinearDrift",
    "NeuralDrift",
    "DriftBank",
    "RegimeSpec",
    "TscmSpec",
    "MechanismConfig",
    "RegimeConfig",
    "sample_tscm",
    "sample_regime_spec",
    "attach_regimes",
    "drift",
    "spec_fingerprint",
]


@dataclass(frozen=True)
class LinearDrift:
    theta: float
    parents: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "parents", np.asarray(self.parents, dtype=np.int64))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        if self.parents.shape != self.weights.shape:
            raise ContractViolation("one weight per parent required")
        if self.theta <= 0.0:
            raise ContractViolation(f"mean reversion must be positive, got {self.theta}")


@dataclass(frozen=True)
class NeuralDrift:
    theta: float
    parents: np.ndarray
    gain: float
    w1: np.ndarray  # (width, 1 + n_parents)
    b1: np.ndarray  # (width,)
    w2: np.ndarray  # (width,)
    b2: float

    def __post_init__(self):
        object.__setattr__(self, "parents", np.asarray(self.parents, dtype=np.int64))
        for name in ("w1", "b1", "w2"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        width = self.b1.size
        if self.w1.shape != (width, 1 + self.parents.size) or self.w2.shape != (width,):
            raise ContractViolation("MLP weight shapes inconsistent with parent count")
        if self.theta <= 0.0:
            raise ContractViolation(f"mean reversion must be positive, got {self.theta}")


Drift = Union[LinearDrift, NeuralDrift]


@dataclass(frozen=True)
class DriftBank:
    drifts: tuple
    sigmas: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "drifts", tuple(self.drifts))
        object.__setattr__(self, "sigmas", np.asarray(self.sigmas, dtype=np.float64))
        if len(self.drifts) != self.sigmas.size:
            raise ContractViolation("one sigma per variable required")
        if np.any(self.sigmas < 0.0):
            raise ContractViolation("sigmas must be non-negative")


@dataclass(frozen=True)
class RegimeSpec:
    """R mechanism banks plus a row-stochastic transition matrix."""

    banks: tuple
    transition: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "banks", tuple(self.banks))
        trans = np.asarray(self.transition, dtype=np.float64)
        object.__setattr__(self, "transition", trans)
        r = len(self.banks)
        if r < 2:
            raise ContractViolation("regime switching needs at least 2 banks")
        if trans.shape != (r, r) or np.any(trans < 0.0):
            raise ContractViolation(f"transition must be a non-negative ({r},{r}) matrix")
        if not np.allclose(trans.sum(axis=1), 1.0, atol=1e-9):
            raise ContractViolation("transition rows must sum to 1")

    @property
    def n_regimes(self) -> int:
        return len(self.banks)


@dataclass(frozen=True)
class _BankArrays:
    """Dense evaluation cache for one bank: mu = -theta*x + x @ coupling.T
    plus per-variable MLP terms."""

    theta: np.ndarray
    coupling: np.ndarray  # (N, N), row v holds w_vu at parent columns, zero diagonal
    sigmas: np.ndarray
    neurals: tuple  # (v, z_index, gain, w1, b1, w2, b2) per neural variable


@dataclass(frozen=True)
class TscmSpec:
    """A sampled model: graph, one drift per variable, diffusion scales, and
    optional regime banks (bank 0 aliases ``drifts``/``sigmas``)."""

    dag: Dag
    drifts: tuple
    sigmas: np.ndarray
    regimes: RegimeSpec | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "drifts", tuple(self.drifts))
        object.__setattr__(self, "sigmas", np.asarray(self.sigmas, dtype=np.float64))
        n = self.dag.n_vars
        if len(self.drifts) != n or self.sigmas.size != n:
            raise ContractViolation("need one drift and one sigma per variable")
        for v, d in enumerate(self.drifts):
            if not np.array_equal(d.parents, self.dag.parents(v)):
                raise ContractViolation(f"drift {v} disagrees with graph parents")
        if self.regimes is not None:
            for bank in self.regimes.banks:
                if len(bank.drifts) != n:
                    raise ContractViolation("regime bank size disagrees with graph")

    @property
    def n_vars(self) -> int:
        return self.dag.n_vars

    @property
    def n_regimes(self) -> int:
        return 1 if self.regimes is None else self.regimes.n_regimes

    def bank(self, regime: int) -> DriftBank:
        if self.regimes is None:
            if regime != 0:
                raise ContractViolation(f"spec has no regimes, asked for bank {regime}")
            return DriftBank(drifts=self.drifts, sigmas=self.sigmas)
        return self.regimes.banks[regime]

    def bank_arrays(self, regime: int = 0) -> _BankArrays:
        cached = self._cache.get(regime)
        if cached is None:
            cached = _build_bank_arrays(self.bank(regime), self.n_vars)
            self._cache[regime] = cached
        return cached

    @property
    def is_linear(self) -> bool:
        return all(isinstance(d, LinearDrift) for d in self.drifts) and (
            self.regimes is None
            or all(isinstance(d, LinearDrift) for b in self.regimes.banks for d in b.drifts)
        )


def _build_bank_arrays(bank: DriftBank, n: int) -> _BankArrays:
    theta = np.array([d.theta for d in bank.drifts], dtype=np.float64)
    coupling = np.zeros((n, n), dtype=np.float64)
    neurals = []
    for v, d in enumerate(bank.drifts):
        if isinstance(d, LinearDrift):
            coupling[v, d.parents] = d.weights
        else:
            z_index = np.concatenate(([v], d.parents)).astype(np.int64)
            neurals.append((v, z_index, d.gain, d.w1, d.b1, d.w2, d.b2))
    return _BankArrays(theta=theta, coupling=coupling, sigmas=bank.sigmas, neurals=tuple(neurals))


def drift(spec: TscmSpec, state: np.ndarray, regime: int = 0) -> np.ndarray:
    """Evaluate the drift vector field at ``state``.

    Accepts a single state (N,) or a batch (..., N). The linear part is
    evaluated as ``-theta * x + x @ coupling.T`` in exactly this order; tests
    that replay the recursion must use the same expression to compare bits.
    """
    arrays = spec.bank_arrays(regime)
    state = np.asarray(state, dtype=np.float64)
    if state.shape[-1] != spec.n_vars:
        raise ContractViolation(f"state has {state.shape[-1]} vars, spec has {spec.n_vars}")
    mu = -arrays.theta * state + state @ arrays.coupling.T
    for v, z_index, gain, w1, b1, w2, b2 in arrays.neurals:
        z = state[..., z_index]
        hidden = np.tanh(z @ w1.T + b1)
        mu[..., v] += gain * np.tanh(hidden @ w2 + b2)
    return mu


class MechanismConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    theta: ScalarDist = LogNormalDist(mu=0.0, sigma=0.5)
    sigma: ScalarDist = LogNormalDist(mu=-1.0, sigma=0.5)
    weight_std: float = Field(default=0.5, gt=0.0)
    p_neural: float = Field(default=0.0, ge=0.0, le=1.0)
    mlp_width: int = Field(default=8, ge=1)
    gain: ScalarDist = UniformDist(low=0.5, high=2.0)

    @model_validator(mode="after")
    def _check_positive_rates(self) -> "MechanismConfig":
        # stationary initialization scales by sigma / sqrt(2 theta), so both
        # rates need strictly positive support
        if not strictly_positive(self.theta):
            raise ValueError("mechanism theta range must be strictly positive")
        if not strictly_positive(self.sigma):
            raise ValueError("mechanism sigma range must be strictly positive")
        return self


class RegimeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    fraction: float = Field(default=0.15, ge=0.0, le=1.0)
    n_min: int = Field(default=2, ge=2)
    n_max: int = Field(default=3, ge=2)
    stickiness: float = Field(default=0.9, ge=0.0, lt=1.0)


def _sample_drift(v: int, parents: np.ndarray, cfg: MechanismConfig,
                  gen: np.random.Generator) -> Drift:
    theta = cfg.theta.sample(gen)
    if gen.random() >= cfg.p_neural:
        weights = gen.normal(0.0, cfg.weight_std, size=parents.size)
        return LinearDrift(theta=theta, parents=parents, weights=weights)
    width = cfg.mlp_width
    fan_in = 1 + parents.size
    return NeuralDrift(
        theta=theta,
        parents=parents,
        gain=cfg.gain.sample(gen),
        w1=gen.normal(0.0, 1.0 / np.sqrt(fan_in), size=(width, fan_in)),
        b1=gen.normal(0.0, 0.1, size=width),
        w2=gen.normal(0.0, 1.0 / np.sqrt(width), size=width),
        b2=float(gen.normal(0.0, 0.1)),
    )


def _sample_bank(dag: Dag, cfg: MechanismConfig, gen: np.random.Generator) -> DriftBank:
    drifts = []
    sigmas = np.empty(dag.n_vars, dtype=np.float64)
    for v in range(dag.n_vars):
        drifts.append(_sample_drift(v, dag.parents(v), cfg, gen))
        sigmas[v] = cfg.sigma.sample(gen)
    return DriftBank(drifts=tuple(drifts), sigmas=sigmas)


def sample_tscm(dag: Dag, cfg: MechanismConfig, rng: RngStream) -> TscmSpec:
    bank = _sample_bank(dag, cfg, rng.generator)
    return TscmSpec(dag=dag, drifts=bank.drifts, sigmas=bank.sigmas)


def sample_regime_spec(dag: Dag, mech_cfg: MechanismConfig, cfg: RegimeConfig,
                       rng: RngStream) -> RegimeSpec:
    """Draw R ~ Uniform{n_min..n_max} full mechanism banks and a sticky
    transition matrix: each row puts ``stickiness`` on staying and splits the
    rest over the other regimes by a flat Dirichlet draw."""
    if cfg.n_max < cfg.n_min:
        raise ConfigurationError(f"regime n_max {cfg.n_max} < n_min {cfg.n_min}")
    gen = rng.generator
    r = int(gen.integers(cfg.n_min, cfg.n_max + 1))
    banks = tuple(_sample_bank(dag, mech_cfg, gen) for _ in range(r))
    transition = np.zeros((r, r), dtype=np.float64)
    for i in range(r):
        transition[i, i] = cfg.stickiness
        others = [j for j in range(r) if j != i]
        transition[i, others] = (1.0 - cfg.stickiness) * gen.dirichlet(np.ones(r - 1))
    return RegimeSpec(banks=banks, transition=transition)


def attach_regimes(dag: Dag, regimes: RegimeSpec) -> TscmSpec:
    """Build a spec whose base mechanisms are regime bank 0."""
    return TscmSpec(dag=dag, drifts=regimes.banks[0].drifts,
                    sigmas=regimes.banks[0].sigmas, regimes=regimes)


def _feed(h: "hashlib._Hash", arr: np.ndarray) -> None:
    h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())


def spec_fingerprint(spec: TscmSpec) -> str:
    """Stable hex digest of every parameter in the spec (graph, drifts,
    sigmas, regime banks, transition matrix)."""
    h = hashlib.sha256()
    h.update(spec.dag.adjacency.astype(np.uint8).tobytes())
    h.update(np.array([spec.dag.treatment, spec.dag.outcome], dtype=np.int64).tobytes())
    h.update(spec.dag.hidden.astype(np.uint8).tobytes())
    banks: Sequence[DriftBank]
    if spec.regimes is None:
        banks = [DriftBank(drifts=spec.drifts, sigmas=spec.sigmas)]
    else:
        banks = spec.regimes.banks
        _feed(h, spec.regimes.transition)
    for bank in banks:
        _feed(h, bank.sigmas)
        for d in bank.drifts:
            if isinstance(d, LinearDrift):
                h.update(b"L")
                _feed(h, np.array([d.theta]))
                _feed(h, d.weights)
            else:
                h.update(b"N")
                _feed(h, np.array([d.theta, d.gain, d.b2]))
                _feed(h, d.w1)
                _feed(h, d.b1)
                _feed(h, d.w2)
    return h.hexdigest()[:16]
