"""Random DAG sampling and canonical causal structures.

Variables are indexed so that the identity permutation is a topological
order: the adjacency matrix is strictly upper triangular, with
``adjacency[u, v] = True`` meaning an edge u -> v (u is a parent of v).
Acyclicity is therefore guaranteed by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from pydantic import ConfigDict, BaseModel, Field, model_validator

from .errors import ConfigurationError, ContractViolation
from .rng import RngStream

__all__ = [
    "Dag",
    "GraphConfig",
    "STRUCTURE_NAMES",
    "sample_random_dag",
    "sample_named_structure",
    "designate_roles",
]


@dataclass(frozen=True)
class Dag:
    """A directed acyclic graph with designated treatment and outcome.

    ``hidden`` marks variables that are simulated but excluded from the
    observed view of exported records. The treatment and outcome are always
    observed.
    """

    adjacency: np.ndarray
    treatment: int
    outcome: int
    hidden: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        object.__setattr__(self, "adjacency", adj)
        n = adj.shape[0]
        if adj.ndim != 2 or adj.shape != (n, n):
            raise ContractViolation(f"adjacency must be square, got {adj.shape}")
        if np.any(adj & ~np.triu(np.ones((n, n), dtype=bool), k=1)):
            raise ContractViolation("adjacency must be strictly upper triangular")
        hidden = self.hidden
        if hidden is None:
            hidden = np.zeros(n, dtype=bool)
        hidden = np.asarray(hidden, dtype=bool)
        if hidden.shape != (n,):
            raise ContractViolation(f"hidden mask must have shape ({n},), got {hidden.shape}")
        object.__setattr__(self, "hidden", hidden)
        if not (0 <= self.treatment < n and 0 <= self.outcome < n):
            raise ContractViolation("treatment/outcome index out of range")
        if self.treatment >= self.outcome:
            raise ContractViolation("treatment must precede outcome in topological order")
        if hidden[self.treatment] or hidden[self.outcome]:
            raise ContractViolation("treatment and outcome must be observed")

    @property
    def n_vars(self) -> int:
        return self.adjacency.shape[0]

    @property
    def observed(self) -> np.ndarray:
        """Indices of observed variables, ascending."""
        return np.flatnonzero(~self.hidden)

    def parents(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[:, v])

    def descendants(self, v: int) -> np.ndarray:
        """Strict descendants of v, found by forward reachability."""
        n = self.n_vars
        reached = np.zeros(n, dtype=bool)
        frontier = [v]
        while frontier:
            u = frontier.pop()
            for w in np.flatnonzero(self.adjacency[u]):
                if not reached[w]:
                    reached[w] = True
                    frontier.append(int(w))
        return np.flatnonzero(reached)

    def edge_list(self) -> list[tuple[int, int]]:
        us, vs = np.nonzero(self.adjacency)
        return [(int(u), int(v)) for u, v in zip(us, vs)]


class GraphConfig(BaseModel):
    """Settings for structure sampling.

    ``structure`` selects a fixed named template instead of a random DAG;
    ``n_max``/``edge_alpha``/``edge_beta``/``p_hidden`` only apply to random
    sampling. Edge probability is drawn once per DAG from
    Beta(edge_alpha, edge_beta).
    """

    model_config = ConfigDict(extra="forbid")

    n_max: int = Field(default=16, ge=3)
    edge_alpha: float = Field(default=2.0, gt=0.0)
    edge_beta: float = Field(default=5.0, gt=0.0)
    p_hidden: float = Field(default=0.0, ge=0.0, lt=1.0)
    structure: str | None = None

    @model_validator(mode="after")
    def _check_structure(self) -> "GraphConfig":
        if self.structure is not None and _canonical_name(self.structure) not in _TEMPLATES:
            raise ValueError(
                f"unknown structure {self.structure!r}; known: {sorted(_TEMPLATES)} (alias: rct)"
            )
        return self


def designate_roles(n_vars: int, rng: RngStream) -> tuple[int, int]:
    """Pick (treatment, outcome) uniformly over ordered pairs with A before Y."""
    if n_vars < 2:
        raise ConfigurationError(f"need at least 2 variables to designate roles, got {n_vars}")
    pair = rng.generator.choice(n_vars, size=2, replace=False)
    a, y = int(pair.min()), int(pair.max())
    return a, y


def sample_random_dag(cfg: GraphConfig, rng: RngStream) -> Dag:
    """Draw a random DAG: N ~ Uniform{3..n_max}, edges iid Bernoulli(p) with
    p ~ Beta(edge_alpha, edge_beta), roles uniform, non-role variables hidden
    independently with probability p_hidden."""
    if cfg.structure is not None:
        return sample_named_structure(cfg.structure, rng)
    gen = rng.generator
    n = int(gen.integers(3, cfg.n_max + 1))
    p = gen.beta(cfg.edge_alpha, cfg.edge_beta)
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    adjacency = upper & (gen.random((n, n)) < p)
    treatment, outcome = designate_roles(n, rng)
    hidden = np.zeros(n, dtype=bool)
    if cfg.p_hidden > 0.0:
        mask = gen.random(n) < cfg.p_hidden
        mask[[treatment, outcome]] = False
        hidden = mask
    return Dag(adjacency=adjacency, treatment=treatment, outcome=outcome, hidden=hidden)


def _template(n: int, edges: list[tuple[int, int]], a: int, y: int,
              hidden: tuple[int, ...] = ()) -> Dag:
    adjacency = np.zeros((n, n), dtype=bool)
    for u, v in edges:
        adjacency[u, v] = True
    mask = np.zeros(n, dtype=bool)
    mask[list(hidden)] = True
    return Dag(adjacency=adjacency, treatment=a, outcome=y, hidden=mask)


# Canonical structures. Node order is topological; A/Y noted per template.
_TEMPLATES = {
    # A -> Y
    "bivariate": lambda: _template(2, [(0, 1)], 0, 1),
    # A -> M -> Y
    "mediator": lambda: _template(3, [(0, 1), (1, 2)], 0, 2),
    # C -> A, C -> Y, A -> Y
    "observed_confounder": lambda: _template(3, [(0, 1), (0, 2), (1, 2)], 1, 2),
    # C -> A, C -> Y with C hidden; no direct A -> Y edge
    "unobserved_confounder": lambda: _template(3, [(0, 1), (0, 2)], 1, 2, hidden=(0,)),
    # Z -> A, Z -> W, W -> Y, A -> Y
    "backdoor": lambda: _template(4, [(0, 1), (0, 2), (2, 3), (1, 3)], 1, 3),
    # U -> A, U -> Y, A -> M -> Y (U observed)
    "frontdoor": lambda: _template(4, [(0, 1), (0, 3), (1, 2), (2, 3)], 1, 3),
    # Z -> A, U -> A, U -> Y, A -> Y
    "instrumental": lambda: _template(4, [(0, 2), (1, 2), (1, 3), (2, 3)], 2, 3),
    # C -> A, C -> Y, A -> M -> Y
    "confounder_mediator": lambda: _template(4, [(0, 1), (0, 3), (1, 2), (2, 3)], 1, 3),
}

STRUCTURE_NAMES: tuple[str, ...] = tuple(sorted(_TEMPLATES))


def _canonical_name(name: str) -> str:
    key = name.strip().lower().replace("-", "_").replace(" ", "_")
    # A randomized trial on the treatment is structurally the two-variable
    # graph: no parents of A, single edge into Y.
    if key in ("rct", "randomised_controlled_trial", "randomized_controlled_trial"):
        return "bivariate"
    return key


def sample_named_structure(kind: str, rng: RngStream | None = None) -> Dag:
    """Return one of the fixed canonical structures.

    Templates are deterministic; ``rng`` is accepted for signature uniformity
    with the random sampler and is not consumed.
    """
    key = _canonical_name(kind)
    if key not in _TEMPLATES:
        raise ConfigurationError(f"unknown structure {kind!r}; known: {sorted(_TEMPLATES)} (alias: rct)")
    return _TEMPLATES[key]()
