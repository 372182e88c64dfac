import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctprior.errors import ConfigurationError, ContractViolation
from ctprior.graph import (
    STRUCTURE_NAMES,
    Dag,
    GraphConfig,
    designate_roles,
    sample_named_structure,
    sample_random_dag,
)
from ctprior.rng import RngStream

from .oracles import has_cycle, ordered_role_pairs, transitive_descendants


def test_dag_validates_shape_and_triangularity():
    with pytest.raises(ContractViolation, match="upper triangular"):
        Dag(adjacency=np.array([[False, False], [True, False]]), treatment=0, outcome=1)
    with pytest.raises(ContractViolation, match="square"):
        Dag(adjacency=np.zeros((2, 3), dtype=bool), treatment=0, outcome=1)
    with pytest.raises(ContractViolation, match="precede"):
        Dag(adjacency=np.zeros((3, 3), dtype=bool), treatment=2, outcome=1)
    with pytest.raises(ContractViolation, match="observed"):
        Dag(adjacency=np.zeros((2, 2), dtype=bool), treatment=0, outcome=1,
            hidden=np.array([True, False]))


def test_parents_descendants_and_observed():
    # 0 -> 1 -> 3, 0 -> 2
    adj = np.zeros((4, 4), dtype=bool)
    adj[0, 1] = adj[1, 3] = adj[0, 2] = True
    dag = Dag(adjacency=adj, treatment=1, outcome=3, hidden=np.array([False, False, True, False]))
    assert dag.parents(3).tolist() == [1]
    assert dag.parents(0).tolist() == []
    assert dag.descendants(0).tolist() == [1, 2, 3]
    assert dag.descendants(3).tolist() == []
    assert dag.observed.tolist() == [0, 1, 3]
    assert dag.edge_list() == [(0, 1), (0, 2), (1, 3)]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31))
def test_random_dag_is_acyclic_with_valid_roles(seed):
    dag = sample_random_dag(GraphConfig(p_hidden=0.3), RngStream(seed).child("graph"))
    assert not has_cycle(dag.adjacency)
    assert 3 <= dag.n_vars <= 16
    assert dag.treatment < dag.outcome
    assert not dag.hidden[dag.treatment] and not dag.hidden[dag.outcome]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31))
def test_descendants_match_reachability_oracle(seed):
    dag = sample_random_dag(GraphConfig(), RngStream(seed).child("graph"))
    for v in range(dag.n_vars):
        assert set(dag.descendants(v).tolist()) == transitive_descendants(dag.adjacency, v)


def test_role_pairs_uniform_over_ordered_pairs():
    n = 4
    pairs = ordered_role_pairs(n)
    counts = dict.fromkeys(pairs, 0)
    trials = 30_000
    root = RngStream(2024)
    for i in range(trials):
        counts[designate_roles(n, root.child(i))] += 1
    freqs = np.array([counts[p] / trials for p in pairs])
    # each of the 6 ordered pairs should appear with frequency 1/6
    assert np.all(np.abs(freqs - 1 / 6) < 0.01)


def test_edge_density_matches_beta_mean():
    # With p ~ Beta(2, 5) the expected edge density over upper-triangular
    # slots is 2/7. Average over many graphs of fixed size for a tight check.
    cfg = GraphConfig(n_max=16)
    root = RngStream(77)
    dens = []
    for i in range(4000):
        dag = sample_random_dag(cfg, root.child(i))
        n = dag.n_vars
        slots = n * (n - 1) / 2
        dens.append(dag.adjacency.sum() / slots)
    assert abs(np.mean(dens) - 2 / 7) < 0.01


def test_hidden_rate_excludes_roles():
    cfg = GraphConfig(p_hidden=0.3)
    root = RngStream(99)
    rates = []
    for i in range(3000):
        dag = sample_random_dag(cfg, root.child(i))
        others = np.ones(dag.n_vars, dtype=bool)
        others[[dag.treatment, dag.outcome]] = False
        if others.any():
            rates.append(dag.hidden[others].mean())
    assert abs(np.mean(rates) - 0.3) < 0.02


def test_p_hidden_zero_yields_fully_observed():
    for i in range(50):
        dag = sample_random_dag(GraphConfig(p_hidden=0.0), RngStream(3).child(i))
        assert not dag.hidden.any()


# ---------------------------------------------------------------- templates

def edges(dag: Dag) -> set[tuple[int, int]]:
    return set(dag.edge_list())


def test_bivariate_template():
    dag = sample_named_structure("bivariate")
    assert dag.n_vars == 2
    assert edges(dag) == {(0, 1)}
    assert (dag.treatment, dag.outcome) == (0, 1)
    assert not dag.hidden.any()


def test_rct_aliases_bivariate():
    for alias in ("rct", "RCT", "randomised controlled trial", "randomized_controlled_trial"):
        dag = sample_named_structure(alias)
        assert edges(dag) == {(0, 1)}
        assert dag.parents(dag.treatment).size == 0


def test_mediator_template():
    dag = sample_named_structure("mediator")
    assert edges(dag) == {(0, 1), (1, 2)}
    assert (dag.treatment, dag.outcome) == (0, 2)
    # no direct edge from treatment to outcome; path runs through the mediator
    assert not dag.adjacency[dag.treatment, dag.outcome]
    assert dag.outcome in dag.descendants(dag.treatment)


def test_observed_confounder_template():
    dag = sample_named_structure("observed_confounder")
    assert edges(dag) == {(0, 1), (0, 2), (1, 2)}
    assert (dag.treatment, dag.outcome) == (1, 2)
    assert not dag.hidden.any()
    # the confounder is a shared parent of both roles
    assert 0 in dag.parents(dag.treatment) and 0 in dag.parents(dag.outcome)


def test_unobserved_confounder_template():
    dag = sample_named_structure("unobserved_confounder")
    assert edges(dag) == {(0, 1), (0, 2)}
    assert dag.hidden.tolist() == [True, False, False]
    assert not dag.adjacency[dag.treatment, dag.outcome]


def test_backdoor_template():
    dag = sample_named_structure("backdoor")
    assert dag.n_vars == 4
    assert (dag.treatment, dag.outcome) == (1, 3)
    # a backdoor path A <- Z -> W -> Y exists alongside the direct edge
    assert edges(dag) == {(0, 1), (0, 2), (2, 3), (1, 3)}
    assert not dag.hidden.any()


def test_frontdoor_template():
    dag = sample_named_structure("frontdoor")
    assert (dag.treatment, dag.outcome) == (1, 3)
    assert edges(dag) == {(0, 1), (0, 3), (1, 2), (2, 3)}
    # treatment affects outcome only through the mediator node 2
    assert not dag.adjacency[1, 3]


def test_instrumental_template():
    dag = sample_named_structure("instrumental")
    assert (dag.treatment, dag.outcome) == (2, 3)
    assert edges(dag) == {(0, 2), (1, 2), (1, 3), (2, 3)}
    # the instrument (node 0) touches the treatment but not the outcome
    assert 0 in dag.parents(2)
    assert 0 not in dag.parents(3)
    assert 3 not in transitive_descendants(dag.adjacency, 0) - set(dag.descendants(2).tolist()) - {2}


def test_confounder_mediator_template():
    dag = sample_named_structure("confounder_mediator")
    assert (dag.treatment, dag.outcome) == (1, 3)
    assert edges(dag) == {(0, 1), (0, 3), (1, 2), (2, 3)}


def test_all_templates_are_valid_dags():
    for name in STRUCTURE_NAMES:
        dag = sample_named_structure(name)
        assert not has_cycle(dag.adjacency)
        if name == "unobserved_confounder":
            # spurious-only dependence: no directed path from A to Y
            assert dag.outcome not in set(dag.descendants(dag.treatment).tolist())
        else:
            assert dag.outcome in set(dag.descendants(dag.treatment).tolist())


def test_unknown_structure_rejected():
    with pytest.raises(ConfigurationError, match="unknown structure"):
        sample_named_structure("mystery")
    with pytest.raises(ValueError, match="unknown structure"):
        GraphConfig(structure="mystery")


def test_config_routes_to_template():
    cfg = GraphConfig(structure="mediator")
    dag = sample_random_dag(cfg, RngStream(0).child("graph"))
    assert edges(dag) == {(0, 1), (1, 2)}
