from __future__ import annotations

import itertools
import json
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mptrace.fakeroute import SimTopology, SimNode
from mptrace.stopping import (
    GlobalBound,
    StoppingPoints,
    derive_table,
    miss_probability,
    topology_failure_probability,
    vertex_discovery_failure,
)
from mptrace.topologies import chain, fan, simplest_diamond


def brute_force_miss(k: int, n: int) -> float:
    """Enumerate all (k+1)^n draw sequences and count those missing a category."""
    total = k + 1
    missing = 0
    for seq in itertools.product(range(total), repeat=n):
        if len(set(seq)) < total:
            missing += 1
    return missing / total ** n


@pytest.mark.parametrize("k,n", [(1, 3), (1, 6), (2, 5), (2, 8), (3, 7)])
def test_miss_probability_matches_enumeration(k, n):
    assert miss_probability(k, n) == pytest.approx(brute_force_miss(k, n), abs=1e-12)


@given(st.integers(min_value=1, max_value=20))
def test_miss_probability_closed_form_single_successor(n):
    # two categories: missing one has probability 2 * (1/2)^n
    assert miss_probability(1, n) == pytest.approx(2.0 * 0.5 ** n)


def test_anchor_budgets(anchor_table):
    assert anchor_table.n(1) == 9
    assert anchor_table.n(2) == 17
    assert anchor_table.n(4) == 33


def test_budget_is_minimal(anchor_table):
    alpha = anchor_table.per_node_bound
    for k in (1, 2, 4):
        n = anchor_table.n(k)
        assert miss_probability(k, n) <= alpha < miss_probability(k, n - 1)


def test_alpha_one_thirty_second_gives_six():
    sp = StoppingPoints.from_alpha(1 / 32)
    assert sp.n(1) == 6
    assert miss_probability(1, 6) == pytest.approx(1 / 32)


def test_classic_table_at_five_percent(table_05):
    assert [table_05.n(k) for k in range(1, 7)] == [6, 11, 16, 21, 27, 33]


def test_derive_table_divides_global_bound():
    sp = derive_table(GlobalBound(0.05), max_branching=30)
    assert sp.per_node_bound == pytest.approx(0.05 / 30)
    assert sp.max_branching == 30


def test_global_bound_rejects_out_of_range():
    with pytest.raises(ValueError):
        GlobalBound(0.0)
    with pytest.raises(ValueError):
        GlobalBound(1.0)
    with pytest.raises(ValueError):
        StoppingPoints.from_alpha(-0.1)


@given(st.floats(min_value=1e-4, max_value=0.2))
@settings(max_examples=25, deadline=None)
def test_budgets_strictly_increase_in_k(alpha):
    sp = StoppingPoints.from_alpha(alpha)
    values = [sp.n(k) for k in range(1, 8)]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_budgets_shrink_as_bound_loosens():
    tight = StoppingPoints.from_alpha(0.001)
    loose = StoppingPoints.from_alpha(0.1)
    for k in range(1, 6):
        assert tight.n(k) > loose.n(k)


def test_table_json_round_trip(anchor_table):
    sp = StoppingPoints.from_alpha(anchor_table.per_node_bound, max_branching=6)
    text = sp.to_json()
    again = StoppingPoints.from_json(text)
    assert again.per_node_bound == sp.per_node_bound
    assert [again.n(k) for k in range(1, 7)] == [sp.n(k) for k in range(1, 7)]
    assert json.loads(text)["n"][0] == 9


# -- exact failure probability ------------------------------------------------


def test_simplest_diamond_failure_is_exact(table_05):
    assert topology_failure_probability(simplest_diamond(), table_05) == 0.03125


def test_single_successor_never_fails(table_05):
    assert topology_failure_probability(chain(5), table_05) == 0.0
    assert vertex_discovery_failure(1, table_05) == 0.0


def test_two_successors_closed_form(anchor_table):
    # the second interface is missed only if n_1 - 1 follow-up probes repeat
    assert vertex_discovery_failure(2, anchor_table) == pytest.approx(0.5 ** 8)


def _mc_vertex_failure(K: int, sp: StoppingPoints, runs: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    n_max = sp.n(K)
    budgets = np.array([0] + [sp.n(k) for k in range(1, K + 1)])
    draws = rng.integers(0, K, size=(runs, n_max))
    idx = np.arange(runs)
    seen = np.zeros((runs, K), dtype=bool)
    found = np.zeros(runs, dtype=np.int64)
    active = np.ones(runs, dtype=bool)
    failed = np.zeros(runs, dtype=bool)
    for n in range(1, n_max + 1):
        d = draws[:, n - 1]
        newly = active & ~seen[idx, d]
        seen[idx, d] |= active
        found += newly
        stop = active & (n == budgets[np.maximum(found, 1)])
        failed |= stop & (found < K)
        active &= ~stop
    return float(failed.mean())


def test_three_successor_failure_matches_monte_carlo(table_05):
    runs = 1_000_000
    exact = vertex_discovery_failure(3, table_05)
    observed = _mc_vertex_failure(3, table_05, runs, seed=20240311)
    se = math.sqrt(exact * (1 - exact) / runs)
    assert abs(observed - exact) <= 3 * se


def _random_small_topology(rng: random.Random) -> SimTopology:
    topo = SimTopology(source_entry="e", destination="dest")
    topo.add_node(SimNode("e", "e"))
    width = rng.randint(2, 4)
    mids = [f"m{i}" for i in range(width)]
    for m in mids:
        topo.add_node(SimNode(m, m))
        topo.add_edge("e", m)
    topo.add_node(SimNode("dest", "dest"))
    for m in mids:
        topo.add_edge(m, "dest")
    topo.validate()
    return topo


def test_failure_monotone_in_budgets():
    rng = random.Random(7)
    for _ in range(5):
        topo = _random_small_topology(rng)
        base = StoppingPoints.from_alpha(0.05, max_branching=8)
        baseline = topology_failure_probability(topo, base)
        for k in range(1, 5):
            values = [base.n(j) for j in range(1, 9)]
            values[k - 1] += 1
            if k < 8 and values[k - 1] >= values[k]:
                continue  # keep the table strictly increasing
            bumped = StoppingPoints.from_table(base.per_node_bound, values)
            assert topology_failure_probability(topo, bumped) <= baseline + 1e-15


def test_failure_model_rejects_lossy_topologies(table_05):
    topo = fan(2)
    topo.node("m1").response_prob = 0.5
    with pytest.raises(ValueError):
        topology_failure_probability(topo, table_05)


def test_lazy_extension_beyond_max_branching(anchor_table):
    # budgets exist for fanouts past the bound-derivation parameter
    n48 = anchor_table.n(48)
    assert n48 > anchor_table.n(30)
    assert miss_probability(48, n48) <= anchor_table.per_node_bound
