from __future__ import annotations

import json
import random

import pytest
from scipy import stats

from mptrace.fakeroute import (
    SimSession,
    TopologyError,
    graphs_equal,
    load_topology,
    route_path,
    route_probe,
    topology_from_json_obj,
    validate_tool,
)
from mptrace.mda import mda_trace
from mptrace.model import compute_metrics, extract_diamonds, is_meshed_hop_pair
from mptrace.probing import Probe
from mptrace.stopping import StoppingPoints, topology_failure_probability
from mptrace.topologies import (
    FIXTURES,
    alias_mixed,
    chain,
    fan,
    fixture_path,
    simplest_diamond,
)


def test_per_flow_determinism():
    topo = simplest_diamond()
    session = SimSession(topo, seed=0)
    first = session.send(Probe(flow_id=1234, ttl=2)).responder
    for _ in range(5):
        assert session.send(Probe(flow_id=1234, ttl=2)).responder == first
    assert route_path(topo, 1234)[1] == first
    assert route_probe(topo, Probe(flow_id=1234, ttl=2), rng_seed=9).responder == first


def test_branching_uniformity_chi_square():
    topo = simplest_diamond()
    rng = random.Random(99)
    counts = {"m1": 0, "m2": 0}
    for _ in range(10_000):
        counts[route_path(topo, rng.getrandbits(48))[1]] += 1
    assert stats.chisquare(list(counts.values())).pvalue > 0.01


def test_thousand_flows_split_evenly():
    session = SimSession(simplest_diamond(), seed=5)
    rng = random.Random(5)
    counts = {"m1": 0, "m2": 0}
    for _ in range(1000):
        counts[session.send(Probe(flow_id=rng.getrandbits(48), ttl=2)).responder] += 1
    assert abs(counts["m1"] - 500) <= 50 and abs(counts["m2"] - 500) <= 50


def test_wide_hop_uniformity():
    topo = fan(12)
    rng = random.Random(3)
    counts = {f"m{i}": 0 for i in range(1, 13)}
    for _ in range(12_000):
        counts[route_path(topo, rng.getrandbits(48))[1]] += 1
    assert stats.chisquare(list(counts.values())).pvalue > 0.01


def test_reply_ttl_accounts_for_distance():
    topo = chain(4)
    topo.node("n2").initial_ttl_class = 255
    session = SimSession(topo, seed=1)
    r1 = session.send(Probe(flow_id=1, ttl=1))
    r2 = session.send(Probe(flow_id=1, ttl=2))
    assert r1.reply_ttl + 1 == 64
    assert r2.reply_ttl + 2 == 255


def test_shared_counter_is_monotonic_across_interfaces():
    topo = alias_mixed()
    session = SimSession(topo, seed=8)
    wit = {}
    rng = random.Random(8)
    while len(wit) < 3:
        f = rng.getrandbits(48)
        addr = route_path(topo, f)[1]
        if addr in ("a1", "a2", "a3"):
            wit.setdefault(addr, f)
    values = []
    for i in range(30):
        for addr in sorted(wit):
            reply = session.send(Probe(flow_id=wit[addr], ttl=2))
            assert reply.responder == addr
            values.append(reply.ip_id)
    descents = sum(1 for a, b in zip(values, values[1:]) if b <= a)
    assert descents <= 1  # one wraparound allowed across the whole stream


def test_mpls_labels_attached():
    topo = alias_mixed()
    session = SimSession(topo, seed=2)
    rng = random.Random(2)
    seen = {}
    for _ in range(400):
        reply = session.send(Probe(flow_id=rng.getrandbits(48), ttl=2))
        if reply.responder:
            seen[reply.responder] = reply.mpls_labels
        if {"c1", "c2", "a1"} <= set(seen):
            break
    assert seen["c1"] == (17,)
    assert seen["c2"] == (18,)
    assert seen["a1"] == ()


# -- topology loading -------------------------------------------------------------


def test_load_rejects_empty_file(tmp_path):
    p = tmp_path / "empty.json"
    p.write_text("")
    with pytest.raises(TopologyError):
        load_topology(p)


def test_load_rejects_cycles():
    obj = {
        "source": "a",
        "destination": "c",
        "nodes": [{"addr": "a"}, {"addr": "b"}, {"addr": "c"}],
        "edges": [["a", "b"], ["b", "a"], ["b", "c"]],
    }
    with pytest.raises(TopologyError, match="cycle"):
        topology_from_json_obj(obj)


def test_load_rejects_dead_ends():
    obj = {
        "source": "a",
        "destination": "c",
        "nodes": [{"addr": "a"}, {"addr": "b"}, {"addr": "c"}],
        "edges": [["a", "c"], ["a", "b"]],
    }
    with pytest.raises(TopologyError, match="never reach"):
        topology_from_json_obj(obj)


def test_single_edge_topology_is_valid(tmp_path):
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps({
        "source": "a",
        "destination": "b",
        "nodes": [{"addr": "a"}, {"addr": "b"}],
        "edges": [["a", "b"]],
    }))
    topo = load_topology(p)
    assert route_path(topo, 5) == ["a", "b"]


def test_load_rejects_unknown_modes():
    base = {
        "source": "a",
        "destination": "b",
        "nodes": [{"addr": "a", "balancing": "round-robin"}, {"addr": "b"}],
        "edges": [["a", "b"]],
    }
    with pytest.raises(TopologyError, match="balancing"):
        topology_from_json_obj(base)


def test_non_layered_topology_rejected_by_layout():
    obj = {
        "source": "a",
        "destination": "d",
        "nodes": [{"addr": x} for x in "abcd"],
        "edges": [["a", "b"], ["a", "c"], ["b", "c"], ["c", "d"], ["b", "d"]],
    }
    topo = topology_from_json_obj(obj)
    with pytest.raises(TopologyError, match="layered"):
        topo.hop_layout()


# -- shipped benchmark fixtures ----------------------------------------------------


def _fixture_metrics(name):
    topo = load_topology(fixture_path(name))
    graph = topo.ground_truth_graph()
    diamonds = extract_diamonds(graph)
    assert len(diamonds) == 1
    return topo, graph, diamonds[0], compute_metrics(diamonds[0])


def test_fixture_files_all_load():
    for name in FIXTURES:
        load_topology(fixture_path(name))


def test_fixture_files_match_builders():
    for name, build in FIXTURES.items():
        shipped = json.loads(fixture_path(name).read_text())
        assert shipped == build().to_json_obj(), f"{name} drifted from its builder"


def test_max_length_2_fixture_shape():
    _, graph, diamond, m = _fixture_metrics("max_length_2")
    assert m.max_width == 28
    assert m.max_length == 2
    assert m.meshed_hop_ratio == 0.0
    multi = [h for h in graph.hops() if graph.width(h) >= 2]
    assert len(multi) == 1


def test_symmetric_fixture_shape():
    _, graph, diamond, m = _fixture_metrics("symmetric_10")
    assert m.max_width == 10
    assert m.max_width_asymmetry == 0
    assert m.meshed_hop_ratio == 0.0
    multi = [h for h in graph.hops() if graph.width(h) >= 2]
    assert len(multi) == 3


def test_asymmetric_fixture_shape():
    _, graph, diamond, m = _fixture_metrics("asymmetric_17")
    assert m.max_width == 19
    assert m.max_width_asymmetry == 17
    assert m.meshed_hop_ratio == 0.0
    multi = [h for h in graph.hops() if graph.width(h) >= 2]
    assert len(multi) == 9


def test_meshed_fixture_shape():
    _, graph, diamond, m = _fixture_metrics("meshed_48")
    assert m.max_width == 48
    assert m.max_width_asymmetry == 0
    assert m.meshed_hop_ratio > 0.0
    multi = [h for h in graph.hops() if graph.width(h) >= 2]
    assert len(multi) == 5
    meshed_pairs = [
        i for i in range(diamond.divergence.hop, diamond.convergence.hop)
        if is_meshed_hop_pair(graph, i)
    ]
    assert meshed_pairs == [4]


def test_fig1_fixture_shapes():
    for name in ("four_over_two_unmeshed", "four_over_two_meshed"):
        topo = load_topology(fixture_path(name))
        graph = topo.ground_truth_graph()
        assert [graph.width(h) for h in range(1, 5)] == [1, 4, 2, 1]
    meshed = load_topology(fixture_path("four_over_two_meshed")).ground_truth_graph()
    assert is_meshed_hop_pair(meshed, 2)


# -- statistical harness -----------------------------------------------------------


def _mda_runner(max_ttl=30):
    def run(session, sp, seed):
        return mda_trace(session, sp, max_ttl=max_ttl, seed=seed).graph
    return run


def test_chain_never_fails(table_05):
    report = validate_tool(
        chain(4), _mda_runner(), table_05, runs=50, samples=4, seed=1
    )
    assert report.exact_failure == 0.0
    assert report.observed_mean_failure == 0.0
    assert report.verdict == "pass"


def test_fan3_failure_within_tolerance(table_05):
    report = validate_tool(
        fan(3), _mda_runner(), table_05, runs=400, samples=8, seed=5
    )
    exact = topology_failure_probability(fan(3), table_05)
    assert report.exact_failure == pytest.approx(exact)
    assert abs(report.observed_mean_failure - exact) <= 3 * max(report.ci_halfwidth, 1e-9)
    assert report.verdict == "pass"


def test_validation_refuses_lossy_topologies(table_05):
    topo = chain(4)
    topo.node("n2").response_prob = 0.9
    with pytest.raises(ValueError):
        validate_tool(topo, _mda_runner(), table_05, runs=5, samples=2)


def test_graphs_equal_is_exact():
    topo = simplest_diamond()
    truth = topo.ground_truth_graph()
    result = mda_trace(SimSession(topo, seed=123), StoppingPoints.from_alpha(0.05), seed=123)
    assert graphs_equal(result.graph, truth) or result.graph.vertex_count() < truth.vertex_count()
