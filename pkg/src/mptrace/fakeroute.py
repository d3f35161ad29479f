"""In-process simulator of per-flow load-balanced topologies.

Each simulated node forwards a flow to a successor picked by a keyed hash of
(node, flow id), so a flow always takes the same path while distinct flows
spread uniformly.  Replies carry the metadata a real router would produce:
an IP-ID from the node's counter discipline, a reply TTL derived from its
initial-TTL class, and an optional constant MPLS label.

The statistical harness runs a trace algorithm many times over a topology
and checks the observed full-discovery failure rate against the exact value
from the stopping model, with a confidence interval.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import random
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import Callable, Iterator

from .model import MultipathGraph
from .probing import (
    DEST_UNREACHABLE,
    DIRECT,
    ECHO_REPLY,
    INDIRECT,
    NO_REPLY,
    TIME_EXCEEDED,
    Probe,
    ProbeReply,
    ProbeSession,
    SessionClosedError,
)
from .stopping import StoppingPoints, topology_failure_probability

BALANCING_MODES = ("per-flow-uniform", "none")
IPID_MODES = ("shared-monotonic", "per-interface-monotonic", "constant-zero", "random")
TTL_CLASSES = (32, 64, 128, 255)


class TopologyError(ValueError):
    """Schema violation, cycle, or unreachable node in a topology file."""


@dataclass
class SimNode:
    address: str
    router_id: str
    balancing: str = "per-flow-uniform"
    ipid_mode: str = "shared-monotonic"
    initial_ttl_class: int = 64
    mpls_label: int | None = None
    response_prob: float = 1.0


class SimTopology:
    """Ground-truth topology: a DAG from an entry node to a destination."""

    def __init__(self, source_entry: str, destination: str):
        self.source_entry = source_entry
        self.destination = destination
        self._nodes: dict[str, SimNode] = {}
        self._succ: dict[str, list[str]] = {}

    def add_node(self, node: SimNode) -> SimNode:
        if node.address in self._nodes:
            raise TopologyError(f"duplicate node {node.address}")
        self._nodes[node.address] = node
        self._succ[node.address] = []
        return node

    def add_edge(self, src: str, dst: str) -> None:
        if src not in self._nodes or dst not in self._nodes:
            raise TopologyError(f"edge {src}->{dst} references unknown node")
        if dst not in self._succ[src]:
            self._succ[src].append(dst)

    def node(self, address: str) -> SimNode:
        return self._nodes[address]

    def has_node(self, address: str) -> bool:
        return address in self._nodes

    def successors(self, address: str) -> list[str]:
        return self._succ[address]

    def iter_nodes(self) -> Iterator[SimNode]:
        return iter(self._nodes.values())

    def validate(self) -> None:
        if self.source_entry not in self._nodes:
            raise TopologyError(f"source entry {self.source_entry} is not a node")
        if self.destination not in self._nodes:
            raise TopologyError(f"destination {self.destination} is not a node")
        # cycle check + reachability from the entry
        seen: set[str] = set()
        state: dict[str, int] = {}

        def visit(addr: str) -> None:
            state[addr] = 1
            seen.add(addr)
            for nxt in self._succ[addr]:
                mark = state.get(nxt, 0)
                if mark == 1:
                    raise TopologyError(f"cycle through {nxt}")
                if mark == 0:
                    visit(nxt)
            state[addr] = 2

        visit(self.source_entry)
        unreachable = sorted(set(self._nodes) - seen)
        if unreachable:
            raise TopologyError(f"nodes unreachable from entry: {', '.join(unreachable)}")
        # every node must reach the destination
        reaches: dict[str, bool] = {self.destination: True}

        def can_reach(addr: str) -> bool:
            if addr in reaches:
                return reaches[addr]
            reaches[addr] = False  # DAG, so no revisit matters
            ok = any(can_reach(n) for n in self._succ[addr])
            reaches[addr] = ok
            return ok

        dead = sorted(a for a in self._nodes if not can_reach(a))
        if dead:
            raise TopologyError(f"nodes that never reach the destination: {', '.join(dead)}")
        for node in self._nodes.values():
            succ = self._succ[node.address]
            if node.balancing == "per-flow-uniform" and len(succ) < 2 and node.address != self.destination:
                if len(succ) == 1:
                    node.balancing = "none"
            if node.balancing == "none" and len(succ) > 1:
                raise TopologyError(f"{node.address}: multiple successors need per-flow-uniform balancing")
            if node.address == self.destination and succ:
                raise TopologyError("destination must be terminal")

    def hop_layout(self) -> dict[str, int]:
        """Map node -> hop distance from the entry (entry is hop 1).

        Raises TopologyError when a node sits at two different depths; the
        ground-truth graph and the failure model need a layered topology.
        """
        depth: dict[str, int] = {self.source_entry: 1}
        frontier = [self.source_entry]
        while frontier:
            nxt: list[str] = []
            for addr in frontier:
                for succ in self._succ[addr]:
                    d = depth[addr] + 1
                    if succ in depth:
                        if depth[succ] != d:
                            raise TopologyError(
                                f"{succ} reachable at depths {depth[succ]} and {d}; not layered"
                            )
                    else:
                        depth[succ] = d
                        nxt.append(succ)
            frontier = nxt
        return depth

    def ground_truth_graph(self, source: str = "source") -> MultipathGraph:
        """The full interface-level graph a perfect trace would produce."""
        depth = self.hop_layout()
        g = MultipathGraph(source=source, destination=self.destination)
        for addr in sorted(depth, key=lambda a: (depth[a], a)):
            g.ensure_vertex(addr, depth[addr])
        for addr in sorted(depth, key=lambda a: (depth[a], a)):
            for succ in self._succ[addr]:
                g.add_edge(g.vertex(addr, depth[addr]), g.vertex(succ, depth[succ]), flow=-1)
        return g

    def router_of(self, address: str) -> str:
        return self._nodes[address].router_id

    # -- serialization -----------------------------------------------------

    def to_json_obj(self) -> dict:
        return {
            "source": self.source_entry,
            "destination": self.destination,
            "nodes": [
                {
                    "addr": n.address,
                    "router": n.router_id,
                    "balancing": n.balancing,
                    "ipid_mode": n.ipid_mode,
                    "ttl_class": n.initial_ttl_class,
                    "mpls": n.mpls_label,
                    "response_prob": n.response_prob,
                }
                for n in self._nodes.values()
            ],
            "edges": [[src, dst] for src in self._succ for dst in self._succ[src]],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_json_obj(), indent=indent)


def topology_from_json_obj(obj: dict) -> SimTopology:
    if not isinstance(obj, dict):
        raise TopologyError("topology document must be a JSON object")
    for key in ("source", "destination", "nodes", "edges"):
        if key not in obj:
            raise TopologyError(f"missing required key {key!r}")
    topo = SimTopology(source_entry=obj["source"], destination=obj["destination"])
    for item in obj["nodes"]:
        if "addr" not in item:
            raise TopologyError("node entry lacks 'addr'")
        balancing = item.get("balancing", "per-flow-uniform")
        if balancing not in BALANCING_MODES:
            raise TopologyError(f"unknown balancing mode {balancing!r}")
        ipid_mode = item.get("ipid_mode", "shared-monotonic")
        if ipid_mode not in IPID_MODES:
            raise TopologyError(f"unknown ipid mode {ipid_mode!r}")
        ttl_class = item.get("ttl_class", 64)
        if ttl_class not in TTL_CLASSES:
            raise TopologyError(f"ttl_class must be one of {TTL_CLASSES}")
        prob = float(item.get("response_prob", 1.0))
        if not 0.0 <= prob <= 1.0:
            raise TopologyError("response_prob must be within [0, 1]")
        topo.add_node(
            SimNode(
                address=item["addr"],
                router_id=item.get("router", item["addr"]),
                balancing=balancing,
                ipid_mode=ipid_mode,
                initial_ttl_class=ttl_class,
                mpls_label=item.get("mpls"),
                response_prob=prob,
            )
        )
    for pair in obj["edges"]:
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise TopologyError(f"malformed edge entry {pair!r}")
        topo.add_edge(pair[0], pair[1])
    topo.validate()
    return topo


def load_topology(path: str | Path) -> SimTopology:
    """Parse and validate a topology JSON file."""
    text = Path(path).read_text()
    if not text.strip():
        raise TopologyError(f"{path}: empty topology file")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TopologyError(f"{path}: invalid JSON ({exc})") from exc
    return topology_from_json_obj(obj)


def _flow_choice(address: str, flow_id: int, fanout: int) -> int:
    digest = hashlib.blake2b(
        f"{address}|{flow_id}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big") % fanout


def route_path(t: SimTopology, flow_id: int) -> list[str]:
    """Deterministic node sequence a flow follows from entry to destination."""
    path = [t.source_entry]
    current = t.source_entry
    while current != t.destination:
        succ = t.successors(current)
        if len(succ) == 1:
            current = succ[0]
        else:
            current = succ[_flow_choice(current, flow_id, len(succ))]
        path.append(current)
    return path


def route_probe(t: SimTopology, probe: Probe, rng_seed: int = 0) -> ProbeReply:
    """Answer one probe against a topology using a transient session.

    Routing depends only on (topology, flow id, ttl); the seed drives the
    IP-ID counters and loss draws of the one-shot session.
    """
    return SimSession(t, seed=rng_seed).send(probe)


class SimSession(ProbeSession):
    """Probing session over one simulated topology.

    Load balancing is a pure function of (topology, flow id); the seed only
    drives the IP-ID counters' starting values, random-mode IP-IDs, and
    response losses, so a fixed seed replays bit for bit.
    """

    def __init__(self, topology: SimTopology, seed: int = 0):
        self.topology = topology
        self.seed = seed
        self._rng = random.Random(seed)
        self._closed = False
        self._observed = itertools.count(1)
        self._path_cache: dict[int, list[str]] = {}
        self._depth = topology.hop_layout()
        self._counters: dict[str, int] = {}
        routers = sorted({n.router_id for n in topology.iter_nodes()})
        for r in routers:
            self._counters[f"router:{r}"] = self._rng.getrandbits(16)
        for n in sorted(topology.iter_nodes(), key=lambda n: n.address):
            self._counters[f"iface:{n.address}"] = self._rng.getrandbits(16)
        self.probes_sent = 0

    @property
    def destination(self) -> str:
        return self.topology.destination

    def _path(self, flow_id: int) -> list[str]:
        path = self._path_cache.get(flow_id)
        if path is None:
            path = route_path(self.topology, flow_id)
            self._path_cache[flow_id] = path
        return path

    def _ip_id(self, node: SimNode) -> int:
        mode = node.ipid_mode
        if mode == "constant-zero":
            return 0
        if mode == "random":
            return self._rng.getrandbits(16)
        key = f"router:{node.router_id}" if mode == "shared-monotonic" else f"iface:{node.address}"
        value = (self._counters[key] + 1) & 0xFFFF
        self._counters[key] = value
        return value

    def _reply_from(self, node: SimNode, kind: str, hop_distance: int) -> ProbeReply:
        if node.response_prob < 1.0 and self._rng.random() >= node.response_prob:
            return ProbeReply(None, NO_REPLY, None, None, (), next(self._observed))
        labels = (node.mpls_label,) if node.mpls_label is not None else ()
        return ProbeReply(
            responder=node.address,
            kind=kind,
            ip_id=self._ip_id(node),
            reply_ttl=node.initial_ttl_class - hop_distance,
            mpls_labels=labels,
            observed_at=next(self._observed),
        )

    def send(self, probe: Probe) -> ProbeReply:
        if self._closed:
            raise SessionClosedError("session is closed")
        self.probes_sent += 1
        if probe.kind == DIRECT:
            if probe.target is None or not self.topology.has_node(probe.target):
                return ProbeReply(None, NO_REPLY, None, None, (), next(self._observed))
            node = self.topology.node(probe.target)
            return self._reply_from(node, ECHO_REPLY, self._depth[probe.target])
        if probe.kind != INDIRECT:
            raise ValueError(f"unknown probe kind {probe.kind!r}")
        if probe.ttl < 1:
            raise ValueError("ttl must be >= 1")
        path = self._path(probe.flow_id)
        if probe.ttl >= len(path):
            node = self.topology.node(self.destination)
            return self._reply_from(node, DEST_UNREACHABLE, len(path))
        addr = path[probe.ttl - 1]
        return self._reply_from(self.topology.node(addr), TIME_EXCEEDED, probe.ttl)

    def close(self) -> None:
        self._closed = True


@dataclass
class ValidationReport:
    """Observed failure rate of a tool versus the exact model prediction."""

    topology: str
    algorithm: str
    runs_per_sample: int
    samples: int
    observed_mean_failure: float
    ci_halfwidth: float
    exact_failure: float
    verdict: str
    tolerance_factor: float
    sample_means: list[float] = field(default_factory=list)
    seed: int = 0

    def to_json_obj(self) -> dict:
        return {
            "topology": self.topology,
            "algorithm": self.algorithm,
            "runs_per_sample": self.runs_per_sample,
            "samples": self.samples,
            "observed_mean_failure": self.observed_mean_failure,
            "ci_halfwidth": self.ci_halfwidth,
            "exact_failure": self.exact_failure,
            "verdict": self.verdict,
            "tolerance_factor": self.tolerance_factor,
            "sample_means": self.sample_means,
            "seed": self.seed,
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_json_obj(), indent=indent)


def graphs_equal(a: MultipathGraph, b: MultipathGraph) -> bool:
    """Exact per-hop address and edge equality (simulator addresses are canonical)."""
    if a.max_hop != b.max_hop:
        return False
    for hop in range(1, a.max_hop + 1):
        if {v.address for v in a.vertices_at(hop)} != {v.address for v in b.vertices_at(hop)}:
            return False
    edges_a = {(e.src.address, e.src.hop, e.dst.address) for e in a.edges}
    edges_b = {(e.src.address, e.src.hop, e.dst.address) for e in b.edges}
    return edges_a == edges_b


def validate_tool(
    topology: SimTopology,
    algorithm: Callable[[SimSession, StoppingPoints, int], MultipathGraph],
    sp: StoppingPoints,
    runs: int,
    samples: int,
    seed: int = 0,
    tolerance_factor: float = 3.0,
    algorithm_name: str = "mda",
    topology_name: str = "",
) -> ValidationReport:
    """Run `algorithm` runs x samples times and compare failure rates.

    A run fails when the produced graph differs from the topology's reachable
    interface-level graph.  The verdict passes when the grand-mean failure
    sits within tolerance_factor confidence halfwidths of the exact value.
    """
    for node in topology.iter_nodes():
        if node.response_prob < 1.0:
            raise ValueError("validation requires fully responsive topologies")
    exact = topology_failure_probability(topology, sp)
    truth = topology.ground_truth_graph()
    sample_means: list[float] = []
    run_index = 0
    for s in range(samples):
        failures = 0
        for _ in range(runs):
            run_seed = seed * 1_000_003 + run_index
            run_index += 1
            session = SimSession(topology, seed=run_seed)
            graph = algorithm(session, sp, run_seed)
            if not graphs_equal(graph, truth):
                failures += 1
        sample_means.append(failures / runs)
    mean = statistics.fmean(sample_means)
    if samples > 1:
        sem = statistics.stdev(sample_means) / (samples ** 0.5)
    else:
        sem = 0.0
    z = NormalDist().inv_cdf(0.975)
    halfwidth = z * sem
    margin = max(halfwidth * tolerance_factor, 1e-12)
    verdict = "pass" if abs(mean - exact) <= margin else "fail"
    return ValidationReport(
        topology=topology_name,
        algorithm=algorithm_name,
        runs_per_sample=runs,
        samples=samples,
        observed_mean_failure=mean,
        ci_halfwidth=halfwidth,
        exact_failure=exact,
        verdict=verdict,
        tolerance_factor=tolerance_factor,
        sample_means=sample_means,
        seed=seed,
    )
