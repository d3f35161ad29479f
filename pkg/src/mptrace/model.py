"""Interface-level multipath topology model.

A route trace across per-flow load balancers yields a hop-indexed DAG of
interfaces: at each TTL there is a set of responding interfaces, and edges
connect interfaces observed at consecutive TTLs by the same flow.  Regions
where the path fans out and re-converges are "diamonds"; this module holds
the graph containers, diamond extraction, and the four diamond metrics
(maximum width, maximum length, maximum width asymmetry, ratio of meshed
hops).  Everything here is pure data and graph analysis, no probing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator

FlowId = int

STAR_PREFIX = "star:"


def star_address(trace_id: str, hop: int, index: int) -> str:
    """Synthetic unique address for a non-response ("star") at a hop.

    Every timeout gets a fresh address so that star endpoints never compare
    equal to responsive interfaces, and never to stars from other traces.
    """
    return f"{STAR_PREFIX}{trace_id}:{hop}:{index}"


@dataclass(frozen=True)
class Vertex:
    """One interface observed at one TTL.  (address, hop) is unique per graph."""

    address: str
    hop: int
    responsive: bool = True


@dataclass
class Edge:
    """Directed link between interfaces at consecutive hops.

    witnesses holds the flow identifiers that traversed both endpoints
    consecutively (or are entailed to have done so when the upstream hop has
    a single interface).
    """

    src: Vertex
    dst: Vertex
    witnesses: set[FlowId] = field(default_factory=set)

    def __post_init__(self) -> None:
        if self.dst.hop != self.src.hop + 1:
            raise ValueError(
                f"edge must span consecutive hops, got {self.src.hop} -> {self.dst.hop}"
            )


class MultipathGraph:
    """Hop-indexed DAG of interfaces between a source and a destination.

    Vertices are stored per hop in discovery order; edges are keyed by
    (src address, src hop, dst address).  flow_log records, per flow, the
    interface observed at each probed TTL.
    """

    def __init__(self, source: str, destination: str):
        self.source = source
        self.destination = destination
        self._hops: dict[int, dict[str, Vertex]] = {}
        self._edges: dict[tuple[str, int, str], Edge] = {}
        self._out: dict[Vertex, list[Edge]] = {}
        self._in: dict[Vertex, list[Edge]] = {}
        self.flow_log: dict[FlowId, dict[int, str]] = {}

    # -- construction ------------------------------------------------------

    def ensure_vertex(self, address: str, hop: int, responsive: bool = True) -> tuple[Vertex, bool]:
        """Return the vertex for (address, hop), creating it if new."""
        if hop < 1:
            raise ValueError("hops are numbered from 1")
        level = self._hops.setdefault(hop, {})
        existing = level.get(address)
        if existing is not None:
            return existing, False
        v = Vertex(address, hop, responsive)
        level[address] = v
        self._out[v] = []
        self._in[v] = []
        return v, True

    def add_edge(self, src: Vertex, dst: Vertex, flow: FlowId | None = None) -> Edge:
        key = (src.address, src.hop, dst.address)
        edge = self._edges.get(key)
        if edge is None:
            edge = Edge(src, dst)
            self._edges[key] = edge
            self._out[src].append(edge)
            self._in[dst].append(edge)
        if flow is not None:
            edge.witnesses.add(flow)
        return edge

    def record_observation(self, flow: FlowId, vertex: Vertex) -> None:
        """Log that `flow` was answered by `vertex` at its hop.

        Edges to adjacent logged observations of the same flow are created
        automatically, which keeps flow_log and the edge set consistent.
        """
        log = self.flow_log.setdefault(flow, {})
        prior = log.get(vertex.hop)
        if prior is not None and prior != vertex.address:
            raise ValueError(
                f"flow {flow} already observed at hop {vertex.hop} ({prior})"
            )
        log[vertex.hop] = vertex.address
        before = log.get(vertex.hop - 1)
        if before is not None:
            self.add_edge(self.vertex(before, vertex.hop - 1), vertex, flow)
        after = log.get(vertex.hop + 1)
        if after is not None:
            self.add_edge(vertex, self.vertex(after, vertex.hop + 1), flow)

    # -- queries -----------------------------------------------------------

    def vertex(self, address: str, hop: int) -> Vertex:
        return self._hops[hop][address]

    def has_vertex(self, address: str, hop: int) -> bool:
        return hop in self._hops and address in self._hops[hop]

    def vertices_at(self, hop: int) -> list[Vertex]:
        return list(self._hops.get(hop, {}).values())

    def width(self, hop: int) -> int:
        return len(self._hops.get(hop, {}))

    @property
    def max_hop(self) -> int:
        return max(self._hops) if self._hops else 0

    def hops(self) -> Iterator[int]:
        return iter(sorted(self._hops))

    @property
    def edges(self) -> list[Edge]:
        return list(self._edges.values())

    def out_edges(self, v: Vertex) -> list[Edge]:
        return self._out.get(v, [])

    def in_edges(self, v: Vertex) -> list[Edge]:
        return self._in.get(v, [])

    def successors(self, v: Vertex) -> list[Vertex]:
        return [e.dst for e in self._out.get(v, [])]

    def predecessors(self, v: Vertex) -> list[Vertex]:
        return [e.src for e in self._in.get(v, [])]

    def vertex_count(self) -> int:
        return sum(len(level) for level in self._hops.values())

    def edge_count(self) -> int:
        return len(self._edges)

    def validate(self) -> None:
        """Check structural invariants; raises ValueError on violation."""
        for (src_addr, src_hop, dst_addr), e in self._edges.items():
            if e.dst.hop != e.src.hop + 1:
                raise ValueError("edge spans non-consecutive hops")
            if not e.witnesses:
                raise ValueError(f"edge {src_addr}@{src_hop}->{dst_addr} has no witnesses")
        for flow, log in self.flow_log.items():
            for hop, addr in log.items():
                if hop + 1 in log:
                    key = (addr, hop, log[hop + 1])
                    if key not in self._edges:
                        raise ValueError(f"flow {flow} observations at {hop},{hop + 1} lack an edge")
        # every vertex beyond the first recorded hop must be reachable
        hops = sorted(self._hops)
        if not hops:
            return
        reached = set(self._hops[hops[0]].values())
        for hop in hops[1:]:
            for v in self._hops[hop].values():
                preds = set(self.predecessors(v))
                if not preds:
                    raise ValueError(f"{v.address}@{v.hop} unreachable from hop {hops[0]}")
                reached.add(v)

    # -- serialization -----------------------------------------------------

    def to_json_obj(self) -> dict:
        hops = []
        for hop in sorted(self._hops):
            hops.append(
                [{"address": v.address, "responsive": v.responsive} for v in self._hops[hop].values()]
            )
        edges = [
            {
                "from_hop": e.src.hop,
                "from_addr": e.src.address,
                "to_addr": e.dst.address,
                "flows": sorted(e.witnesses),
            }
            for e in self._edges.values()
        ]
        return {
            "source": self.source,
            "destination": self.destination,
            "hops": hops,
            "edges": edges,
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_json_obj(), indent=indent)

    @classmethod
    def from_json_obj(cls, obj: dict) -> "MultipathGraph":
        g = cls(obj["source"], obj["destination"])
        for i, level in enumerate(obj["hops"], start=1):
            for item in level:
                g.ensure_vertex(item["address"], i, item.get("responsive", True))
        for e in obj["edges"]:
            src = g.vertex(e["from_addr"], e["from_hop"])
            dst = g.vertex(e["to_addr"], e["from_hop"] + 1)
            edge = g.add_edge(src, dst)
            edge.witnesses.update(e.get("flows", []))
        return g

    def to_dot(self, name: str = "trace") -> str:
        """Graphviz rendering with one cluster subgraph per diamond."""
        lines = [f'digraph "{name}" {{', "  rankdir=LR;"]
        in_diamond: set[Vertex] = set()
        for i, d in enumerate(extract_diamonds(self)):
            lines.append(f"  subgraph cluster_{i} {{")
            lines.append(
                f'    label="diamond {d.divergence.address} -> {d.convergence.address}";'
            )
            for hop in range(d.divergence.hop, d.convergence.hop + 1):
                for v in self.vertices_at(hop):
                    lines.append(f'    "{v.address}@{v.hop}";')
                    in_diamond.add(v)
            lines.append("  }")
        for hop in sorted(self._hops):
            for v in self._hops[hop].values():
                if v not in in_diamond:
                    lines.append(f'  "{v.address}@{v.hop}";')
        for e in self._edges.values():
            lines.append(f'  "{e.src.address}@{e.src.hop}" -> "{e.dst.address}@{e.dst.hop}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


@dataclass
class Diamond:
    """Fan-out region delimited by a divergence and a convergence interface.

    All source-to-destination flows traverse both delimiters; the interior
    spans at least one hop.  The delimiters are the unique interfaces at
    their hops.
    """

    divergence: Vertex
    convergence: Vertex
    graph: MultipathGraph

    @property
    def hop_span(self) -> int:
        return self.convergence.hop - self.divergence.hop

    def interior(self) -> MultipathGraph:
        """Sub-graph strictly between the delimiters."""
        sub = MultipathGraph(self.divergence.address, self.convergence.address)
        for hop in range(self.divergence.hop + 1, self.convergence.hop):
            for v in self.graph.vertices_at(hop):
                sub.ensure_vertex(v.address, v.hop, v.responsive)
        for e in self.graph.edges:
            if self.divergence.hop < e.src.hop and e.dst.hop < self.convergence.hop:
                sub.add_edge(sub.vertex(e.src.address, e.src.hop), sub.vertex(e.dst.address, e.dst.hop))
                sub._edges[(e.src.address, e.src.hop, e.dst.address)].witnesses.update(e.witnesses)
        return sub


@dataclass(frozen=True)
class DiamondMetrics:
    max_width: int
    max_length: int
    max_width_asymmetry: int
    meshed_hop_ratio: float


def extract_diamonds(g: MultipathGraph) -> list[Diamond]:
    """Return every maximal diamond of the graph, ordered by divergence hop.

    A hop traversed by all flows is exactly a hop holding a single vertex, so
    diamonds are the regions between consecutive single-vertex hops that lie
    more than one hop apart.  Nested structure is not reported separately;
    only the outermost delimiters define identity.
    """
    cut_hops = [h for h in g.hops() if g.width(h) == 1]
    diamonds = []
    for a, b in zip(cut_hops, cut_hops[1:]):
        if b - a >= 2:
            diamonds.append(
                Diamond(g.vertices_at(a)[0], g.vertices_at(b)[0], g)
            )
    return diamonds


def is_meshed_hop_pair(g: MultipathGraph, i: int) -> bool:
    """Whether hops i and i+1 are meshed.

    Meshing holds when (a) equal widths and some cross-link multiplicity,
    (b) the narrower-to-wider direction shows an in-degree of two or more,
    or (c) the wider-to-narrower direction shows an out-degree of two or
    more.
    """
    wi, wj = g.width(i), g.width(i + 1)
    if wi == 0 or wj == 0:
        raise ValueError(f"hop pair ({i}, {i + 1}) not present in graph")
    out_degrees = [len(g.out_edges(v)) for v in g.vertices_at(i)]
    in_degrees = [len(g.in_edges(v)) for v in g.vertices_at(i + 1)]
    if wi == wj:
        return max(out_degrees) >= 2 or max(in_degrees) >= 2
    if wi < wj:
        return max(in_degrees) >= 2
    return max(out_degrees) >= 2


def _pair_asymmetry(g: MultipathGraph, i: int) -> int:
    """Width asymmetry of the hop pair (i, i+1).

    Measured on the narrower side's link counts: successor spread when the
    next hop is wider, predecessor spread when it is narrower, the larger of
    the two at equal widths.  A side with a single vertex contributes 0.
    """
    wi, wj = g.width(i), g.width(i + 1)
    succ_counts = [len(g.out_edges(v)) for v in g.vertices_at(i)]
    pred_counts = [len(g.in_edges(v)) for v in g.vertices_at(i + 1)]
    succ_spread = max(succ_counts) - min(succ_counts)
    pred_spread = max(pred_counts) - min(pred_counts)
    if wi < wj:
        return succ_spread
    if wi > wj:
        return pred_spread
    return max(succ_spread, pred_spread)


def _longest_path_length(g: MultipathGraph, d: Diamond) -> int:
    # longest divergence -> convergence path, counted in hops
    dist: dict[Vertex, int] = {d.divergence: 0}
    for hop in range(d.divergence.hop, d.convergence.hop):
        for v in g.vertices_at(hop):
            if v not in dist:
                continue
            for e in g.out_edges(v):
                if e.dst.hop <= d.convergence.hop:
                    dist[e.dst] = max(dist.get(e.dst, 0), dist[v] + 1)
    return dist.get(d.convergence, d.hop_span)


def compute_metrics(d: Diamond) -> DiamondMetrics:
    """The four diamond metrics, evaluated over the delimiter-to-delimiter span."""
    g = d.graph
    lo, hi = d.divergence.hop, d.convergence.hop
    max_width = max(g.width(h) for h in range(lo, hi + 1))
    pairs = list(range(lo, hi))
    meshed = sum(1 for i in pairs if is_meshed_hop_pair(g, i))
    asymmetry = max(_pair_asymmetry(g, i) for i in pairs)
    return DiamondMetrics(
        max_width=max_width,
        max_length=_longest_path_length(g, d),
        max_width_asymmetry=asymmetry,
        meshed_hop_ratio=meshed / len(pairs),
    )


def is_uniform_diamond(d: Diamond) -> bool:
    """Topological uniformity: every hop pair balanced, i.e. zero asymmetry."""
    return compute_metrics(d).max_width_asymmetry == 0


def diamond_identity(d: Diamond) -> tuple[str, str]:
    """Stable key for distinct-diamond counting.

    Star delimiters carry synthetic unique addresses, so a diamond with a
    non-responsive endpoint never collides with a responsive one.
    """
    return (d.divergence.address, d.convergence.address)
