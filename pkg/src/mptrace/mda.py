"""Classic multipath detection with full node control.

The algorithm keeps an open set of discovered interfaces whose successors
are not yet enumerated.  Exploring an interface sends probes that provably
transit it (node control), applying the stopping rule per interface.  It is
used standalone and as the fallback the hop-by-hop tracer escalates to.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

from .engine import DISCOVERY, MDA_PHASE, NODE_CONTROL, ProbeCounts, TraceEngine
from .model import FlowId, MultipathGraph, Vertex
from .probing import ProbeSession
from .stopping import StoppingPoints


@dataclass
class OpenSet:
    """Interfaces pending successor enumeration, FIFO by (hop, discovery order)."""

    _heap: list[tuple[int, int, Vertex]] = field(default_factory=list)
    _seq: itertools.count = field(default_factory=lambda: itertools.count())
    _seen: set[Vertex] = field(default_factory=set)

    def push(self, v: Vertex) -> None:
        if v not in self._seen:
            self._seen.add(v)
            heapq.heappush(self._heap, (v.hop, next(self._seq), v))

    def pop(self) -> Vertex:
        return heapq.heappop(self._heap)[2]

    def __bool__(self) -> bool:
        return bool(self._heap)


@dataclass
class TraceResult:
    graph: MultipathGraph
    probe_counts: ProbeCounts
    under_explored: list[Vertex]
    evidence: dict
    algorithm: str = "mda"
    seed: int = 0

    @property
    def probes_total(self) -> int:
        return self.probe_counts.total

    def probes_at_hop(self, hop: int) -> int:
        return self.probe_counts.hop_total(hop)


def _eligible(engine: TraceEngine, v: Vertex) -> bool:
    return (
        v.responsive
        and v.address != engine.graph.destination
        and v.hop < engine.max_ttl
    )


def run_open_set(
    engine: TraceEngine,
    seeds: list[Vertex | None],
    category: str = DISCOVERY,
    control_category: str = NODE_CONTROL,
) -> None:
    """Explore every reachable interface starting from `seeds`.

    New interfaces observed while probing (including ones surfacing during
    node-control verification at their own hop) join the open set and are
    explored in (hop, discovery order).
    """
    open_set = OpenSet()
    pending_root = None in seeds

    def on_new(v: Vertex) -> None:
        if _eligible(engine, v):
            open_set.push(v)

    engine.new_vertex_listeners.append(on_new)
    try:
        for s in seeds:
            if s is not None and _eligible(engine, s):
                open_set.push(s)
        if pending_root:
            engine.explore_vertex(None, category, control_category)
        while open_set:
            engine.explore_vertex(open_set.pop(), category, control_category)
    finally:
        engine.new_vertex_listeners.remove(on_new)


def mda_trace(
    session: ProbeSession,
    sp: StoppingPoints,
    max_ttl: int = 30,
    seed: int = 0,
) -> TraceResult:
    """Trace all load-balanced paths to the session's destination."""
    engine = TraceEngine(session, sp, max_ttl=max_ttl, seed=seed)
    run_open_set(engine, [None])
    return TraceResult(
        graph=engine.graph,
        probe_counts=engine.counts,
        under_explored=list(engine.under_explored),
        evidence=dict(engine.evidence),
        algorithm="mda",
        seed=seed,
    )


def mda_continue(engine: TraceEngine, from_hop: int) -> None:
    """Re-trace with full node control from `from_hop` onward.

    Every interface already known at or beyond that hop is enumerated again
    under per-vertex budgets; knowledge gathered so far (pools, edges) seeds
    the exploration, which can only lower the failure odds relative to a
    cold start.
    """
    seeds: list[Vertex | None] = []
    if from_hop < 1:
        seeds.append(None)
    for hop in range(max(from_hop, 1), engine.graph.max_hop + 1):
        seeds.extend(v for v in engine.graph.vertices_at(hop))
    run_open_set(engine, seeds, category=MDA_PHASE, control_category=MDA_PHASE)


def node_control_flows(
    engine: TraceEngine, v: Vertex, need: int
) -> tuple[list[FlowId], int]:
    """Return at least `need` flows verified to transit v, topping up by probing.

    The second element is the number of extra verification probes spent (the
    delta overhead).  Raises FlowGenerationError past the attempt cap.
    """
    return engine.ensure_pool(v, need, NODE_CONTROL)
