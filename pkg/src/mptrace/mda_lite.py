"""Hop-by-hop multipath tracing without per-vertex node control.

Interfaces are enumerated one hop at a time under the stopping rule, flows
being recycled from earlier hops so edges come along for free.  Remaining
edges are filled in deterministically, then each adjacent multi-interface
hop pair is screened for meshing (with a small budget of steered flows) and
for width asymmetry.  Either finding means the cheap hop-by-hop assumptions
do not hold, and the trace falls back to full node control from the
enclosing divergence point onward.
"""

from __future__ import annotations

from dataclasses import dataclass

from .engine import (
    DISCOVERY,
    EDGE_COMPLETION,
    MESHING_TEST,
    FlowGenerationError,
    ProbeCounts,
    TraceEngine,
)
from .mda import TraceResult, mda_continue
from .model import MultipathGraph, Vertex
from .probing import ProbeSession
from .stopping import StoppingPoints

ASYMMETRIC = "asymmetric"
UNIFORM_SO_FAR = "uniform-so-far"
MESHED = "meshed"
NOT_DETECTED = "not-detected"


@dataclass(frozen=True)
class MeshingTestConfig:
    """phi flows are steered through each interface on the probed side."""

    phi: int = 2

    def __post_init__(self) -> None:
        if self.phi < 2:
            raise ValueError("phi must be at least 2 to be able to detect meshing")


@dataclass(frozen=True)
class MeshingTestRecord:
    hop_pair: tuple[int, int]
    direction: str
    probes_spent: int
    outcome: str

    def to_json_obj(self) -> dict:
        return {
            "hop_pair": list(self.hop_pair),
            "direction": self.direction,
            "probes_spent": self.probes_spent,
            "outcome": self.outcome,
        }


@dataclass
class LiteTraceResult:
    graph: MultipathGraph
    switched_to_mda: bool
    switch_hop: int | None
    switch_reason: str | None
    probe_counts: ProbeCounts
    meshing_tests: list[MeshingTestRecord]
    under_explored: list[Vertex]
    evidence: dict
    algorithm: str = "mda-lite"
    seed: int = 0

    @property
    def probes_total(self) -> int:
        return self.probe_counts.total

    @property
    def vertex_discovery_probes(self) -> int:
        return self.probe_counts.category_total(DISCOVERY)


def _responsive_width(g: MultipathGraph, hop: int) -> int:
    return sum(1 for v in g.vertices_at(hop) if v.responsive)


def discover_hop(engine: TraceEngine, hop: int, sp: StoppingPoints) -> None:
    """Enumerate the interfaces at `hop` under the stopping rule.

    Flows are reused in the prescribed order: one witness flow from each
    interface of the previous hop, then every other flow already used in the
    trace, then fresh ones.  Probing stops when n_w discovery probes have
    been spent at the hop, w being the interfaces found so far; re-entering
    after an out-of-band find resumes the same budget.
    """
    g = engine.graph
    queue: list[int] = []
    if hop >= 2:
        for pv in g.vertices_at(hop - 1):
            for f in engine.pool(pv):
                if not engine.was_sent(f, hop):
                    queue.append(f)
                    break
    qi = 0
    used_i = 0
    sent = engine.counts.hop_category(hop, DISCOVERY)
    while sent < sp.n(max(_responsive_width(g, hop), 1)):
        flow = None
        while qi < len(queue):
            cand = queue[qi]
            qi += 1
            if not engine.was_sent(cand, hop):
                flow = cand
                break
        if flow is None:
            while used_i < len(engine.used_flows):
                cand = engine.used_flows[used_i]
                used_i += 1
                if not engine.was_sent(cand, hop):
                    flow = cand
                    break
        if flow is None:
            flow = engine.fresh_flow()
        engine.probe(flow, hop, DISCOVERY)
        sent += 1


def complete_edges(engine: TraceEngine, i: int) -> list[int]:
    """Deterministically connect stragglers between hops i and i+1.

    With fewer interfaces downstream, each successor-less interface at hop i
    forwards one of its witness flows; with more downstream, each
    predecessor-less interface at hop i+1 traces one witness flow backward;
    equal widths do both.  A hop with a single interface needs no probes at
    all: every flow of the other hop necessarily transits it, so the edges
    are entailed.  Returns the hops where a completion probe surfaced a new
    interface (evidence that the earlier stopping rule exited too soon).
    """
    g = engine.graph
    wi, wj = g.width(i), g.width(i + 1)
    if wi == 0 or wj == 0:
        raise ValueError(f"hop pair ({i}, {i + 1}) not fully discovered")
    new_hops: list[int] = []

    def on_new(v: Vertex) -> None:
        new_hops.append(v.hop)

    engine.new_vertex_listeners.append(on_new)
    try:
        if wi == 1:
            v1 = g.vertices_at(i)[0]
            for w in list(g.vertices_at(i + 1)):
                if not g.in_edges(w):
                    for f in engine.pool(w):
                        g.add_edge(v1, w, f)
        elif wj == 1:
            w1 = g.vertices_at(i + 1)[0]
            for v in list(g.vertices_at(i)):
                if not g.out_edges(v):
                    for f in engine.pool(v):
                        g.add_edge(v, w1, f)
        else:
            if wj <= wi:
                for v in list(g.vertices_at(i)):
                    if g.out_edges(v):
                        continue
                    for f in engine.pool(v):
                        if not engine.was_sent(f, i + 1):
                            engine.probe(f, i + 1, EDGE_COMPLETION)
                            break
            if wj >= wi:
                for w in list(g.vertices_at(i + 1)):
                    if g.in_edges(w):
                        continue
                    for f in engine.pool(w):
                        if not engine.was_sent(f, i):
                            engine.probe(f, i, EDGE_COMPLETION)
                            break
    finally:
        engine.new_vertex_listeners.remove(on_new)
    return sorted(set(new_hops))


def _meshing_evident(g: MultipathGraph, i: int, direction: str) -> bool:
    if direction == "forward":
        return any(
            len({e.dst.address for e in g.out_edges(v)}) >= 2
            for v in g.vertices_at(i)
            if v.responsive
        )
    return any(
        len({e.src.address for e in g.in_edges(w)}) >= 2
        for w in g.vertices_at(i + 1)
        if w.responsive
    )


def meshing_test(
    engine: TraceEngine, i: int, cfg: MeshingTestConfig
) -> tuple[MeshingTestRecord, list[int]]:
    """Screen hop pair (i, i+1) for cross-connections.

    Tracing goes from the wider hop toward the narrower one (forward on
    ties): phi flows verified through each interface on the wider side are
    resolved at the other hop, witnesses whose landing is already known
    costing nothing.  Forward tracing flags meshing on any out-degree of two
    or more, backward tracing on any in-degree of two or more.  Also returns
    hops where probing surfaced a new interface.
    """
    g = engine.graph
    wi, wj = _responsive_width(g, i), _responsive_width(g, i + 1)
    if wi < 2 or wj < 2:
        raise ValueError("meshing test needs two multi-interface hops")
    direction = "forward" if wi >= wj else "backward"
    source_hop = i if direction == "forward" else i + 1
    probe_ttl = i + 1 if direction == "forward" else i
    spent_before = engine.counts.category_total(MESHING_TEST)
    new_hops: list[int] = []

    def on_new(v: Vertex) -> None:
        new_hops.append(v.hop)

    engine.new_vertex_listeners.append(on_new)
    try:
        detected = _meshing_evident(g, i, direction)
        if not detected:
            for v in list(g.vertices_at(source_hop)):
                if not v.responsive:
                    continue
                try:
                    engine.ensure_pool(v, cfg.phi, MESHING_TEST)
                except FlowGenerationError:
                    continue  # siblings may still reveal the meshing
                pool = engine.pool(v)
                known = [f for f in pool if engine.observation(f, probe_ttl) is not None]
                fresh = [f for f in pool if engine.observation(f, probe_ttl) is None]
                for f in (known + fresh)[: cfg.phi]:
                    if engine.observation(f, probe_ttl) is None and not engine.was_sent(
                        f, probe_ttl
                    ):
                        engine.probe(f, probe_ttl, MESHING_TEST)
                if _meshing_evident(g, i, direction):
                    detected = True
                    break
    finally:
        engine.new_vertex_listeners.remove(on_new)
    record = MeshingTestRecord(
        hop_pair=(i, i + 1),
        direction=direction,
        probes_spent=engine.counts.category_total(MESHING_TEST) - spent_before,
        outcome=MESHED if detected else NOT_DETECTED,
    )
    return record, sorted(set(new_hops))


def meshing_miss_probability(fanouts: list[int], phi: int) -> float:
    """Chance the meshing test misses, given the true per-interface fanouts.

    With phi flows steered through an interface whose links spread over d
    next-hop interfaces, all phi land on one of them with probability
    1/d^(phi-1); the test misses only if that happens at every interface.
    """
    p = 1.0
    for d in fanouts:
        p *= 1.0 / d ** (phi - 1)
    return p


def asymmetry_test(g: MultipathGraph, i: int) -> str:
    """Purely topological uniformity screen for hop pair (i, i+1).

    Flags asymmetry when successor counts differ across hop-i interfaces or
    predecessor counts differ across hop-(i+1) interfaces; requires edge
    completion to have run for the pair.
    """
    succ = [
        len({e.dst.address for e in g.out_edges(v)})
        for v in g.vertices_at(i)
        if v.responsive
    ]
    pred = [
        len({e.src.address for e in g.in_edges(w)})
        for w in g.vertices_at(i + 1)
        if w.responsive
    ]
    if len(set(succ)) > 1 or len(set(pred)) > 1:
        return ASYMMETRIC
    return UNIFORM_SO_FAR


def _settle_region(engine: TraceEngine, sp: StoppingPoints, upto_pair: int) -> None:
    """Edge-complete pairs up to `upto_pair`, rescanning hops that grow."""
    pending = {upto_pair}
    rounds = 0
    while pending:
        rounds += 1
        if rounds > 10_000:
            raise RuntimeError("edge completion failed to stabilize")
        i = min(pending)
        pending.discard(i)
        if engine.graph.width(i) == 0 or engine.graph.width(i + 1) == 0:
            continue
        for nh in complete_edges(engine, i):
            discover_hop(engine, nh, sp)
            for pair in (nh - 1, nh):
                if 1 <= pair <= upto_pair:
                    pending.add(pair)


def _divergence_hop(g: MultipathGraph, before: int) -> int:
    """Nearest single-interface hop at or before `before`; 0 means the source."""
    for hop in range(before, 0, -1):
        if g.width(hop) == 1:
            return hop
    return 0


def mda_lite_trace(
    session: ProbeSession,
    sp: StoppingPoints,
    cfg: MeshingTestConfig | None = None,
    max_ttl: int = 30,
    seed: int = 0,
    switching_enabled: bool = True,
) -> LiteTraceResult:
    """Trace hop by hop, escalating to full node control when warranted.

    switching_enabled=False keeps the pure hop-by-hop behavior (useful to
    measure the discovery cost in isolation); detection of meshing or
    asymmetry is then still recorded per hop pair but not acted upon.
    """
    cfg = cfg or MeshingTestConfig()
    engine = TraceEngine(session, sp, max_ttl=max_ttl, seed=seed)
    g = engine.graph
    records: list[MeshingTestRecord] = []
    switch: tuple[int, str] | None = None
    hop = 1
    while hop <= max_ttl:
        discover_hop(engine, hop, sp)
        if hop >= 2:
            _settle_region(engine, sp, hop - 1)
            if switching_enabled:
                pair = hop - 1
                if _responsive_width(g, pair) >= 2 and _responsive_width(g, pair + 1) >= 2:
                    while True:
                        record, grown = meshing_test(engine, pair, cfg)
                        records.append(record)
                        if record.outcome == MESHED:
                            switch = (pair, "meshing")
                            break
                        if not grown:
                            break
                        for nh in grown:
                            discover_hop(engine, nh, sp)
                        _settle_region(engine, sp, pair)
                    if switch:
                        break
                if asymmetry_test(g, pair) == ASYMMETRIC:
                    switch = (pair, "asymmetry")
                    break
        if engine.hop_is_destination(hop):
            break
        hop += 1
    if switch is not None:
        mda_continue(engine, _divergence_hop(g, switch[0]))
    return LiteTraceResult(
        graph=g,
        switched_to_mda=switch is not None,
        switch_hop=switch[0] if switch else None,
        switch_reason=switch[1] if switch else None,
        probe_counts=engine.counts,
        meshing_tests=records,
        under_explored=list(engine.under_explored),
        evidence=dict(engine.evidence),
        seed=seed,
    )


def single_flow_trace(
    session: ProbeSession, max_ttl: int = 30, seed: int = 0
) -> TraceResult:
    """One-flow baseline: a classic single-path trace, one probe per hop."""
    engine = TraceEngine(session, sp=StoppingPoints.from_alpha(0.05), max_ttl=max_ttl, seed=seed)
    flow = engine.fresh_flow()
    for ttl in range(1, max_ttl + 1):
        vertex, _reply = engine.probe(flow, ttl, DISCOVERY)
        if vertex.responsive and vertex.address == session.destination:
            break
    return TraceResult(
        graph=engine.graph,
        probe_counts=engine.counts,
        under_explored=[],
        evidence=dict(engine.evidence),
        algorithm="single-flow",
        seed=seed,
    )
