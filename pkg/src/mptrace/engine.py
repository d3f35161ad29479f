"""Shared bookkeeping for the trace algorithms.

The engine owns the graph under construction, the per-vertex pools of flows
verified to reach each interface, per-hop probe counters split by phase,
and the reply metadata later consumed by alias resolution.  Both trace
algorithms drive probing exclusively through TraceEngine.probe so that
accounting, flow logging, and new-vertex notifications stay consistent.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Callable

from .model import FlowId, MultipathGraph, Vertex, star_address
from .probing import (
    INDIRECT,
    NO_REPLY,
    EvidenceStore,
    Probe,
    ProbeReply,
    ProbeSession,
)
from .stopping import StoppingPoints

# probe accounting phases
DISCOVERY = "discovery"
NODE_CONTROL = "node_control"
EDGE_COMPLETION = "edge_completion"
MESHING_TEST = "meshing_test"
MDA_PHASE = "mda"

CONTROL_CAP_FACTOR = 10  # flow-generation trials allowed per unit of need


class FlowGenerationError(RuntimeError):
    """Could not steer enough flows through a vertex within the attempt cap."""


@dataclass
class ProbeCounts:
    by_hop_category: dict[int, dict[str, int]] = field(default_factory=dict)

    def add(self, hop: int, category: str) -> None:
        per_hop = self.by_hop_category.setdefault(hop, {})
        per_hop[category] = per_hop.get(category, 0) + 1

    def hop_total(self, hop: int) -> int:
        return sum(self.by_hop_category.get(hop, {}).values())

    def category_total(self, category: str) -> int:
        return sum(per.get(category, 0) for per in self.by_hop_category.values())

    def hop_category(self, hop: int, category: str) -> int:
        return self.by_hop_category.get(hop, {}).get(category, 0)

    @property
    def total(self) -> int:
        return sum(self.hop_total(h) for h in self.by_hop_category)

    def to_json_obj(self) -> dict:
        return {
            "total": self.total,
            "by_hop": {str(h): self.hop_total(h) for h in sorted(self.by_hop_category)},
            "by_category": {
                cat: self.category_total(cat)
                for cat in sorted({c for per in self.by_hop_category.values() for c in per})
            },
            "by_hop_category": {
                str(h): dict(sorted(self.by_hop_category[h].items()))
                for h in sorted(self.by_hop_category)
            },
        }


class TraceEngine:
    """Mutable state of one trace over one probing session."""

    def __init__(
        self,
        session: ProbeSession,
        sp: StoppingPoints,
        max_ttl: int = 30,
        seed: int = 0,
        source: str = "source",
        trace_id: str | None = None,
    ):
        self.session = session
        self.sp = sp
        self.max_ttl = max_ttl
        self.rng = random.Random(seed)
        self.trace_id = trace_id if trace_id is not None else f"t{seed}"
        self.graph = MultipathGraph(source=source, destination=session.destination)
        self.counts = ProbeCounts()
        self.evidence = EvidenceStore()
        self.pools: dict[Vertex, list[FlowId]] = {}
        self._pool_sets: dict[Vertex, set[FlowId]] = {}
        self.used_flows: list[FlowId] = []
        self._used_set: set[FlowId] = set()
        self._sent: set[tuple[FlowId, int]] = set()
        self._probe_ids = itertools.count(1)
        self._star_seq = itertools.count(1)
        self.under_explored: list[Vertex] = []
        self.new_vertex_listeners: list[Callable[[Vertex], None]] = []
        self.evidence_round = 0  # all trace probing is round 0

    # -- flow management -----------------------------------------------------

    def fresh_flow(self) -> FlowId:
        while True:
            f = self.rng.getrandbits(48)
            if f not in self._used_set:
                return f

    def _mark_used(self, flow: FlowId) -> None:
        if flow not in self._used_set:
            self._used_set.add(flow)
            self.used_flows.append(flow)

    def pool(self, v: Vertex) -> list[FlowId]:
        return self.pools.get(v, [])

    def pool_contains(self, v: Vertex, flow: FlowId) -> bool:
        return flow in self._pool_sets.get(v, ())

    def was_sent(self, flow: FlowId, ttl: int) -> bool:
        return (flow, ttl) in self._sent

    def observation(self, flow: FlowId, hop: int) -> str | None:
        return self.graph.flow_log.get(flow, {}).get(hop)

    # -- probing ---------------------------------------------------------------

    def probe(self, flow: FlowId, ttl: int, category: str) -> tuple[Vertex, ProbeReply]:
        """Send one TTL-limited probe and fold the reply into the state."""
        if (flow, ttl) in self._sent:
            raise RuntimeError(f"flow {flow} already probed at ttl {ttl}")
        self._sent.add((flow, ttl))
        self._mark_used(flow)
        self.counts.add(ttl, category)
        reply = self.session.send(
            Probe(flow_id=flow, ttl=ttl, kind=INDIRECT, probe_id=next(self._probe_ids))
        )
        if reply.kind == NO_REPLY:
            addr = star_address(self.trace_id, ttl, next(self._star_seq))
            responsive = False
        else:
            addr = reply.responder
            responsive = True
        vertex, is_new = self.graph.ensure_vertex(addr, ttl, responsive)
        self.graph.record_observation(flow, vertex)
        bucket = self._pool_sets.setdefault(vertex, set())
        if flow not in bucket:
            bucket.add(flow)
            self.pools.setdefault(vertex, []).append(flow)
        if responsive:
            self.evidence.for_address(addr).record(reply, self.evidence_round)
        if is_new:
            for listener in self.new_vertex_listeners:
                listener(vertex)
        return vertex, reply

    # -- node control ------------------------------------------------------------

    def ensure_pool(self, v: Vertex, need: int, category: str) -> tuple[list[FlowId], int]:
        """Top v's verified pool up to `need` flows; returns (flows, probes spent).

        Fresh flows are probed at v's hop until enough land on v.  Misses
        still land in sibling pools, so the overhead is shared; the trial cap
        guards against pathological splits.
        """
        spent = 0
        attempts = 0
        while len(self.pools.get(v, [])) < need:
            if attempts >= CONTROL_CAP_FACTOR * need:
                raise FlowGenerationError(
                    f"pool for {v.address}@{v.hop} stuck at "
                    f"{len(self.pools.get(v, []))}/{need}"
                )
            self.probe(self.fresh_flow(), v.hop, category)
            spent += 1
            attempts += 1
        return list(self.pools[v][:need]), spent

    # -- exploration (stopping-rule enumeration of one vertex's successors) -----

    def explore_vertex(
        self,
        v: Vertex | None,
        category: str,
        control_category: str | None = None,
    ) -> None:
        """Enumerate the successors of v under the stopping rule.

        v is None for the probing host itself (successors sit at hop 1).
        Probes cross v until n_k of them have been sent, where k counts the
        distinct responsive successors seen so far; a new successor raises
        the budget to n_{k+1}.  Flows come from v's verified pool first.
        When v's hop holds a single interface, any flow necessarily transits
        v, so used and fresh flows qualify and the crossing is recorded as an
        entailed edge.  Otherwise fresh flows are steered through v by
        probing at v's own hop (node control); running past the trial cap
        marks v under-explored.  Non-responses consume budget without
        extending it.
        """
        hop = 0 if v is None else v.hop
        next_ttl = hop + 1
        if next_ttl > self.max_ttl:
            return
        successors: set[str] = set()
        if v is not None:
            successors = {e.dst.address for e in self.graph.out_edges(v) if e.dst.responsive}
        control = control_category if control_category is not None else category
        sent = 0
        pool_i = 0
        used_i = 0
        gen_attempts = 0
        while sent < self.sp.n(max(len(successors), 1)):
            flow: FlowId | None = None
            verified = False
            if v is not None:
                pool = self.pools.get(v, [])
                while pool_i < len(pool):
                    cand = pool[pool_i]
                    pool_i += 1
                    if not self.was_sent(cand, next_ttl):
                        flow = cand
                        verified = True
                        break
            if flow is None:
                if v is None or self.graph.width(hop) == 1:
                    while used_i < len(self.used_flows):
                        cand = self.used_flows[used_i]
                        used_i += 1
                        if self.was_sent(cand, next_ttl):
                            continue
                        if v is not None:
                            seen = self.observation(cand, hop)
                            if seen is not None and seen != v.address:
                                continue
                        flow = cand
                        verified = v is not None and self.pool_contains(v, cand)
                        break
                    if flow is None:
                        flow = self.fresh_flow()
                else:
                    budget = self.sp.n(max(len(successors), 1))
                    while gen_attempts < CONTROL_CAP_FACTOR * budget:
                        cand = self.fresh_flow()
                        gen_attempts += 1
                        landed, _ = self.probe(cand, hop, control)
                        if landed is v:
                            flow = cand
                            verified = True
                            break
                    if flow is None:
                        self.under_explored.append(v)
                        return
            vertex, _reply = self.probe(flow, next_ttl, category)
            sent += 1
            if v is not None and not verified:
                # single-interface hop: transit through v is entailed
                self.graph.add_edge(v, vertex, flow)
            if vertex.responsive and vertex.address not in successors:
                successors.add(vertex.address)

    # -- convenience ---------------------------------------------------------

    def hop_is_destination(self, hop: int) -> bool:
        vertices = self.graph.vertices_at(hop)
        if not vertices:
            return False
        return all(
            v.address == self.graph.destination for v in vertices if v.responsive
        ) and any(v.responsive for v in vertices)
