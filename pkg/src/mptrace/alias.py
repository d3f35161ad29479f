"""Router-level resolution of a hop's interfaces.

Interfaces observed at one hop are candidate aliases of common routers.
Starting from a single all-inclusive set, probing evidence splits pairs
apart: interleaved IP-ID series that cannot come from one counter (the
monotonic bounds test), reply TTLs implying different initial-TTL classes
(network fingerprinting), and differing constant MPLS labels.  A ten-round
schedule of interleaved probing refines the partition; surviving
multi-interface sets are declared routers.  Collapsing a trace graph over
the partitions yields the router-level topology and classifies what became
of each interface-level diamond.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

from .model import MultipathGraph, extract_diamonds
from .probing import (
    DIRECT,
    INDIRECT,
    AddressEvidence,
    EvidenceStore,
    Probe,
    ProbeSession,
)

TTL_CLASSES = (32, 64, 128, 255)
MIN_MBT_SAMPLES = 3  # per-series floor for a monotonicity verdict

COMPATIBLE = "compatible"
INCOMPATIBLE = "incompatible"
UNABLE = "unable"

RESOLVABLE = "resolvable"
UNABLE_UNRESPONSIVE = "unable-unresponsive"
UNABLE_SHORT = "unable-short-series"
UNABLE_CONSTANT = "unable-constant"
UNABLE_NON_MONOTONIC = "unable-non-monotonic"

COLLAPSE_CASES = (
    "no-change",
    "single-smaller-diamond",
    "multiple-smaller-diamonds",
    "one-path",
)


@dataclass
class IpIdSeries:
    """IP-ID samples of one interface on the session-wide sequence axis."""

    address: str
    samples: list[tuple[int, int]] = field(default_factory=list)  # (sequence, ip_id)

    def __post_init__(self) -> None:
        seqs = [s for s, _ in self.samples]
        if any(b <= a for a, b in zip(seqs, seqs[1:])):
            raise ValueError("sample sequence numbers must be strictly increasing")

    def values(self) -> list[int]:
        return [v for _, v in self.samples]


def _descents(values: list[int]) -> int:
    return sum(1 for a, b in zip(values, values[1:]) if b <= a)


def series_status(series: IpIdSeries) -> str:
    """Usability of one series for the monotonic bounds test."""
    values = series.values()
    if not values:
        return UNABLE_UNRESPONSIVE
    if len(values) < MIN_MBT_SAMPLES:
        return UNABLE_SHORT
    if len(set(values)) == 1:
        return UNABLE_CONSTANT
    if _descents(values) >= 2:
        return UNABLE_NON_MONOTONIC
    return RESOLVABLE


def mbt_compatible(a: IpIdSeries, b: IpIdSeries) -> str:
    """Monotonic bounds test on two interleaved IP-ID series.

    The merged sequence must be strictly increasing except for at most one
    descent, which accounts for a single 16-bit counter wraparound.  Any
    further out-of-order identifier is proof of separate counters.  Series
    that are constant, too short, or non-monotonic on their own support no
    verdict.
    """
    if series_status(a) != RESOLVABLE or series_status(b) != RESOLVABLE:
        return UNABLE
    merged = sorted(a.samples + b.samples, key=lambda s: s[0])
    values = [v for _, v in merged]
    return COMPATIBLE if _descents(values) <= 1 else INCOMPATIBLE


def infer_initial_ttl(reply_ttl: int) -> int:
    """Initial-TTL class a reply started from: smallest class >= reply TTL."""
    if not 1 <= reply_ttl <= 255:
        raise ValueError(f"reply TTL out of range: {reply_ttl}")
    for cls in TTL_CLASSES:
        if reply_ttl <= cls:
            return cls
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class Fingerprint:
    te_initial_ttl: int | None
    echo_initial_ttl: int | None


def _constant_label(labels: list[int]) -> int | None:
    if labels and len(set(labels)) == 1:
        return labels[0]
    return None


def mpls_split(labels: dict[str, list[int]]) -> dict[tuple[str, str], str]:
    """Per-pair refinement decision from observed MPLS label multisets.

    Interfaces with constant, differing labels belong to different routers
    ("split"); identical constant labels hint at a shared router
    ("affinity"); varying or absent labels decide nothing ("none").
    """
    constant = {addr: _constant_label(obs) for addr, obs in labels.items()}
    decisions: dict[tuple[str, str], str] = {}
    for a, b in itertools.combinations(sorted(labels), 2):
        la, lb = constant[a], constant[b]
        if la is None or lb is None:
            decisions[(a, b)] = "none"
        elif la == lb:
            decisions[(a, b)] = "affinity"
        else:
            decisions[(a, b)] = "split"
    return decisions


@dataclass
class AliasPartition:
    """Alias sets of one hop after some amount of probing.

    sets partitions every responsive address of the hop; addresses whose
    IP-ID behavior supports no verdict sit in singleton sets and are marked
    unable.  evidence lists which test separated which pair.
    """

    hop: int
    round_index: int
    sets: list[tuple[str, ...]]
    evidence: list[tuple[str, str, str]]
    status: dict[str, str]
    affinities: list[tuple[str, str]] = field(default_factory=list)
    conflicts: list[str] = field(default_factory=list)

    def declared_routers(self) -> list[tuple[str, ...]]:
        return [s for s in self.sets if len(s) >= 2]

    def declared_pairs(self) -> set[tuple[str, str]]:
        pairs: set[tuple[str, str]] = set()
        for s in self.declared_routers():
            pairs.update(tuple(sorted(p)) for p in itertools.combinations(s, 2))
        return pairs

    def set_of(self, address: str) -> tuple[str, ...]:
        for s in self.sets:
            if address in s:
                return s
        raise KeyError(address)

    def to_json_obj(self) -> dict:
        return {
            "hop": self.hop,
            "round": self.round_index,
            "sets": [list(s) for s in self.sets],
            "evidence": [list(e) for e in self.evidence],
            "status": dict(sorted(self.status.items())),
            "affinities": [list(a) for a in self.affinities],
            "conflicts": list(self.conflicts),
        }


def _series_from_evidence(ev: AddressEvidence, upto_round: int) -> IpIdSeries:
    samples = [(seq, val) for rnd, seq, val in ev.ip_id_samples if rnd <= upto_round]
    samples.sort(key=lambda s: s[0])
    return IpIdSeries(ev.address, samples)


def _fingerprint_from_evidence(ev: AddressEvidence, upto_round: int) -> Fingerprint:
    te = {infer_initial_ttl(t) for rnd, t in ev.te_reply_ttls if rnd <= upto_round}
    echo = {infer_initial_ttl(t) for rnd, t in ev.echo_reply_ttls if rnd <= upto_round}
    # several inferred classes for one interface means the data is unusable
    return Fingerprint(
        te_initial_ttl=te.pop() if len(te) == 1 else None,
        echo_initial_ttl=echo.pop() if len(echo) == 1 else None,
    )


def partition_from_evidence(
    hop: int,
    addresses: list[str],
    evidence: EvidenceStore | dict[str, AddressEvidence],
    upto_round: int,
) -> AliasPartition:
    """Set-based refinement from all evidence up to the given round.

    Addresses start in one set and are separated by recorded proof only, so
    every cross-set pair carries at least one failed test.  The monotonic
    bounds test outranks an MPLS affinity hint; contradicted hints are kept
    in the conflict log rather than merged.
    """
    addrs = list(addresses)
    empty = AddressEvidence("")
    series = {
        a: _series_from_evidence(evidence.get(a, empty), upto_round) for a in addrs
    }
    prints = {
        a: _fingerprint_from_evidence(evidence.get(a, empty), upto_round) for a in addrs
    }
    labels = {
        a: [
            lab
            for rnd, lab in evidence.get(a, empty).mpls_labels
            if rnd <= upto_round
        ]
        for a in addrs
    }
    status = {a: series_status(series[a]) for a in addrs}

    splits: list[tuple[str, str, str]] = []
    affinities: list[tuple[str, str]] = []
    split_pairs: set[tuple[str, str]] = set()
    mpls_decisions = mpls_split(labels)
    for a, b in itertools.combinations(sorted(addrs), 2):
        if status[a] == RESOLVABLE and status[b] == RESOLVABLE:
            if mbt_compatible(series[a], series[b]) == INCOMPATIBLE:
                splits.append(("mbt", a, b))
                split_pairs.add((a, b))
        fa, fb = prints[a], prints[b]
        if (
            fa.te_initial_ttl is not None
            and fb.te_initial_ttl is not None
            and fa.te_initial_ttl != fb.te_initial_ttl
        ) or (
            fa.echo_initial_ttl is not None
            and fb.echo_initial_ttl is not None
            and fa.echo_initial_ttl != fb.echo_initial_ttl
        ):
            splits.append(("fingerprint", a, b))
            split_pairs.add((a, b))
        decision = mpls_decisions.get((a, b), "none")
        if decision == "split":
            splits.append(("mpls", a, b))
            split_pairs.add((a, b))
        elif decision == "affinity":
            affinities.append((a, b))

    def is_split(a: str, b: str) -> bool:
        return (a, b) in split_pairs if a < b else (b, a) in split_pairs

    resolvable = sorted(a for a in addrs if status[a] == RESOLVABLE)
    sets: list[list[str]] = [resolvable] if resolvable else []
    # split sets until no internal pair carries contrary evidence
    changed = True
    while changed:
        changed = False
        for idx, current in enumerate(sets):
            pair = next(
                (
                    (a, b)
                    for a, b in itertools.combinations(current, 2)
                    if is_split(a, b)
                ),
                None,
            )
            if pair is None:
                continue
            groups: list[list[str]] = [[pair[0]], [pair[1]]]
            for c in current:
                if c in pair:
                    continue
                placed = False
                for grp in groups:
                    if not any(is_split(c, member) for member in grp):
                        grp.append(c)
                        placed = True
                        break
                if not placed:
                    groups.append([c])
            sets[idx : idx + 1] = [sorted(g) for g in groups]
            changed = True
            break

    conflicts: list[str] = []
    for a, b in affinities:
        set_a = next((s for s in sets if a in s), None)
        set_b = next((s for s in sets if b in s), None)
        if set_a is None or set_b is None:
            continue  # unable addresses stay singletons regardless of hints
        if set_a is set_b:
            continue
        blocked = [
            (x, y) for x in set_a for y in set_b if is_split(x, y)
        ]
        if blocked:
            conflicts.append(
                f"mpls affinity {a}~{b} contradicted by splits {sorted(blocked)}"
            )
        else:
            merged = sorted(set_a + set_b)
            sets.remove(set_a)
            sets.remove(set_b)
            sets.append(merged)

    final_sets = [tuple(s) for s in sets]
    final_sets.extend((a,) for a in sorted(addrs) if status[a] != RESOLVABLE)
    final_sets.sort(key=lambda s: s[0])
    return AliasPartition(
        hop=hop,
        round_index=upto_round,
        sets=final_sets,
        evidence=sorted(set(splits)),
        status=status,
        affinities=sorted(set(affinities)),
        conflicts=conflicts,
    )


def witness_flows(graph: MultipathGraph, hop: int) -> dict[str, int]:
    """One flow known to elicit a reply from each interface at `hop`."""
    out: dict[str, int] = {}
    for flow, log in graph.flow_log.items():
        addr = log.get(hop)
        if addr is not None and addr not in out:
            out[addr] = flow
    return out


def resolve_hop(
    session: ProbeSession,
    addresses: list[str],
    hop: int,
    witnesses: dict[str, int],
    evidence: EvidenceStore,
    rounds: int = 10,
    probes_per_round: int = 30,
) -> list[AliasPartition]:
    """Refine one hop's alias sets over a fixed probing schedule.

    Round 0 uses the trace-phase evidence alone.  Round 1 adds one direct
    probe per interface (completing the fingerprints) plus the first round
    of interleaved TTL-limited probing, `probes_per_round` per interface;
    every later round adds another such batch.  Probes cycle round-robin
    across the interfaces so merged IP-ID series alternate.  Returns the
    partition after every round, index 0 first.
    """
    partitions = [partition_from_evidence(hop, addresses, evidence, 0)]
    probe_ids = itertools.count(1_000_000)
    for r in range(1, rounds + 1):
        if r == 1:
            for addr in addresses:
                reply = session.send(
                    Probe(flow_id=0, ttl=0, kind=DIRECT, probe_id=next(probe_ids), target=addr)
                )
                if reply.responder is not None:
                    evidence.for_address(reply.responder).record(reply, r)
        for _ in range(probes_per_round):
            for addr in addresses:
                flow = witnesses.get(addr)
                if flow is None:
                    continue
                reply = session.send(
                    Probe(flow_id=flow, ttl=hop, kind=INDIRECT, probe_id=next(probe_ids))
                )
                if reply.responder is not None:
                    evidence.for_address(reply.responder).record(reply, r)
        partitions.append(partition_from_evidence(hop, addresses, evidence, r))
    return partitions


def replay_partitions(
    evidence: EvidenceStore | dict[str, AddressEvidence],
    addresses: list[str],
    hop: int,
    rounds: int,
) -> list[AliasPartition]:
    """Recompute the per-round partition history from recorded evidence."""
    return [
        partition_from_evidence(hop, addresses, evidence, r) for r in range(rounds + 1)
    ]


def pair_precision_recall(
    declared: set[tuple[str, str]], truth: set[tuple[str, str]]
) -> tuple[float, float]:
    """Alias-pair precision and recall against a reference pairing."""
    hit = len(declared & truth)
    precision = hit / len(declared) if declared else 1.0
    recall = hit / len(truth) if truth else 1.0
    return precision, recall


# -- collapse to the router level -------------------------------------------


@dataclass
class RouterGraph:
    """Interface graph with alias sets merged into router vertices."""

    graph: MultipathGraph
    members: dict[str, tuple[str, ...]]
    collapse_cases: dict[tuple[str, str], str]

    def to_json_obj(self) -> dict:
        return {
            "graph": self.graph.to_json_obj(),
            "members": {k: list(v) for k, v in sorted(self.members.items())},
            "collapse_cases": [
                {"divergence": d, "convergence": c, "case": case}
                for (d, c), case in sorted(self.collapse_cases.items())
            ],
        }


def _router_name(members: tuple[str, ...]) -> str:
    if len(members) == 1:
        return members[0]
    return "alias(" + ",".join(members) + ")"


def collapse(
    g: MultipathGraph, partitions: dict[int, AliasPartition]
) -> RouterGraph:
    """Merge each hop's alias sets into router vertices.

    Parallel edges fold together, witness flows carry over, and every
    interface-level diamond is classified by what remains of it: unchanged,
    a single smaller diamond, several smaller diamonds in series, or a plain
    path.
    """
    mapping: dict[tuple[int, str], tuple[str, ...]] = {}
    for hop, part in partitions.items():
        for s in part.sets:
            for addr in s:
                mapping[(hop, addr)] = s

    def router_members(hop: int, addr: str) -> tuple[str, ...]:
        return mapping.get((hop, addr), (addr,))

    rg = MultipathGraph(source=g.source, destination=g.destination)
    members: dict[str, tuple[str, ...]] = {}
    for hop in g.hops():
        for v in g.vertices_at(hop):
            group = router_members(hop, v.address)
            name = _router_name(group)
            responsive = all(
                g.vertex(a, hop).responsive for a in group if g.has_vertex(a, hop)
            )
            rg.ensure_vertex(name, hop, responsive)
            members[name] = group
    for e in g.edges:
        src = rg.vertex(_router_name(router_members(e.src.hop, e.src.address)), e.src.hop)
        dst = rg.vertex(_router_name(router_members(e.dst.hop, e.dst.address)), e.dst.hop)
        edge = rg.add_edge(src, dst)
        edge.witnesses.update(e.witnesses)
    for flow, log in g.flow_log.items():
        rlog = rg.flow_log.setdefault(flow, {})
        for hop, addr in log.items():
            rlog[hop] = _router_name(router_members(hop, addr))

    cases: dict[tuple[str, str], str] = {}
    router_diamonds = extract_diamonds(rg)
    for d in extract_diamonds(g):
        lo, hi = d.divergence.hop, d.convergence.hop
        inner = [
            r
            for r in router_diamonds
            if lo <= r.divergence.hop and r.convergence.hop <= hi
        ]
        merged = any(rg.width(h) < g.width(h) for h in range(lo + 1, hi))
        if not inner:
            case = "one-path"
        elif len(inner) == 1:
            case = "no-change" if not merged else "single-smaller-diamond"
        else:
            case = "multiple-smaller-diamonds"
        cases[(d.divergence.address, d.convergence.address)] = case
    return RouterGraph(graph=rg, members=members, collapse_cases=cases)


def resolve_trace(
    session: ProbeSession,
    graph: MultipathGraph,
    evidence: EvidenceStore,
    rounds: int = 10,
    probes_per_round: int = 30,
) -> tuple[dict[int, list[AliasPartition]], RouterGraph]:
    """Resolve every multi-interface hop of a finished trace and collapse it."""
    history: dict[int, list[AliasPartition]] = {}
    final: dict[int, AliasPartition] = {}
    for hop in graph.hops():
        addrs = [v.address for v in graph.vertices_at(hop) if v.responsive]
        if len(addrs) < 2:
            continue
        parts = resolve_hop(
            session,
            addrs,
            hop,
            witness_flows(graph, hop),
            evidence,
            rounds=rounds,
            probes_per_round=probes_per_round,
        )
        history[hop] = parts
        final[hop] = parts[-1]
    return history, collapse(graph, final)
