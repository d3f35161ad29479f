"""Corpus analytics and comparative reporting.

Runs algorithm line-ups over batches of simulated topologies, computes
discovery and probe-cost ratios against a reference run, and aggregates
diamond statistics (measured versus distinct counts, metric distributions,
collapse-case fractions) across a set of traces.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .fakeroute import SimSession, SimTopology
from .mda import mda_trace
from .mda_lite import MeshingTestConfig, mda_lite_trace, single_flow_trace
from .model import (
    MultipathGraph,
    compute_metrics,
    diamond_identity,
    extract_diamonds,
)
from .alias import RouterGraph
from .stopping import StoppingPoints

ALGORITHMS = ("mda_reference", "mda_second", "mda_lite_phi2", "mda_lite_phi4", "single_flow")


@dataclass(frozen=True)
class AlgorithmRatios:
    vertices: float
    edges: float
    probes: float

    def to_json_obj(self) -> dict:
        return {"vertices": self.vertices, "edges": self.edges, "probes": self.probes}


@dataclass
class TraceComparison:
    topology: str
    seed: int
    counts: dict[str, tuple[int, int, int]]  # algorithm -> (vertices, edges, probes)

    def ratios(self) -> dict[str, AlgorithmRatios]:
        ref = self.counts["mda_reference"]
        out = {}
        for name, (v, e, p) in self.counts.items():
            out[name] = AlgorithmRatios(v / ref[0], e / ref[1], p / ref[2])
        return out


@dataclass
class ComparativeReport:
    """Per-trace and aggregate discovery/cost ratios versus a reference run."""

    per_trace: list[TraceComparison]

    def aggregate(self) -> dict[str, AlgorithmRatios]:
        totals: dict[str, list[int]] = {name: [0, 0, 0] for name in ALGORITHMS}
        for tc in self.per_trace:
            for name, (v, e, p) in tc.counts.items():
                totals[name][0] += v
                totals[name][1] += e
                totals[name][2] += p
        ref = totals["mda_reference"]
        return {
            name: AlgorithmRatios(t[0] / ref[0], t[1] / ref[1], t[2] / ref[2])
            for name, t in totals.items()
        }

    def to_json_obj(self) -> dict:
        return {
            "per_trace": [
                {
                    "topology": tc.topology,
                    "seed": tc.seed,
                    "ratios": {k: r.to_json_obj() for k, r in tc.ratios().items()},
                }
                for tc in self.per_trace
            ],
            "aggregate": {k: r.to_json_obj() for k, r in self.aggregate().items()},
        }


def _measure(graph: MultipathGraph, probes: int) -> tuple[int, int, int]:
    return graph.vertex_count(), graph.edge_count(), probes


def run_comparison(
    topologies: list[tuple[str, SimTopology]],
    seeds: list[int],
    sp: StoppingPoints,
    max_ttl: int = 30,
) -> ComparativeReport:
    """Run the five-variant line-up on every (topology, seed) pairing.

    Per pairing: a reference full trace, a second full trace, the hop-by-hop
    tracer at phi 2 and phi 4, and the single-flow baseline; ratios are
    relative to the reference run of the same pairing.
    """
    per_trace: list[TraceComparison] = []
    for name, topo in topologies:
        for seed in seeds:
            sub = [seed * 7919 + i for i in range(5)]
            runs: dict[str, tuple[int, int, int]] = {}
            ref = mda_trace(SimSession(topo, sub[0]), sp, max_ttl=max_ttl, seed=sub[0])
            runs["mda_reference"] = _measure(ref.graph, ref.probes_total)
            second = mda_trace(SimSession(topo, sub[1]), sp, max_ttl=max_ttl, seed=sub[1])
            runs["mda_second"] = _measure(second.graph, second.probes_total)
            lite2 = mda_lite_trace(
                SimSession(topo, sub[2]), sp, MeshingTestConfig(2), max_ttl=max_ttl, seed=sub[2]
            )
            runs["mda_lite_phi2"] = _measure(lite2.graph, lite2.probes_total)
            lite4 = mda_lite_trace(
                SimSession(topo, sub[3]), sp, MeshingTestConfig(4), max_ttl=max_ttl, seed=sub[3]
            )
            runs["mda_lite_phi4"] = _measure(lite4.graph, lite4.probes_total)
            single = single_flow_trace(SimSession(topo, sub[4]), max_ttl=max_ttl, seed=sub[4])
            runs["single_flow"] = _measure(single.graph, single.probes_total)
            per_trace.append(TraceComparison(topology=name, seed=seed, counts=runs))
    return ComparativeReport(per_trace=per_trace)


@dataclass
class SurveyTally:
    """Diamond statistics over a trace corpus."""

    measured_diamond_count: int
    distinct_diamond_count: int
    metric_distributions: dict[str, dict[str, list[float]]]
    collapse_fractions: dict[str, float]
    collapse_counts: dict[str, int]

    def to_json_obj(self) -> dict:
        return {
            "measured_diamond_count": self.measured_diamond_count,
            "distinct_diamond_count": self.distinct_diamond_count,
            "metric_distributions": self.metric_distributions,
            "collapse_fractions": dict(sorted(self.collapse_fractions.items())),
            "collapse_counts": dict(sorted(self.collapse_counts.items())),
        }


def tally_survey(
    traces: list[tuple[MultipathGraph, RouterGraph | None]]
) -> SurveyTally:
    """Count measured and distinct diamonds and aggregate their metrics.

    Every encounter counts as a measured diamond; encounters sharing a
    (divergence, convergence) identity collapse into one distinct diamond.
    Collapse-case fractions cover the distinct diamonds that carry router
    resolution results.
    """
    measured = 0
    per_identity: dict[tuple[str, str], MultipathGraph] = {}
    metrics_measured: dict[str, list[float]] = {
        "max_width": [],
        "max_length": [],
        "max_width_asymmetry": [],
        "meshed_hop_ratio": [],
    }
    metrics_distinct: dict[str, list[float]] = {k: [] for k in metrics_measured}
    case_by_identity: dict[tuple[str, str], str] = {}
    for graph, router in traces:
        for d in extract_diamonds(graph):
            measured += 1
            m = compute_metrics(d)
            metrics_measured["max_width"].append(m.max_width)
            metrics_measured["max_length"].append(m.max_length)
            metrics_measured["max_width_asymmetry"].append(m.max_width_asymmetry)
            metrics_measured["meshed_hop_ratio"].append(m.meshed_hop_ratio)
            key = diamond_identity(d)
            if key not in per_identity:
                per_identity[key] = graph
                metrics_distinct["max_width"].append(m.max_width)
                metrics_distinct["max_length"].append(m.max_length)
                metrics_distinct["max_width_asymmetry"].append(m.max_width_asymmetry)
                metrics_distinct["meshed_hop_ratio"].append(m.meshed_hop_ratio)
            if router is not None and key in router.collapse_cases:
                case_by_identity.setdefault(key, router.collapse_cases[key])
    counts = {case: 0 for case in sorted(set(case_by_identity.values()))}
    for case in case_by_identity.values():
        counts[case] += 1
    total_cases = sum(counts.values())
    fractions = {
        case: n / total_cases for case, n in counts.items()
    } if total_cases else {}
    return SurveyTally(
        measured_diamond_count=measured,
        distinct_diamond_count=len(per_identity),
        metric_distributions={
            "measured": {k: sorted(v) for k, v in metrics_measured.items()},
            "distinct": {k: sorted(v) for k, v in metrics_distinct.items()},
        },
        collapse_fractions=fractions,
        collapse_counts=counts,
    )


def emit(obj, fmt: str = "json") -> str:
    """Serialize a report or graph deterministically.

    json works for anything exposing to_json_obj (and raw dicts); dot works
    for interface graphs and router-level results; text-table renders the
    tabular reports.
    """
    if fmt == "json":
        if isinstance(obj, MultipathGraph):
            payload = obj.to_json_obj()
        elif hasattr(obj, "to_json_obj"):
            payload = obj.to_json_obj()
        elif isinstance(obj, dict):
            payload = obj
        else:
            raise ValueError(f"cannot serialize {type(obj).__name__} as json")
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if fmt == "dot":
        if isinstance(obj, MultipathGraph):
            return obj.to_dot()
        if isinstance(obj, RouterGraph):
            return obj.graph.to_dot(name="routers")
        if isinstance(obj, tuple) and len(obj) == 2:
            ip_graph, router = obj
            return ip_graph.to_dot(name="interfaces") + router.graph.to_dot(name="routers")
        raise ValueError(f"cannot render {type(obj).__name__} as dot")
    if fmt in ("text", "text-table"):
        return _text_table(obj)
    raise ValueError(f"unknown format {fmt!r}")


def _text_table(obj) -> str:
    if isinstance(obj, ComparativeReport):
        rows = [("algorithm", "vertices", "edges", "probes")]
        for name, r in obj.aggregate().items():
            rows.append((name, f"{r.vertices:.3f}", f"{r.edges:.3f}", f"{r.probes:.3f}"))
        return _render_rows(rows)
    if isinstance(obj, SurveyTally):
        rows = [("quantity", "value")]
        rows.append(("measured diamonds", str(obj.measured_diamond_count)))
        rows.append(("distinct diamonds", str(obj.distinct_diamond_count)))
        for case, frac in sorted(obj.collapse_fractions.items()):
            rows.append((f"collapse {case}", f"{frac:.3f}"))
        return _render_rows(rows)
    if hasattr(obj, "to_json_obj"):
        rows = [("key", "value")]
        for k, v in obj.to_json_obj().items():
            if isinstance(v, (str, int, float)):
                rows.append((k, str(v)))
        return _render_rows(rows)
    raise ValueError(f"cannot render {type(obj).__name__} as a table")


def _render_rows(rows: list[tuple[str, ...]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for r in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"
