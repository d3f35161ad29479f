"""Command-line front end.

Commands: trace (one route trace over the simulator backend), validate
(statistical failure-rate validation of a tracing algorithm), compare
(algorithm line-up over topology batches), survey (diamond statistics over
recorded traces), and alias (offline re-refinement of recorded reply
metadata).  Exit code 0 on success; 2 when a validation verdict fails or
arguments are unusable.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import alias as alias_mod
from .fakeroute import SimSession, SimTopology, load_topology, validate_tool
from .mda import mda_trace
from .mda_lite import MeshingTestConfig, mda_lite_trace, single_flow_trace
from .model import MultipathGraph
from .probing import AddressEvidence, EvidenceStore
from .stopping import GlobalBound, StoppingPoints
from .survey import emit, run_comparison, tally_survey


def _add_table_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bound", type=float, default=0.05, help="global failure probability target")
    p.add_argument("--max-branch", type=int, default=30, help="assumed maximum branching points")
    p.add_argument("--alpha", type=float, default=None, help="per-node failure bound (overrides --bound/--max-branch)")
    p.add_argument("--nk-table", type=Path, default=None, help="JSON file with a stopping-point table")


def _add_common_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", type=Path, default=None, help="write output here instead of stdout")
    p.add_argument("--format", choices=("json", "dot", "text-table"), default="json")


def stopping_from_args(args: argparse.Namespace) -> StoppingPoints:
    if args.nk_table is not None:
        return StoppingPoints.from_json(args.nk_table.read_text())
    if args.alpha is not None:
        return StoppingPoints.from_alpha(args.alpha, args.max_branch)
    return StoppingPoints.from_global(GlobalBound(args.bound), args.max_branch)


def _topology_from_backend(backend: str) -> SimTopology:
    if backend.startswith("sim:"):
        return load_topology(backend[len("sim:"):])
    if backend == "net":
        raise SystemExit("the raw-network backend is reserved and not implemented")
    raise SystemExit(f"unknown backend {backend!r}; expected sim:<topology-file>")


def _write(args: argparse.Namespace, text: str) -> None:
    if args.output is not None:
        args.output.write_text(text)
    else:
        sys.stdout.write(text)


def _evidence_json(evidence: dict[str, AddressEvidence]) -> dict:
    return {addr: ev.to_json_obj() for addr, ev in sorted(evidence.items())}


def cmd_trace(args: argparse.Namespace) -> int:
    topo = _topology_from_backend(args.backend)
    if args.destination is not None and args.destination != topo.destination:
        raise SystemExit(
            f"topology destination is {topo.destination}, cannot trace to {args.destination}"
        )
    sp = stopping_from_args(args)
    session = SimSession(topo, seed=args.seed)
    doc: dict = {"kind": "trace", "seed": args.seed, "destination": topo.destination}
    if args.algorithm == "mda":
        result = mda_trace(session, sp, max_ttl=args.max_ttl, seed=args.seed)
        doc["algorithm"] = "mda"
        doc["switched_to_mda"] = {"switched": False}
    elif args.algorithm == "mda-lite":
        result = mda_lite_trace(
            session,
            sp,
            MeshingTestConfig(args.phi),
            max_ttl=args.max_ttl,
            seed=args.seed,
        )
        doc["algorithm"] = "mda-lite"
        doc["switched_to_mda"] = {
            "switched": result.switched_to_mda,
            "hop": result.switch_hop,
            "reason": result.switch_reason,
        }
        doc["meshing_tests"] = [r.to_json_obj() for r in result.meshing_tests]
    else:
        result = single_flow_trace(session, max_ttl=args.max_ttl, seed=args.seed)
        doc["algorithm"] = "single-flow"
        doc["switched_to_mda"] = {"switched": False}
    graph = result.graph
    evidence = EvidenceStore(result.evidence)
    doc["probe_counts"] = result.probe_counts.to_json_obj()
    doc["under_explored"] = [
        {"address": v.address, "hop": v.hop} for v in result.under_explored
    ]
    if args.multilevel:
        history, router = alias_mod.resolve_trace(
            session, graph, evidence, rounds=args.rounds
        )
        doc["multilevel"] = {
            "rounds": args.rounds,
            "partitions": {
                str(hop): [p.to_json_obj() for p in parts]
                for hop, parts in sorted(history.items())
            },
            "router": router.to_json_obj(),
        }
    doc["graph"] = graph.to_json_obj()
    doc["evidence"] = _evidence_json(evidence)
    if args.format == "dot":
        if args.multilevel:
            router_graph = MultipathGraph.from_json_obj(doc["multilevel"]["router"]["graph"])
            _write(args, graph.to_dot(name="interfaces") + router_graph.to_dot(name="routers"))
        else:
            _write(args, graph.to_dot())
    elif args.format == "text-table":
        lines = [f"hop {h}: " + " ".join(v.address for v in graph.vertices_at(h)) for h in graph.hops()]
        _write(args, "\n".join(lines) + "\n")
    else:
        _write(args, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    topo = load_topology(args.topology)
    sp = stopping_from_args(args)
    if args.algorithm == "mda":
        def run(session, table, seed):
            return mda_trace(session, table, max_ttl=args.max_ttl, seed=seed).graph
    else:
        def run(session, table, seed):
            return mda_lite_trace(session, table, max_ttl=args.max_ttl, seed=seed).graph
    report = validate_tool(
        topo,
        run,
        sp,
        runs=args.runs,
        samples=args.samples,
        seed=args.seed,
        tolerance_factor=args.tolerance_factor,
        algorithm_name=args.algorithm,
        topology_name=str(args.topology),
    )
    _write(args, emit(report, "json" if args.format == "dot" else args.format))
    return 0 if report.verdict == "pass" else 2


def cmd_compare(args: argparse.Namespace) -> int:
    sp = stopping_from_args(args)
    topologies = [(str(p), load_topology(p)) for p in args.topologies]
    seeds = args.seeds if args.seeds else [args.seed + i for i in range(args.trials)]
    report = run_comparison(topologies, seeds, sp, max_ttl=args.max_ttl)
    _write(args, emit(report, args.format))
    return 0


def _load_trace_doc(path: Path) -> dict:
    doc = json.loads(path.read_text())
    if "graph" not in doc:
        raise SystemExit(f"{path}: not a trace document")
    return doc


def cmd_survey(args: argparse.Namespace) -> int:
    records = []
    for path in args.inputs:
        doc = _load_trace_doc(path)
        graph = MultipathGraph.from_json_obj(doc["graph"])
        router = None
        if "multilevel" in doc:
            rg = MultipathGraph.from_json_obj(doc["multilevel"]["router"]["graph"])
            members = {
                k: tuple(v)
                for k, v in doc["multilevel"]["router"]["members"].items()
            }
            cases = {
                (c["divergence"], c["convergence"]): c["case"]
                for c in doc["multilevel"]["router"]["collapse_cases"]
            }
            router = alias_mod.RouterGraph(graph=rg, members=members, collapse_cases=cases)
        records.append((graph, router))
    _write(args, emit(tally_survey(records), args.format))
    return 0


def cmd_alias(args: argparse.Namespace) -> int:
    doc = _load_trace_doc(args.input)
    graph = MultipathGraph.from_json_obj(doc["graph"])
    evidence = EvidenceStore()
    for addr, ev in doc.get("evidence", {}).items():
        evidence[addr] = AddressEvidence.from_json_obj(ev)
    rounds = doc.get("multilevel", {}).get("rounds", args.rounds)
    hops = [args.hop] if args.hop is not None else [
        h for h in graph.hops()
        if sum(1 for v in graph.vertices_at(h) if v.responsive) >= 2
    ]
    out: dict = {"kind": "alias", "rounds": rounds, "partitions": {}}
    final: dict[int, alias_mod.AliasPartition] = {}
    for hop in hops:
        addrs = [v.address for v in graph.vertices_at(hop) if v.responsive]
        parts = alias_mod.replay_partitions(evidence, addrs, hop, rounds)
        out["partitions"][str(hop)] = [p.to_json_obj() for p in parts]
        final[hop] = parts[-1]
    router = alias_mod.collapse(graph, final)
    out["router"] = router.to_json_obj()
    if args.format == "dot":
        _write(args, graph.to_dot(name="interfaces") + router.graph.to_dot(name="routers"))
    else:
        _write(args, json.dumps(out, indent=2, sort_keys=True) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mptrace", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trace", help="run one multipath route trace")
    p.add_argument("--backend", required=True, help="sim:<topology-file> (net is reserved)")
    p.add_argument("--algorithm", choices=("mda", "mda-lite", "single-flow"), default="mda-lite")
    p.add_argument("--destination", default=None)
    p.add_argument("--phi", type=int, default=2, help="flows per interface for the meshing test")
    p.add_argument("--max-ttl", type=int, default=30)
    p.add_argument("--multilevel", action="store_true", help="resolve aliases and emit the router level too")
    p.add_argument("--rounds", type=int, default=10, help="alias-resolution probing rounds")
    _add_table_args(p)
    _add_common_args(p)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("validate", help="check a tool's failure rate against the exact model")
    p.add_argument("--topology", type=Path, required=True)
    p.add_argument("--algorithm", choices=("mda", "mda-lite"), default="mda")
    p.add_argument("--runs", type=int, default=1000, help="runs per sample")
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--tolerance-factor", type=float, default=3.0)
    p.add_argument("--max-ttl", type=int, default=30)
    _add_table_args(p)
    _add_common_args(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compare", help="five-variant comparison over topologies")
    p.add_argument("--topologies", type=Path, nargs="+", required=True)
    p.add_argument("--seeds", type=int, nargs="*", default=None)
    p.add_argument("--trials", type=int, default=1, help="seed count when --seeds is absent")
    p.add_argument("--max-ttl", type=int, default=30)
    _add_table_args(p)
    _add_common_args(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("survey", help="diamond statistics over recorded traces")
    p.add_argument("--inputs", type=Path, nargs="+", required=True)
    _add_common_args(p)
    p.set_defaults(func=cmd_survey)

    p = sub.add_parser("alias", help="re-run alias refinement on a recorded trace")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--hop", type=int, default=None)
    p.add_argument("--rounds", type=int, default=10)
    _add_common_args(p)
    p.set_defaults(func=cmd_alias)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
