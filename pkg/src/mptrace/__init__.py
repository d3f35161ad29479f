"""Multipath route tracing over per-flow load balancers.

Two tracing algorithms (full node control, and a cheaper hop-by-hop variant
that escalates on demand), a deterministic topology simulator with a
statistical validation harness, and router-level alias resolution of the
traced interface graphs.
"""

from .model import (
    Diamond,
    DiamondMetrics,
    Edge,
    FlowId,
    MultipathGraph,
    Vertex,
    compute_metrics,
    diamond_identity,
    extract_diamonds,
    is_meshed_hop_pair,
    is_uniform_diamond,
)
from .stopping import (
    GlobalBound,
    StoppingPoints,
    derive_table,
    miss_probability,
    topology_failure_probability,
    vertex_discovery_failure,
)
from .probing import Probe, ProbeReply, ProbeSession, SessionClosedError
from .fakeroute import (
    SimNode,
    SimSession,
    SimTopology,
    TopologyError,
    ValidationReport,
    load_topology,
    route_path,
    route_probe,
    validate_tool,
)
from .mda import TraceResult, mda_trace, node_control_flows
from .mda_lite import (
    LiteTraceResult,
    MeshingTestConfig,
    asymmetry_test,
    complete_edges,
    mda_lite_trace,
    meshing_test,
    single_flow_trace,
)
from .alias import (
    AliasPartition,
    Fingerprint,
    IpIdSeries,
    RouterGraph,
    collapse,
    infer_initial_ttl,
    mbt_compatible,
    mpls_split,
    resolve_hop,
)
from .survey import ComparativeReport, SurveyTally, emit, run_comparison, tally_survey

__version__ = "0.1.0"
