"""Benchmark topology builders.

These reconstruct the load-balancing shapes used throughout the test suite:
the canonical four-over-two diamonds (unmeshed and meshed), the simplest
possible diamond, and the four survey-derived benchmarks (a 28-wide
length-two diamond, a symmetric 10-wide diamond, an asymmetric diamond with
width asymmetry 17, and a meshed 48-wide diamond), plus mixed-discipline
hops for alias-resolution tests.

Run ``python -m mptrace.topologies OUTDIR`` to write them as JSON files.
"""

from __future__ import annotations

import sys
from importlib import resources
from pathlib import Path

from .fakeroute import SimNode, SimTopology


def _chain_tail(topo: SimTopology, last: str, dest: str = "dest") -> None:
    topo.add_node(SimNode(dest, dest))
    topo.add_edge(last, dest)


def simplest_diamond() -> SimTopology:
    """Divergence, two interfaces, convergence (the convergence is the target)."""
    topo = SimTopology(source_entry="lb", destination="dest")
    topo.add_node(SimNode("lb", "lb"))
    for a in ("m1", "m2"):
        topo.add_node(SimNode(a, a))
        topo.add_edge("lb", a)
    topo.add_node(SimNode("dest", "dest"))
    topo.add_edge("m1", "dest")
    topo.add_edge("m2", "dest")
    topo.validate()
    return topo


def chain(length: int = 4) -> SimTopology:
    """Single path, no load balancing."""
    topo = SimTopology(source_entry="n1", destination="dest")
    prev = None
    for i in range(1, length):
        addr = f"n{i}"
        topo.add_node(SimNode(addr, addr))
        if prev:
            topo.add_edge(prev, addr)
        prev = addr
    _chain_tail(topo, prev)
    topo.validate()
    return topo


def fan(width: int = 3) -> SimTopology:
    """One branching node with `width` successors converging on the target."""
    topo = SimTopology(source_entry="lb", destination="dest")
    topo.add_node(SimNode("lb", "lb"))
    topo.add_node(SimNode("dest", "dest"))
    for i in range(1, width + 1):
        addr = f"m{i}"
        topo.add_node(SimNode(addr, addr))
        topo.add_edge("lb", addr)
        topo.add_edge(addr, "dest")
    topo.validate()
    return topo


def _four_over_two(meshed: bool) -> SimTopology:
    topo = SimTopology(source_entry="v1", destination="dest")
    topo.add_node(SimNode("v1", "v1"))
    mids = ["a", "b", "c", "d"]
    lows = ["x", "y"]
    for m in mids:
        topo.add_node(SimNode(m, m))
        topo.add_edge("v1", m)
    for w in lows:
        topo.add_node(SimNode(w, w))
    if meshed:
        for m in mids:
            for w in lows:
                topo.add_edge(m, w)
    else:
        topo.add_edge("a", "x")
        topo.add_edge("b", "x")
        topo.add_edge("c", "y")
        topo.add_edge("d", "y")
    topo.add_node(SimNode("dest", "dest"))
    topo.add_edge("x", "dest")
    topo.add_edge("y", "dest")
    topo.validate()
    return topo


def four_over_two_unmeshed() -> SimTopology:
    """Divergence, four interfaces, two interfaces, convergence; tree links."""
    return _four_over_two(meshed=False)


def four_over_two_meshed() -> SimTopology:
    """Same widths but every hop-2 interface feeds both hop-3 interfaces."""
    return _four_over_two(meshed=True)


def mesh_2x2() -> SimTopology:
    """Two interfaces fully cross-connected to two interfaces."""
    topo = SimTopology(source_entry="div", destination="dest")
    topo.add_node(SimNode("div", "div"))
    for a in ("a1", "a2"):
        topo.add_node(SimNode(a, a))
        topo.add_edge("div", a)
    for b in ("b1", "b2"):
        topo.add_node(SimNode(b, b))
    for a in ("a1", "a2"):
        for b in ("b1", "b2"):
            topo.add_edge(a, b)
    topo.add_node(SimNode("dest", "dest"))
    topo.add_edge("b1", "dest")
    topo.add_edge("b2", "dest")
    topo.validate()
    return topo


def max_length_2(width: int = 28) -> SimTopology:
    """Divergence, one very wide hop, convergence (maximum length 2)."""
    topo = SimTopology(source_entry="div", destination="dest")
    topo.add_node(SimNode("div", "div"))
    topo.add_node(SimNode("dest", "dest"))
    for i in range(1, width + 1):
        addr = f"w{i:02d}"
        topo.add_node(SimNode(addr, addr))
        topo.add_edge("div", addr)
        topo.add_edge(addr, "dest")
    topo.validate()
    return topo


def symmetric_10() -> SimTopology:
    """Three multi-interface hops (2, 10, 2), balanced and unmeshed."""
    topo = SimTopology(source_entry="div", destination="dest")
    topo.add_node(SimNode("div", "div"))
    for s in ("s1", "s2"):
        topo.add_node(SimNode(s, s))
        topo.add_edge("div", s)
    wide = [f"m{i:02d}" for i in range(1, 11)]
    for i, m in enumerate(wide):
        topo.add_node(SimNode(m, m))
        topo.add_edge("s1" if i < 5 else "s2", m)
    for t in ("t1", "t2"):
        topo.add_node(SimNode(t, t))
    for i, m in enumerate(wide):
        topo.add_edge(m, "t1" if i < 5 else "t2")
    topo.add_node(SimNode("dest", "dest"))
    topo.add_edge("t1", "dest")
    topo.add_edge("t2", "dest")
    topo.validate()
    return topo


def asymmetric_17() -> SimTopology:
    """Nine multi-interface hops, 19 wide at most, width asymmetry 17, unmeshed.

    One hop-2 interface fans out to 18 children while its sibling keeps a
    single child, so successor counts differ by 17; every later hop is
    balanced.
    """
    topo = SimTopology(source_entry="div", destination="dest")
    topo.add_node(SimNode("div", "div"))
    for a in ("a1", "a2"):
        topo.add_node(SimNode(a, a))
        topo.add_edge("div", a)
    wide = [f"x{i:02d}" for i in range(1, 20)]
    for x in wide:
        topo.add_node(SimNode(x, x))
    for x in wide[:18]:
        topo.add_edge("a1", x)
    topo.add_edge("a2", wide[18])
    for c in ("c1", "c2"):
        topo.add_node(SimNode(c, c))
    for x in wide[:18]:
        topo.add_edge(x, "c1")
    topo.add_edge(wide[18], "c2")
    # balanced tail: 2, 2, 4, 4, 4, 2, 2 interfaces per hop
    for d in ("d1", "d2"):
        topo.add_node(SimNode(d, d))
    topo.add_edge("c1", "d1")
    topo.add_edge("c2", "d2")
    es = [f"e{i}" for i in range(1, 5)]
    for e in es:
        topo.add_node(SimNode(e, e))
    topo.add_edge("d1", "e1")
    topo.add_edge("d1", "e2")
    topo.add_edge("d2", "e3")
    topo.add_edge("d2", "e4")
    for layer in ("f", "g"):
        for i in range(1, 5):
            topo.add_node(SimNode(f"{layer}{i}", f"{layer}{i}"))
    for i in range(1, 5):
        topo.add_edge(f"e{i}", f"f{i}")
        topo.add_edge(f"f{i}", f"g{i}")
    for h in ("h1", "h2"):
        topo.add_node(SimNode(h, h))
    topo.add_edge("g1", "h1")
    topo.add_edge("g2", "h1")
    topo.add_edge("g3", "h2")
    topo.add_edge("g4", "h2")
    for i in ("i1", "i2"):
        topo.add_node(SimNode(i, i))
    topo.add_edge("h1", "i1")
    topo.add_edge("h2", "i2")
    topo.add_node(SimNode("dest", "dest"))
    topo.add_edge("i1", "dest")
    topo.add_edge("i2", "dest")
    topo.validate()
    return topo


def meshed_48() -> SimTopology:
    """Five multi-interface hops (2, 4, 48, 4, 2) with one meshed pair.

    Every 48-hop interface feeds two of the four next-hop interfaces, which
    meshes that pair while keeping predecessor counts balanced.
    """
    topo = SimTopology(source_entry="div", destination="dest")
    topo.add_node(SimNode("div", "div"))
    for m in ("m1", "m2"):
        topo.add_node(SimNode(m, m))
        topo.add_edge("div", m)
    ns = [f"n{i}" for i in range(1, 5)]
    for n in ns:
        topo.add_node(SimNode(n, n))
    topo.add_edge("m1", "n1")
    topo.add_edge("m1", "n2")
    topo.add_edge("m2", "n3")
    topo.add_edge("m2", "n4")
    ps = [f"p{i:02d}" for i in range(1, 49)]
    for p in ps:
        topo.add_node(SimNode(p, p))
    for j, p in enumerate(ps):
        topo.add_edge(ns[j // 12], p)
    qs = [f"q{i}" for i in range(1, 5)]
    for q in qs:
        topo.add_node(SimNode(q, q))
    for j, p in enumerate(ps):
        topo.add_edge(p, qs[j % 4])
        topo.add_edge(p, qs[(j + 1) % 4])
    for r in ("r1", "r2"):
        topo.add_node(SimNode(r, r))
    topo.add_edge("q1", "r1")
    topo.add_edge("q2", "r1")
    topo.add_edge("q3", "r2")
    topo.add_edge("q4", "r2")
    topo.add_node(SimNode("dest", "dest"))
    topo.add_edge("r1", "dest")
    topo.add_edge("r2", "dest")
    topo.validate()
    return topo


def alias_mixed() -> SimTopology:
    """One wide hop mixing IP-ID disciplines, TTL classes, and MPLS labels.

    Router groupings at hop 2: three interfaces sharing one counter, two
    interfaces of one router with per-interface counters, two constant-zero
    interfaces with differing MPLS labels, two single-interface routers with
    different TTL classes, two interfaces sharing an MPLS label but holding
    per-interface counters, and one unresponsive interface.
    """
    topo = SimTopology(source_entry="div", destination="dest")
    topo.add_node(SimNode("div", "div"))
    hop = [
        SimNode("a1", "R1", ipid_mode="shared-monotonic"),
        SimNode("a2", "R1", ipid_mode="shared-monotonic"),
        SimNode("a3", "R1", ipid_mode="shared-monotonic"),
        SimNode("b1", "R2", ipid_mode="per-interface-monotonic"),
        SimNode("b2", "R2", ipid_mode="per-interface-monotonic"),
        SimNode("c1", "R3", ipid_mode="constant-zero", mpls_label=17),
        SimNode("c2", "R4", ipid_mode="constant-zero", mpls_label=18),
        SimNode("d1", "R5", ipid_mode="shared-monotonic", initial_ttl_class=255),
        SimNode("d2", "R6", ipid_mode="shared-monotonic", initial_ttl_class=64),
        SimNode("e1", "R7", ipid_mode="per-interface-monotonic", mpls_label=21),
        SimNode("e2", "R7", ipid_mode="per-interface-monotonic", mpls_label=21),
        SimNode("u1", "R8", response_prob=0.0),
    ]
    topo.add_node(SimNode("dest", "dest"))
    for node in hop:
        topo.add_node(node)
        topo.add_edge("div", node.address)
        topo.add_edge(node.address, "dest")
    topo.validate()
    return topo


def router_diamond() -> SimTopology:
    """Two-wide diamond whose middle interfaces belong to one router."""
    topo = SimTopology(source_entry="div", destination="dest")
    topo.add_node(SimNode("div", "div"))
    for x in ("x1", "x2"):
        topo.add_node(SimNode(x, "RX", ipid_mode="shared-monotonic"))
        topo.add_edge("div", x)
    topo.add_node(SimNode("dest", "dest"))
    topo.add_edge("x1", "dest")
    topo.add_edge("x2", "dest")
    topo.validate()
    return topo


FIXTURES = {
    "simplest_diamond": simplest_diamond,
    "chain": chain,
    "fan3": lambda: fan(3),
    "four_over_two_unmeshed": four_over_two_unmeshed,
    "four_over_two_meshed": four_over_two_meshed,
    "mesh_2x2": mesh_2x2,
    "max_length_2": max_length_2,
    "symmetric_10": symmetric_10,
    "asymmetric_17": asymmetric_17,
    "meshed_48": meshed_48,
    "alias_mixed": alias_mixed,
    "router_diamond": router_diamond,
}


def fixture_path(name: str) -> Path:
    """Path of a topology file shipped with the package."""
    path = Path(str(resources.files("mptrace") / "fixtures" / f"{name}.json"))
    if not path.exists():
        raise FileNotFoundError(f"no shipped fixture named {name!r}")
    return path


def write_fixture_files(out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, build in FIXTURES.items():
        path = out / f"{name}.json"
        path.write_text(build().to_json(indent=2) + "\n")
        written.append(path)
    return written


if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else "fixtures"
    for p in write_fixture_files(target):
        print(p)
