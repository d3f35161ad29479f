from __future__ import annotations

import pytest

from mptrace.model import MultipathGraph
from mptrace.stopping import StoppingPoints

ANCHOR_ALPHA = 2.0 ** -8  # reproduces the published budgets 9, 17, 25, 33


@pytest.fixture(scope="session")
def anchor_table() -> StoppingPoints:
    return StoppingPoints.from_alpha(ANCHOR_ALPHA)


@pytest.fixture(scope="session")
def table_05() -> StoppingPoints:
    return StoppingPoints.from_alpha(0.05)


def build_graph(widths: dict[int, list[str]], edges: list[tuple[str, int, str]],
                source: str = "src", destination: str = "dst") -> MultipathGraph:
    """Hand-build a graph; each edge gets a synthetic witness flow."""
    g = MultipathGraph(source, destination)
    for hop in sorted(widths):
        for addr in widths[hop]:
            g.ensure_vertex(addr, hop)
    for flow, (a, hop, b) in enumerate(edges):
        g.add_edge(g.vertex(a, hop), g.vertex(b, hop + 1), flow)
    return g
