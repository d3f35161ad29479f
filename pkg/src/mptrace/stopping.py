"""Stopping points for stochastic successor discovery.

When k next-hop interfaces of a vertex have been seen, probing continues
until n_k probes have gone through the vertex or a (k+1)-th interface turns
up.  The budgets n_k are sized so that the chance of stopping one interface
short stays below a per-node bound alpha; dividing a global topology budget
across an assumed maximum number of branching points yields alpha.

This module derives the table and also computes, for a known simulated
topology, the exact probability that a full trace driven by the table misses
part of the topology.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import comb
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .fakeroute import SimTopology

DEFAULT_MAX_BRANCHING = 30


@dataclass(frozen=True)
class GlobalBound:
    """Target probability of failing to discover an entire topology."""

    epsilon: float = 0.05

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")


def miss_probability(k: int, n: int) -> float:
    """P[n uniform draws over k+1 categories miss at least one category].

    Inclusion-exclusion over the set of missed categories.  This is the
    probability that a hop (or a vertex's successor set) holding k+1
    interfaces is not fully enumerated by n probes.
    """
    if k < 1 or n < 0:
        raise ValueError("need k >= 1 and n >= 0")
    total = k + 1
    acc = 0.0
    for i in range(1, k + 1):
        term = comb(total, i) * ((total - i) / total) ** n
        acc += term if i % 2 == 1 else -term
    return min(1.0, max(0.0, acc))


@dataclass
class StoppingPoints:
    """Probe budgets n_k with the per-node failure bound that generated them.

    The table is extended lazily: n(k) for k beyond max_branching is computed
    with the same bound on demand (the bound derivation used max_branching,
    the budgets themselves are defined for any k).
    """

    per_node_bound: float
    max_branching: int = DEFAULT_MAX_BRANCHING
    _table: dict[int, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not 0.0 < self.per_node_bound < 1.0:
            raise ValueError("per-node bound must be in (0, 1)")
        if self.max_branching < 1:
            raise ValueError("max_branching must be >= 1")

    @classmethod
    def from_alpha(cls, alpha: float, max_branching: int = DEFAULT_MAX_BRANCHING) -> "StoppingPoints":
        return cls(per_node_bound=alpha, max_branching=max_branching)

    @classmethod
    def from_global(
        cls, bound: GlobalBound, max_branching: int = DEFAULT_MAX_BRANCHING
    ) -> "StoppingPoints":
        return cls(per_node_bound=bound.epsilon / max_branching, max_branching=max_branching)

    @classmethod
    def from_table(cls, alpha: float, values: list[int]) -> "StoppingPoints":
        """Adopt a published table directly (values[0] is n_1)."""
        sp = cls(per_node_bound=alpha, max_branching=max(len(values), 1))
        for k, n in enumerate(values, start=1):
            sp._table[k] = n
        return sp

    def n(self, k: int) -> int:
        """Smallest n with miss_probability(k, n) <= the per-node bound."""
        if k < 1:
            raise ValueError("k must be >= 1")
        cached = self._table.get(k)
        if cached is not None:
            return cached
        n = k + 1
        while miss_probability(k, n) > self.per_node_bound:
            n += 1
        self._table[k] = n
        return n

    @property
    def table(self) -> dict[int, int]:
        return {k: self.n(k) for k in range(1, self.max_branching + 1)}

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(
            {"alpha": self.per_node_bound, "n": [self.n(k) for k in range(1, self.max_branching + 1)]},
            indent=indent,
        )

    @classmethod
    def from_json(cls, text: str) -> "StoppingPoints":
        obj = json.loads(text)
        return cls.from_table(obj["alpha"], list(obj["n"]))


def derive_table(
    global_bound: GlobalBound, max_branching: int = DEFAULT_MAX_BRANCHING
) -> StoppingPoints:
    """Work the global failure target back to per-node budgets."""
    return StoppingPoints.from_global(global_bound, max_branching)


def vertex_discovery_failure(successors: int, sp: StoppingPoints) -> float:
    """Exact P[the stopping rule halts before all `successors` are seen].

    Forward dynamic program over (interfaces found, probes sent): each probe
    through the vertex finds a new interface with probability (K-k)/K; the
    walk stops at n_k total probes.  Once all K are found the outcome is
    fixed, so that mass is retired immediately.
    """
    K = successors
    if K < 1:
        raise ValueError("a vertex has at least one successor")
    if K == 1:
        return 0.0
    failure = 0.0
    states: dict[tuple[int, int], float] = {(0, 0): 1.0}
    while states:
        nxt: dict[tuple[int, int], float] = {}
        for (k, n), p in states.items():
            for k2, pr in ((k + 1, (K - k) / K), (k, k / K)):
                if pr == 0.0:
                    continue
                mass = p * pr
                if k2 == K:
                    continue  # success mass, nothing more to track
                if n + 1 == sp.n(k2):
                    failure += mass
                else:
                    key = (k2, n + 1)
                    nxt[key] = nxt.get(key, 0.0) + mass
        states = nxt
    return failure


def topology_failure_probability(t: "SimTopology", sp: StoppingPoints) -> float:
    """Exact probability that a table-driven trace misses part of `t`.

    Valid for responsive topologies whose load balancing is uniform across
    each node's successors; per-vertex discoveries are independent, so the
    topology succeeds only if every branching vertex is fully enumerated.
    """
    for node in t.iter_nodes():
        if node.response_prob < 1.0:
            raise ValueError(
                f"{node.address}: failure model requires fully responsive nodes"
            )
        succ = t.successors(node.address)
        if len(succ) > 1 and node.balancing != "per-flow-uniform":
            raise ValueError(f"{node.address}: non-uniform balancing is not modeled")
    t.hop_layout()  # raises when the topology is not layered
    success = 1.0
    for node in t.iter_nodes():
        k = len(t.successors(node.address))
        if k >= 2:
            success *= 1.0 - vertex_discovery_failure(k, sp)
    return 1.0 - success
