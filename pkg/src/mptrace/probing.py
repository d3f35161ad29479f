"""Probe transport contract.

Trace algorithms speak to the network through a ProbeSession: one probe in,
exactly one reply out (a timeout is a reply of kind "none").  The bundled
backend is the in-process simulator; a raw-socket backend can slot in behind
the same contract later.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

INDIRECT = "indirect"  # TTL-limited, traceroute style
DIRECT = "direct"  # ping style, addressed to one interface

TIME_EXCEEDED = "time-exceeded"
DEST_UNREACHABLE = "destination-unreachable"
ECHO_REPLY = "echo-reply"
NO_REPLY = "none"


class Probe(NamedTuple):
    flow_id: int
    ttl: int
    kind: str = INDIRECT
    probe_id: int | None = None
    target: str | None = None  # direct probes name the interface to hit


class ProbeReply(NamedTuple):
    responder: str | None
    kind: str
    ip_id: int | None
    reply_ttl: int | None
    mpls_labels: tuple[int, ...]
    observed_at: int


class SessionClosedError(RuntimeError):
    pass


class ProbeSession(ABC):
    """Single-owner probing session bound to one destination."""

    @property
    @abstractmethod
    def destination(self) -> str: ...

    @abstractmethod
    def send(self, probe: Probe) -> ProbeReply: ...

    def send_batch(self, probes: Iterable[Probe], max_in_flight: int = 16) -> list[ProbeReply]:
        """Send probes preserving order; at most max_in_flight outstanding.

        The simulator answers synchronously, so batching reduces to ordered
        sequential sends; the contract exists for backends that overlap I/O.
        """
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        replies: list[ProbeReply] = []
        window: list[Probe] = []
        for p in probes:
            window.append(p)
            if len(window) == max_in_flight:
                replies.extend(self.send(q) for q in window)
                window.clear()
        replies.extend(self.send(q) for q in window)
        return replies

    @abstractmethod
    def close(self) -> None: ...


@dataclass
class AddressEvidence:
    """Reply metadata accumulated for one interface across a session.

    Samples are (round, sequence, value) tuples; round 0 is the trace phase,
    later rounds come from alias-resolution probing.  The sequence axis is
    the session-wide reply counter, shared across addresses so that series
    can be merged.
    """

    address: str
    ip_id_samples: list[tuple[int, int, int]] = field(default_factory=list)
    te_reply_ttls: list[tuple[int, int]] = field(default_factory=list)
    echo_reply_ttls: list[tuple[int, int]] = field(default_factory=list)
    mpls_labels: list[tuple[int, int]] = field(default_factory=list)

    def record(self, reply: ProbeReply, round_index: int) -> None:
        if reply.responder is None:
            return
        if reply.ip_id is not None:
            self.ip_id_samples.append((round_index, reply.observed_at, reply.ip_id))
        if reply.kind == TIME_EXCEEDED and reply.reply_ttl is not None:
            self.te_reply_ttls.append((round_index, reply.reply_ttl))
        if reply.kind == ECHO_REPLY and reply.reply_ttl is not None:
            self.echo_reply_ttls.append((round_index, reply.reply_ttl))
        for label in reply.mpls_labels:
            self.mpls_labels.append((round_index, label))

    def to_json_obj(self) -> dict:
        return {
            "address": self.address,
            "ip_id_samples": [list(s) for s in self.ip_id_samples],
            "te_reply_ttls": [list(s) for s in self.te_reply_ttls],
            "echo_reply_ttls": [list(s) for s in self.echo_reply_ttls],
            "mpls_labels": [list(s) for s in self.mpls_labels],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "AddressEvidence":
        return cls(
            address=obj["address"],
            ip_id_samples=[tuple(s) for s in obj.get("ip_id_samples", [])],
            te_reply_ttls=[tuple(s) for s in obj.get("te_reply_ttls", [])],
            echo_reply_ttls=[tuple(s) for s in obj.get("echo_reply_ttls", [])],
            mpls_labels=[tuple(s) for s in obj.get("mpls_labels", [])],
        )


class EvidenceStore(dict):
    """address -> AddressEvidence with creation on first touch."""

    def for_address(self, address: str) -> AddressEvidence:
        ev = self.get(address)
        if ev is None:
            ev = AddressEvidence(address)
            self[address] = ev
        return ev
