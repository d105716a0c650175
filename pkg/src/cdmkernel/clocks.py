"""Logical clocks: Lamport scalars and vector clocks.

All clock values are immutable; every operation returns a new clock.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

MAX_COUNTER = 2**63 - 1


@dataclass(frozen=True, order=True)
class LamportClock:
    node: str
    counter: int = 0

    def __post_init__(self):
        if self.counter < 0:
            raise ValueError("lamport counter must be non-negative")

    def tick(self) -> LamportClock:
        return lamport_tick(self)

    def recv(self, msg_ts: int) -> LamportClock:
        return lamport_recv(self, msg_ts)

    def sort_key(self) -> tuple[int, str]:
        """Total-order tie-break: counter first, then node id."""
        return (self.counter, self.node)

    def to_json(self) -> dict[str, Any]:
        return {"node": self.node, "t": self.counter}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> LamportClock:
        return cls(data["node"], int(data["t"]))


def lamport_tick(c: LamportClock) -> LamportClock:
    if c.counter >= MAX_COUNTER:
        raise OverflowError("lamport counter overflow")
    return LamportClock(c.node, c.counter + 1)


def lamport_recv(c: LamportClock, msg_ts: int) -> LamportClock:
    if msg_ts < 0:
        raise ValueError("message timestamp must be non-negative")
    return lamport_tick(LamportClock(c.node, max(c.counter, msg_ts)))


class Ordering(enum.Enum):
    BEFORE = "before"
    AFTER = "after"
    EQUAL = "equal"
    CONCURRENT = "concurrent"


class VectorClock:
    """Map from node id to counter; missing nodes read as zero.

    Stored canonically (sorted, no zero entries) so equality and hashing
    are structural.
    """

    __slots__ = ("_entries",)

    def __init__(self, counters: Mapping[str, int] | Iterable[tuple[str, int]] = ()):
        items = counters.items() if isinstance(counters, Mapping) else counters
        cleaned = {}
        for node, n in items:
            if n < 0:
                raise ValueError(f"negative counter for {node!r}")
            if n:
                cleaned[node] = n
        self._entries = tuple(sorted(cleaned.items()))

    def get(self, node: str) -> int:
        for k, v in self._entries:
            if k == node:
                return v
        return 0

    def as_dict(self) -> dict[str, int]:
        return dict(self._entries)

    def nodes(self) -> set[str]:
        return {k for k, _ in self._entries}

    def tick(self, node: str) -> VectorClock:
        return vc_tick(self, node)

    def merge(self, other: VectorClock) -> VectorClock:
        return vc_merge(self, other)

    def compare(self, other: VectorClock) -> Ordering:
        return vc_compare(self, other)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VectorClock):
            return NotImplemented
        return self._entries == other._entries

    def __hash__(self) -> int:
        return hash(self._entries)

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}:{v}" for k, v in self._entries)
        return f"VectorClock({{{inner}}})"

    def to_json(self) -> dict[str, int]:
        return self.as_dict()

    @classmethod
    def from_json(cls, data: Mapping[str, int]) -> VectorClock:
        return cls({k: int(v) for k, v in data.items()})


def vc_tick(v: VectorClock, node: str) -> VectorClock:
    d = v.as_dict()
    d[node] = d.get(node, 0) + 1
    return VectorClock(d)


def vc_merge(a: VectorClock, b: VectorClock) -> VectorClock:
    d = a.as_dict()
    for k, n in b._entries:
        d[k] = max(d.get(k, 0), n)
    return VectorClock(d)


def vc_compare(a: VectorClock, b: VectorClock) -> Ordering:
    if a == b:
        return Ordering.EQUAL
    nodes = a.nodes() | b.nodes()
    a_le_b = all(a.get(n) <= b.get(n) for n in nodes)
    b_le_a = all(b.get(n) <= a.get(n) for n in nodes)
    if a_le_b:
        return Ordering.BEFORE
    if b_le_a:
        return Ordering.AFTER
    return Ordering.CONCURRENT
