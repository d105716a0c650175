"""Deterministic simulator of a replicated object store.

Replicas hold versioned objects and broadcast every local write to the
replicas entitled to see it. Messages take a seeded random number of steps
to arrive and are held (not dropped) while their link is partitioned.

Incoming versions are compared with vector clocks: dominated versions are
discarded, dominating ones adopted, and concurrent ones resolved by keeping
the write with the larger ``(lamport stamp, writer id)`` while flagging the
conflict. Because every entitled replica eventually sees every write, they
all settle on the same payload and version.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .clocks import LamportClock, Ordering, VectorClock, vc_compare, vc_merge, vc_tick


class SharingViolation(Exception):
    pass


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Private:
    def to_json(self) -> Any:
        return "private"


@dataclass(frozen=True)
class Everyone:
    def to_json(self) -> Any:
        return "everyone"


@dataclass(frozen=True)
class Counterparties:
    parties: frozenset[str]

    def __post_init__(self):
        if not self.parties:
            raise ValueError("counterparties sharing needs at least one party")
        object.__setattr__(self, "parties", frozenset(self.parties))

    def to_json(self) -> Any:
        return {"counterparties": sorted(self.parties)}


SharingLevel = Private | Counterparties | Everyone
PRIVATE = Private()
EVERYONE = Everyone()


def sharing_from_json(data: Any) -> SharingLevel:
    if data == "private":
        return PRIVATE
    if data == "everyone":
        return EVERYONE
    if isinstance(data, Mapping) and "counterparties" in data:
        return Counterparties(frozenset(data["counterparties"]))
    raise ScenarioError(f"unknown sharing level {data!r}")


def entitled(sharing: SharingLevel, owner: str, replicas: Iterable[str]) -> list[str]:
    """Replicas allowed to hold an object, in replica order."""
    if isinstance(sharing, Private):
        return [r for r in replicas if r == owner]
    if isinstance(sharing, Counterparties):
        return [r for r in replicas if r in sharing.parties]
    return list(replicas)


@dataclass(frozen=True)
class VersionedObject:
    object_id: str
    payload: str
    version: VectorClock
    sharing: SharingLevel
    writer: str
    stamp: int
    conflict: bool = False

    def winner_key(self) -> tuple[int, str]:
        return (self.stamp, self.writer)

    def to_json(self) -> dict[str, Any]:
        return {
            "object": self.object_id,
            "payload": self.payload,
            "version": self.version.to_json(),
            "sharing": self.sharing.to_json(),
            "writer": self.writer,
            "stamp": self.stamp,
            "conflict": self.conflict,
        }


@dataclass(frozen=True)
class Message:
    seq: int
    src: str
    dst: str
    sent_at: int
    deliver_at: int
    obj: VersionedObject
    lamport: int
    send_event: int


@dataclass(frozen=True)
class SimEvent:
    """A write or a receive, for causality analysis."""

    eid: int
    replica: str
    kind: str
    step: int
    vc: VectorClock
    lamport: int
    cause: int | None = None  # send event of a receive
    object_id: str = ""


class Outcome:
    DISCARD = "discard"
    ADOPT = "adopt"
    CONFLICT = "conflict"


@dataclass
class Replica:
    replica_id: str
    store: dict[str, VersionedObject] = field(default_factory=dict)
    clock: VectorClock = field(default_factory=VectorClock)
    lamport: LamportClock | None = None
    inbox: list[Message] = field(default_factory=list)

    def __post_init__(self):
        if self.lamport is None:
            self.lamport = LamportClock(self.replica_id)

    def local_write(self, object_id: str, payload: str, sharing: SharingLevel) -> VersionedObject:
        """Write locally and return the new version (the caller broadcasts it)."""
        if isinstance(sharing, Counterparties) and self.replica_id not in sharing.parties:
            raise SharingViolation(f"{self.replica_id} is not a counterparty of {object_id}")
        current = self.store.get(object_id)
        if current is not None and current.sharing != sharing:
            raise SharingViolation(f"{object_id} is already shared as {current.sharing}")
        if current is not None and isinstance(sharing, Private) and current.writer != self.replica_id:
            raise SharingViolation(f"{object_id} is private to {current.writer}")
        base = vc_merge(current.version, self.clock) if current else self.clock
        self.clock = vc_tick(base, self.replica_id)
        self.lamport = self.lamport.tick()
        obj = VersionedObject(object_id, payload, self.clock, sharing, self.replica_id, self.lamport.counter)
        self.store[object_id] = obj
        return obj

    def receive(self, msg: Message) -> str:
        self.clock = vc_tick(vc_merge(self.clock, msg.obj.version), self.replica_id)
        self.lamport = self.lamport.recv(msg.lamport)
        return self.merge_incoming(msg.obj)

    def merge_incoming(self, incoming: VersionedObject) -> str:
        local = self.store.get(incoming.object_id)
        if isinstance(incoming.sharing, Private) and incoming.writer != self.replica_id:
            raise SharingViolation(f"{self.replica_id} may not hold private {incoming.object_id}")
        if local is None:
            self.store[incoming.object_id] = incoming
            return Outcome.ADOPT
        order = vc_compare(incoming.version, local.version)
        if order in (Ordering.BEFORE, Ordering.EQUAL):
            return Outcome.DISCARD
        if order is Ordering.AFTER:
            self.store[incoming.object_id] = incoming
            return Outcome.ADOPT
        winner = max(local, incoming, key=VersionedObject.winner_key)
        self.store[incoming.object_id] = VersionedObject(
            winner.object_id,
            winner.payload,
            vc_merge(local.version, incoming.version),
            winner.sharing,
            winner.writer,
            winner.stamp,
            conflict=True,
        )
        return Outcome.CONFLICT


@dataclass(frozen=True)
class Partition:
    """Link ``a``-``b`` is cut for steps ``start <= t < end``; ``end`` is the heal step."""

    start: int
    end: int
    a: str
    b: str

    def blocks(self, src: str, dst: str, t: int) -> bool:
        return self.start <= t < self.end and {src, dst} == {self.a, self.b}


@dataclass(frozen=True)
class Write:
    step: int
    replica: str
    object_id: str
    payload: str
    sharing: SharingLevel = EVERYONE


@dataclass(frozen=True)
class SimConfig:
    replicas: int
    seed: int
    min_delay: int = 1
    max_delay: int = 3
    partitions: tuple[Partition, ...] = ()

    def __post_init__(self):
        if self.replicas < 1:
            raise ScenarioError("need at least one replica")
        if not 1 <= self.min_delay <= self.max_delay:
            raise ScenarioError("delays must satisfy 1 <= min_delay <= max_delay")
        for p in self.partitions:
            if p.end < p.start:
                raise ScenarioError(f"partition heals before it starts: {p}")

    @property
    def replica_ids(self) -> list[str]:
        return [f"r{i}" for i in range(self.replicas)]

    @property
    def heal_step(self) -> int:
        return max((p.end for p in self.partitions), default=0)


@dataclass(frozen=True)
class ObjectReport:
    object_id: str
    sharing: SharingLevel
    entitled: tuple[str, ...]
    converged: bool
    last_write_step: int
    agreed_step: int | None
    lag: int | None
    conflicts: int
    conflict_flag: bool
    payload: str | None

    def to_json(self) -> dict[str, Any]:
        return {
            "object": self.object_id,
            "sharing": self.sharing.to_json(),
            "entitled": list(self.entitled),
            "converged": self.converged,
            "last_write_step": self.last_write_step,
            "agreed_step": self.agreed_step,
            "lag": self.lag,
            "conflicts": self.conflicts,
            "conflict_flag": self.conflict_flag,
            "payload": self.payload,
        }


@dataclass(frozen=True)
class ConvergenceReport:
    quiescent: bool
    step: int
    objects: tuple[ObjectReport, ...] = ()

    @property
    def converged(self) -> bool:
        return self.quiescent and all(o.converged for o in self.objects)

    def to_json(self) -> dict[str, Any]:
        return {
            "quiescent": self.quiescent,
            "step": self.step,
            "converged": self.converged,
            "objects": [o.to_json() for o in self.objects],
        }

    def format(self) -> str:
        if not self.quiescent:
            return f"step {self.step}: not quiescent, no verdict"
        lines = [f"step {self.step}: {'converged' if self.converged else 'DIVERGED'}"]
        for o in self.objects:
            verdict = "ok" if o.converged else "diverged"
            lines.append(
                f"  {o.object_id:<12} {verdict:<8} lag={o.lag} conflicts={o.conflicts}"
                f" flag={o.conflict_flag} replicas={','.join(o.entitled)}"
            )
        return "\n".join(lines)


def _validate_writes(config: SimConfig, writes: Sequence[Write]) -> None:
    ids = set(config.replica_ids)
    seen: dict[str, Write] = {}
    for w in writes:
        if w.replica not in ids:
            raise ScenarioError(f"unknown replica {w.replica}")
        if w.step < 1:
            raise ScenarioError("writes happen at step 1 or later")
        first = seen.setdefault(w.object_id, w)
        if first.sharing != w.sharing:
            raise ScenarioError(f"object {w.object_id} written with two sharing levels")
        if isinstance(w.sharing, Private) and first.replica != w.replica:
            raise ScenarioError(f"private object {w.object_id} written by two replicas")
        if isinstance(w.sharing, Counterparties) and not w.sharing.parties <= ids:
            raise ScenarioError(f"counterparties of {w.object_id} name unknown replicas")


class Simulation:
    """Single-threaded, seeded simulator.

    Each :meth:`step` advances time by one: due messages on open links are
    delivered first (ordered by due time, then send order), then the writes
    scripted for that step are performed.
    """

    def __init__(self, config: SimConfig, writes: Sequence[Write] = ()):
        _validate_writes(config, writes)
        self.config = config
        self.rng = random.Random(config.seed)
        self.now = 0
        self.replicas = {r: Replica(r) for r in config.replica_ids}
        self.writes = sorted(writes, key=lambda w: w.step)  # stable: script order within a step
        self._next_write = 0
        self.in_flight: list[Message] = []
        self.history: list[SimEvent] = []
        self._msg_seq = 0
        self.owners: dict[str, str] = {}
        self.sharing: dict[str, SharingLevel] = {}
        self.last_write: dict[str, int] = {}
        self.changed_at: dict[tuple[str, str], int] = {}
        self.conflicts: dict[str, int] = {}

    # -- driving ------------------------------------------------------------

    def step(self) -> None:
        t = self.now + 1
        due = sorted(
            (m for m in self.in_flight if m.deliver_at <= t and not self._blocked(m, t)),
            key=lambda m: (m.deliver_at, m.seq),
        )
        delivered = {m.seq for m in due}
        self.in_flight = [m for m in self.in_flight if m.seq not in delivered]
        for m in due:
            self._deliver(m, t)
        while self._next_write < len(self.writes) and self.writes[self._next_write].step <= t:
            self._write(self.writes[self._next_write], t)
            self._next_write += 1
        self.now = t

    def write(self, replica: str, object_id: str, payload: str, sharing: SharingLevel = EVERYONE) -> None:
        """Perform an unscripted write at the current step."""
        w = Write(max(self.now, 1), replica, object_id, payload, sharing)
        prior = [Write(1, self.owners[object_id], object_id, "", self.sharing[object_id])] if object_id in self.sharing else []
        _validate_writes(self.config, [*prior, w])
        self._write(w, self.now)

    def quiescent(self) -> bool:
        return (
            self._next_write >= len(self.writes)
            and not self.in_flight
            and self.now >= self.config.heal_step
        )

    def run(self, max_steps: int = 1_000_000) -> ConvergenceReport:
        """Step until quiescent, then check convergence."""
        for _ in range(max_steps):
            if self.quiescent():
                break
            self.step()
        return self.check_convergence()

    # -- internals ----------------------------------------------------------

    def _blocked(self, m: Message, t: int) -> bool:
        return any(p.blocks(m.src, m.dst, t) for p in self.config.partitions)

    def _record(self, replica: Replica, kind: str, t: int, object_id: str, cause: int | None = None) -> int:
        eid = len(self.history)
        self.history.append(
            SimEvent(eid, replica.replica_id, kind, t, replica.clock, replica.lamport.counter, cause, object_id)
        )
        return eid

    def _write(self, w: Write, t: int) -> None:
        r = self.replicas[w.replica]
        obj = r.local_write(w.object_id, w.payload, w.sharing)
        self.owners.setdefault(w.object_id, w.replica)
        self.sharing.setdefault(w.object_id, w.sharing)
        self.last_write[w.object_id] = t
        self.changed_at[(w.replica, w.object_id)] = t
        eid = self._record(r, "write", t, w.object_id)
        for dst in entitled(w.sharing, self.owners[w.object_id], self.replicas):
            if dst == w.replica:
                continue
            delay = self.rng.randint(self.config.min_delay, self.config.max_delay)
            self.in_flight.append(Message(self._msg_seq, w.replica, dst, t, t + delay, obj, r.lamport.counter, eid))
            self._msg_seq += 1

    def _deliver(self, m: Message, t: int) -> None:
        r = self.replicas[m.dst]
        outcome = r.receive(m)
        self._record(r, "recv", t, m.obj.object_id, cause=m.send_event)
        if outcome != Outcome.DISCARD:
            self.changed_at[(m.dst, m.obj.object_id)] = t
        if outcome == Outcome.CONFLICT:
            self.conflicts[m.obj.object_id] = self.conflicts.get(m.obj.object_id, 0) + 1

    # -- reporting ----------------------------------------------------------

    def check_convergence(self) -> ConvergenceReport:
        """Verdict per shared object; private objects are out of scope."""
        if not self.quiescent():
            return ConvergenceReport(False, self.now)
        reports = []
        for oid in sorted(self.sharing):
            sharing = self.sharing[oid]
            if isinstance(sharing, Private):
                continue
            holders = entitled(sharing, self.owners[oid], self.replicas)
            copies = [self.replicas[r].store.get(oid) for r in holders]
            first = copies[0]
            converged = first is not None and all(
                c is not None and (c.payload, c.version) == (first.payload, first.version) for c in copies
            )
            agreed = max(self.changed_at.get((r, oid), 0) for r in holders) if converged else None
            reports.append(
                ObjectReport(
                    object_id=oid,
                    sharing=sharing,
                    entitled=tuple(holders),
                    converged=converged,
                    last_write_step=self.last_write[oid],
                    agreed_step=agreed,
                    lag=None if agreed is None else agreed - self.last_write[oid],
                    conflicts=self.conflicts.get(oid, 0),
                    conflict_flag=bool(first and first.conflict),
                    payload=first.payload if first else None,
                )
            )
        return ConvergenceReport(True, self.now, tuple(reports))

    def snapshot(self) -> dict[str, Any]:
        """Full observable state, for determinism checks."""
        return {
            "now": self.now,
            "replicas": {
                rid: {
                    "clock": r.clock.to_json(),
                    "lamport": r.lamport.counter,
                    "store": {k: v.to_json() for k, v in sorted(r.store.items())},
                }
                for rid, r in self.replicas.items()
            },
            "in_flight": [(m.seq, m.src, m.dst, m.deliver_at) for m in self.in_flight],
            "history": [(e.eid, e.replica, e.kind, e.step, e.vc.to_json(), e.lamport, e.cause) for e in self.history],
        }


# -- scenario files -------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    config: SimConfig
    writes: tuple[Write, ...]

    def simulation(self) -> Simulation:
        return Simulation(self.config, self.writes)


def scenario_from_json(data: Mapping[str, Any], seed: int | None = None) -> Scenario:
    """Parse a scenario document; ``seed`` overrides the file's seed."""
    try:
        delay = data.get("delay", {})
        chosen = seed if seed is not None else data.get("seed")
        if chosen is None:
            raise ScenarioError("scenario has no seed; pass one explicitly")
        config = SimConfig(
            replicas=int(data["replicas"]),
            seed=int(chosen),
            min_delay=int(delay.get("min", 1)),
            max_delay=int(delay.get("max", 3)),
            partitions=tuple(
                Partition(int(p["start"]), int(p["end"]), p["a"], p["b"]) for p in data.get("partitions", ())
            ),
        )
        writes = tuple(
            Write(int(w["step"]), w["replica"], w["object"], str(w["payload"]), sharing_from_json(w.get("sharing", "everyone")))
            for w in data.get("writes", ())
        )
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from exc
    return Scenario(config, writes)


def scenario_to_json(s: Scenario) -> dict[str, Any]:
    c = s.config
    return {
        "replicas": c.replicas,
        "seed": c.seed,
        "delay": {"min": c.min_delay, "max": c.max_delay},
        "partitions": [{"start": p.start, "end": p.end, "a": p.a, "b": p.b} for p in c.partitions],
        "writes": [
            {"step": w.step, "replica": w.replica, "object": w.object_id, "payload": w.payload, "sharing": w.sharing.to_json()}
            for w in s.writes
        ],
    }


def load_scenario(text: str, seed: int | None = None) -> Scenario:
    return scenario_from_json(json.loads(text), seed)


# -- causality oracle helpers -----------------------------------------------------------


def happens_before_matrix(history: Sequence[SimEvent]) -> list[set[int]]:
    """For each event, the set of events reachable from it along process
    order and message edges (brute-force graph search)."""
    succ: dict[int, list[int]] = {e.eid: [] for e in history}
    last: dict[str, int] = {}
    for e in history:
        if e.replica in last:
            succ[last[e.replica]].append(e.eid)
        last[e.replica] = e.eid
        if e.cause is not None:
            succ[e.cause].append(e.eid)
    reach = []
    for e in history:
        seen: set[int] = set()
        stack = list(succ[e.eid])
        while stack:
            n = stack.pop()
            if n not in seen:
                seen.add(n)
                stack.extend(succ[n])
        reach.append(seen)
    return reach
