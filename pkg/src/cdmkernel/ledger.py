"""The state-transition interpreter.

A :class:`Ledger` is an immutable value holding contract records, an
append-only event log and a transfer log. :func:`apply` checks an operation's
before events against current ledger facts and then applies its after events
atomically, returning a new ledger.

Before events are preconditions; they are never re-actioned. The after
events are interpreted as follows:

* payment events and events without economics append to the transfer log;
* events marked ``new_contract`` create a contract;
* events for the target of an ``Operation.replaces`` pair create the new
  economics version of the replaced contract;
* events naming an existing contract move it to a new economics id derived
  from the old id and the operation id (one successor per event), unless the
  single event repeats the contract's current terms, which is a no-op;
* before contracts that no after event mentions are terminated.
"""

from __future__ import annotations

import enum
import json
from collections import defaultdict
from dataclasses import dataclass, field, replace
from decimal import Decimal
from typing import Any, Iterable, Iterator, Mapping

from .clocks import LamportClock
from .contract_state import EMPTY, ContractState, from_json_list, to_json_list
from .events import Amount, Event, MaybeEvent, Operation, TransferKind, event_from_json, event_to_json
from .provenance import (
    AugValue,
    CaptureConfig,
    Derived,
    Orig,
    ProvenanceNode,
    aplus,
    apply_n,
    node_from_json,
    node_to_json,
    observe,
)


class CaptureMode(str, enum.Enum):
    PER_TRANSITION = "per-transition"
    PER_SEQUENCE = "per-sequence"


class Status(str, enum.Enum):
    ACTIVE = "active"
    TERMINATED = "terminated"


class Reason(str, enum.Enum):
    UNKNOWN_ECONOMICS = "UnknownEconomics"
    QUANTITY_MISMATCH = "QuantityMismatch"
    TERMINATED_CONTRACT = "TerminatedContract"
    UNKNOWN_PARTY = "UnknownParty"
    ECONOMICS_EXISTS = "EconomicsExists"
    UNIT_MISMATCH = "UnitMismatch"
    MISSING_AMOUNT = "MissingAmount"


# Operations whose before amount must be the contract's current quantity.
ORIGINAL_QUANTITY_OPS = frozenset({"split", "partial_assign"})

TRANSITION_LABEL = "statetransition"


def derive_econ_id(old: str, op_id: int, leg: int | None = None) -> str:
    """Economics id of a contract after operation ``op_id`` changed it."""
    base = f"{old}@{op_id}"
    return base if leg is None else f"{base}.{leg}"


@dataclass(frozen=True)
class ContractRecord:
    econ_id: str
    parties: tuple[int, ...]
    state: ContractState
    status: Status
    quantity: Amount | None
    lineage: ProvenanceNode
    successors: tuple[str, ...] = ()

    @property
    def active(self) -> bool:
        return self.status is Status.ACTIVE

    def to_json(self) -> dict[str, Any]:
        return {
            "econ": self.econ_id,
            "parties": list(self.parties),
            "status": self.status.value,
            "quantity": self.quantity.to_json() if self.quantity else None,
            "state": to_json_list(self.state),
            "lineage": node_to_json(self.lineage),
            "successors": list(self.successors),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> ContractRecord:
        return cls(
            econ_id=data["econ"],
            parties=tuple(data["parties"]),
            state=from_json_list(data["state"]),
            status=Status(data["status"]),
            quantity=Amount.from_json(data["quantity"]),
            lineage=node_from_json(data["lineage"]),
            successors=tuple(data.get("successors", ())),
        )


@dataclass(frozen=True)
class LogEntry:
    """One event as recorded by the ledger.

    ``op_seq`` counts operations applied so far and groups the entries of
    one operation; ``role`` says whether the event was a precondition
    (``before``) or an action (``after``).
    """

    seq: int
    op_seq: int
    op_id: int
    op_name: str
    role: str
    lamport: int
    event: MaybeEvent
    replaces: tuple[tuple[str, str], ...] = ()

    def to_json(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "opSeq": self.op_seq,
            "opId": self.op_id,
            "op": self.op_name,
            "role": self.role,
            "lamport": self.lamport,
            "event": event_to_json(self.event),
            "replaces": [list(p) for p in self.replaces],
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> LogEntry:
        return cls(
            seq=int(data["seq"]),
            op_seq=int(data.get("opSeq", 0)),
            op_id=int(data["opId"]),
            op_name=data.get("op", "custom"),
            role=data.get("role", "after"),
            lamport=int(data.get("lamport", 0)),
            event=event_from_json(data["event"]),
            replaces=tuple(tuple(p) for p in data.get("replaces", ())),
        )


@dataclass(frozen=True)
class Transfer:
    op_id: int
    lamport: int
    sender: int | None
    receiver: int | None
    amount: Amount | None
    econ: str | None
    kind: TransferKind

    def to_json(self) -> dict[str, Any]:
        return {
            "opId": self.op_id,
            "lamport": self.lamport,
            "from": self.sender,
            "to": self.receiver,
            "amount": self.amount.to_json() if self.amount else None,
            "econ": self.econ,
            "kind": self.kind.value,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> Transfer:
        return cls(
            op_id=data["opId"],
            lamport=data["lamport"],
            sender=data["from"],
            receiver=data["to"],
            amount=Amount.from_json(data["amount"]),
            econ=data["econ"],
            kind=TransferKind(data["kind"]),
        )


@dataclass(frozen=True)
class Failure:
    where: str
    reason: Reason
    detail: str

    def __str__(self) -> str:
        return f"{self.where}: {self.reason.value}: {self.detail}"


@dataclass(frozen=True)
class ValidationReport:
    failures: tuple[Failure, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.failures

    def reasons(self) -> list[Reason]:
        return [f.reason for f in self.failures]

    def __str__(self) -> str:
        return "ok" if self.ok else "\n".join(str(f) for f in self.failures)


class ValidationError(Exception):
    def __init__(self, report: ValidationReport):
        super().__init__(str(report))
        self.report = report


class UnknownEconomics(KeyError):
    reason = Reason.UNKNOWN_ECONOMICS


@dataclass(frozen=True)
class Ledger:
    contracts: Mapping[str, ContractRecord] = field(default_factory=dict)
    event_log: tuple[LogEntry, ...] = ()
    transfer_log: tuple[Transfer, ...] = ()
    clock: LamportClock = LamportClock("ledger")
    capture: CaptureMode = CaptureMode.PER_TRANSITION
    record_history: bool = False
    record_timestamps: bool = False

    def contract(self, econ_id: str) -> ContractRecord:
        try:
            return self.contracts[econ_id]
        except KeyError:
            raise UnknownEconomics(econ_id) from None

    def active(self) -> list[ContractRecord]:
        return [c for c in self.contracts.values() if c.active]

    def validate(self, op: Operation) -> ValidationReport:
        return validate(self, op)

    def apply(self, op: Operation) -> Ledger:
        return apply(self, op)

    def lineage_of(self, econ_id: str) -> ProvenanceNode:
        return lineage_of(self, econ_id)

    def empty_like(self) -> Ledger:
        """Fresh ledger with the same capture settings and clock node."""
        return Ledger(
            clock=LamportClock(self.clock.node),
            capture=self.capture,
            record_history=self.record_history,
            record_timestamps=self.record_timestamps,
        )

    @property
    def op_count(self) -> int:
        return self.event_log[-1].op_seq + 1 if self.event_log else 0

    def operations(self) -> list[Operation]:
        return operations_from_log(self.event_log)

    def to_json(self) -> dict[str, Any]:
        return {
            "capture": self.capture.value,
            "record_history": self.record_history,
            "record_timestamps": self.record_timestamps,
            "clock": self.clock.to_json(),
            "contracts": [c.to_json() for c in self.contracts.values()],
            "event_log": [e.to_json() for e in self.event_log],
            "transfer_log": [t.to_json() for t in self.transfer_log],
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> Ledger:
        contracts = (ContractRecord.from_json(c) for c in data.get("contracts", ()))
        return cls(
            contracts={c.econ_id: c for c in contracts},
            event_log=tuple(LogEntry.from_json(e) for e in data.get("event_log", ())),
            transfer_log=tuple(Transfer.from_json(t) for t in data.get("transfer_log", ())),
            clock=LamportClock.from_json(data.get("clock", {"node": "ledger", "t": 0})),
            capture=CaptureMode(data.get("capture", CaptureMode.PER_TRANSITION.value)),
            record_history=bool(data.get("record_history", False)),
            record_timestamps=bool(data.get("record_timestamps", False)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


# -- validation -------------------------------------------------------------------


def _check_contract(ledger: Ledger, where: str, econ: str | None, out: list[Failure]) -> ContractRecord | None:
    if econ is None:
        out.append(Failure(where, Reason.UNKNOWN_ECONOMICS, "event carries no economics reference"))
        return None
    rec = ledger.contracts.get(econ)
    if rec is None:
        out.append(Failure(where, Reason.UNKNOWN_ECONOMICS, f"no contract {econ}"))
        return None
    if not rec.active:
        out.append(Failure(where, Reason.TERMINATED_CONTRACT, f"contract {econ} is terminated"))
        return None
    return rec


def _is_transfer(e: Event) -> bool:
    return e.kind is TransferKind.PAYMENT or e.econ is None


@dataclass
class _Plan:
    """How each after event of an operation will be interpreted."""

    transfers: list[Event] = field(default_factory=list)
    # econ -> events, insertion-ordered
    creations: dict[str, list[Event]] = field(default_factory=dict)
    replacements: dict[str, list[Event]] = field(default_factory=dict)
    updates: dict[str, list[Event]] = field(default_factory=dict)
    sources: dict[str, list[str]] = field(default_factory=lambda: defaultdict(list))


def _plan(op: Operation) -> _Plan:
    plan = _Plan()
    for old, new in op.replaces:
        plan.sources[new].append(old)
    for e in op.after_events():
        if _is_transfer(e):
            plan.transfers.append(e)
        elif e.econ in plan.sources:
            plan.replacements.setdefault(e.econ, []).append(e)
        elif e.new_contract:
            plan.creations.setdefault(e.econ, []).append(e)
        else:
            plan.updates.setdefault(e.econ, []).append(e)
    return plan


def _is_noop(rec: ContractRecord, events: list[Event]) -> bool:
    if len(events) != 1:
        return False
    e = events[0]
    return e.amount == rec.quantity and (e.sender, e.receiver) == rec.parties


def _successor_ids(econ: str, op_id: int, n: int) -> list[str]:
    if n == 1:
        return [derive_econ_id(econ, op_id)]
    return [derive_econ_id(econ, op_id, k) for k in range(1, n + 1)]


def _check_aggregate(where: str, events: list[Event], out: list[Failure]) -> None:
    units = set()
    for e in events:
        if e.amount is None:
            out.append(Failure(where, Reason.MISSING_AMOUNT, f"event for {e.econ} has no amount"))
        else:
            units.add(e.amount.unit)
    if len(units) > 1:
        out.append(Failure(where, Reason.UNIT_MISMATCH, f"mixed units {sorted(units)}"))


def validate(ledger: Ledger, op: Operation) -> ValidationReport:
    """Match every before event against current ledger facts.

    Also checks that the after events can be applied (referenced contracts
    exist and are active, new economics ids are free, amounts are present).
    """
    out: list[Failure] = []
    for i, e in enumerate(op.before):
        if e is None:
            continue
        where = f"before[{i}]"
        rec = _check_contract(ledger, where, e.econ, out)
        if rec is None:
            continue
        for p in (e.sender, e.receiver):
            if p not in rec.parties:
                out.append(Failure(where, Reason.UNKNOWN_PARTY, f"party {p} not in {e.econ} party table"))
        if op.name in ORIGINAL_QUANTITY_OPS and e.amount != rec.quantity:
            out.append(
                Failure(
                    where,
                    Reason.QUANTITY_MISMATCH,
                    f"before amount {e.amount} differs from recorded quantity {rec.quantity} of {e.econ}",
                )
            )

    plan = _plan(op)
    before_econs = {e.econ for e in op.before_events()}
    taken: set[str] = set()

    def claim(where: str, econ: str) -> None:
        if econ in ledger.contracts or econ in taken:
            out.append(Failure(where, Reason.ECONOMICS_EXISTS, f"economics {econ} already exists"))
        taken.add(econ)

    for econ, events in plan.creations.items():
        claim(f"after:{econ}", econ)
        _check_aggregate(f"after:{econ}", events, out)
    for econ, events in plan.replacements.items():
        where = f"after:{econ}"
        claim(where, econ)
        _check_aggregate(where, events, out)
        for old in plan.sources[econ]:
            if old not in before_econs:
                _check_contract(ledger, f"replaces:{old}", old, out)
    for econ, events in plan.updates.items():
        where = f"after:{econ}"
        rec = _check_contract(ledger, where, econ, out)
        _check_aggregate(where, events, out)
        if rec is None or _is_noop(rec, events):
            continue
        for new in _successor_ids(econ, op.op_id, len(events)):
            claim(where, new)
    return ValidationReport(tuple(out))


# -- application --------------------------------------------------------------------


class _Builder:
    """Mutable scratch space for one application; frozen into a Ledger at the end."""

    def __init__(self, ledger: Ledger, op: Operation, stamp: int):
        self.ledger = ledger
        self.op = op
        self.contracts = dict(ledger.contracts)
        self.cfg = CaptureConfig(ledger.record_history, ledger.record_timestamps, clock=lambda: stamp)
        self.stamp = stamp
        self.origin = f"op:{op.op_id}"

    @property
    def per_sequence(self) -> bool:
        return self.ledger.capture is CaptureMode.PER_SEQUENCE

    def _node_extras(self, quantity: Amount) -> tuple[Decimal | None, int | None]:
        snap = quantity.q if self.cfg.record_history else None
        ts = self.stamp if self.cfg.record_timestamps else None
        return snap, ts

    def lineage(self, parents: list[ProvenanceNode], events: list[Event], quantity: Amount, label: str) -> ProvenanceNode:
        """Lineage root for a contract produced from ``parents`` by ``events``.

        Per-transition capture adds one node per event; per-sequence capture
        adds one node for the whole operation.
        """
        snap, ts = self._node_extras(quantity)
        if not parents:
            root: ProvenanceNode = Orig(self.origin, snap, ts)
            if self.per_sequence:
                return Derived(f"operation:{self.op.name}", (root,), snap, ts)
            for _ in events[1:]:
                root = Derived(TRANSITION_LABEL, (root,), snap, ts)
            return root
        if self.per_sequence:
            return Derived(f"operation:{self.op.name}", tuple(parents), snap, ts)
        root = Derived(label, tuple(parents), snap, ts)
        for _ in events[1:]:
            root = Derived(label, (root,), snap, ts)
        return root

    def quantity_value(self, events: list[Event]) -> AugValue:
        parts = [observe(e.amount.q, self.origin, self.cfg) for e in events]
        if len(parts) == 1:
            return parts[0]
        if self.per_sequence:
            return apply_n("sum", lambda *xs: sum(xs, Decimal(0)), parts, self.cfg)
        total = parts[0]
        for p in parts[1:]:
            total = aplus(total, p, self.cfg)
        return total

    def create(
        self,
        econ: str,
        events: list[Event],
        parents: list[ContractRecord],
        label: str,
    ) -> None:
        quantity = events[0].amount
        for e in events[1:]:
            quantity = quantity + e.amount
        parties: list[int] = []
        for e in events:
            for p in (e.sender, e.receiver):
                if p is not None and p not in parties:
                    parties.append(p)
        base = parents[0].state if parents else EMPTY
        state = base.update("quantity", self.quantity_value(events), self.cfg)
        self.contracts[econ] = ContractRecord(
            econ_id=econ,
            parties=tuple(parties),
            state=state,
            status=Status.ACTIVE,
            quantity=quantity,
            lineage=self.lineage([p.lineage for p in parents], events, quantity, label),
        )

    def retire(self, econ: str, successors: Iterable[str] = ()) -> None:
        rec = self.contracts[econ]
        self.contracts[econ] = replace(
            rec, status=Status.TERMINATED, successors=rec.successors + tuple(successors)
        )


def apply(ledger: Ledger, op: Operation) -> Ledger:
    """Validate then apply ``op``; raises :class:`ValidationError` and leaves
    ``ledger`` untouched if any precondition fails."""
    report = validate(ledger, op)
    if not report.ok:
        raise ValidationError(report)

    clock = ledger.clock
    seq = len(ledger.event_log)
    op_seq = ledger.op_count
    entries: list[LogEntry] = []
    for role, events in (("before", op.before), ("after", op.after)):
        for e in events:
            clock = clock.tick()
            entries.append(LogEntry(seq, op_seq, op.op_id, op.name, role, clock.counter, e, op.replaces))
            seq += 1

    b = _Builder(ledger, op, clock.counter)
    plan = _plan(op)
    transfers = [
        Transfer(op.op_id, clock.counter, e.sender, e.receiver, e.amount, e.econ, e.kind) for e in plan.transfers
    ]

    for econ, events in plan.creations.items():
        b.create(econ, events, [], TRANSITION_LABEL)

    replace_label = "amend" if op.name == "amend" else TRANSITION_LABEL
    for econ, events in plan.replacements.items():
        olds = plan.sources[econ]
        b.create(econ, events, [ledger.contracts[o] for o in olds], replace_label)
        for o in olds:
            b.retire(o, [econ])

    for econ, events in plan.updates.items():
        rec = ledger.contracts[econ]
        if _is_noop(rec, events):
            continue
        new_ids = _successor_ids(econ, op.op_id, len(events))
        for new, e in zip(new_ids, events):
            b.create(new, [e], [rec], TRANSITION_LABEL)
        b.retire(econ, new_ids)

    mentioned = {e.econ for e in op.after_events()}
    retired_olds = {o for olds in plan.sources.values() for o in olds}
    for e in op.before_events():
        if e.econ not in mentioned and e.econ not in retired_olds and b.contracts[e.econ].active:
            b.retire(e.econ)

    return replace(
        ledger,
        contracts=b.contracts,
        event_log=ledger.event_log + tuple(entries),
        transfer_log=ledger.transfer_log + tuple(transfers),
        clock=clock,
    )


def lineage_of(ledger: Ledger, econ_id: str) -> ProvenanceNode:
    return ledger.contract(econ_id).lineage


# -- replay -------------------------------------------------------------------------


def operations_from_log(entries: Iterable[LogEntry]) -> list[Operation]:
    """Regroup logged events into the operations that produced them."""
    grouped: dict[int, list[LogEntry]] = {}
    for entry in entries:
        grouped.setdefault(entry.op_seq, []).append(entry)
    ops = []
    for group in grouped.values():
        head = group[0]
        ops.append(
            Operation(
                name=head.op_name,
                before=tuple(e.event for e in group if e.role == "before"),
                after=tuple(e.event for e in group if e.role == "after"),
                replaces=head.replaces,
            )
        )
    return ops


def replay(entries: Iterable[LogEntry], base: Ledger | None = None) -> Ledger:
    """Fold :func:`apply` over a log, starting from an empty ledger
    (configured like ``base`` when given)."""
    ledger = base.empty_like() if base is not None else Ledger()
    for op in operations_from_log(entries):
        ledger = apply(ledger, op)
    return ledger


def read_log(lines: Iterable[str]) -> Iterator[LogEntry]:
    for line in lines:
        if line.strip():
            yield LogEntry.from_json(json.loads(line))


def write_log(entries: Iterable[LogEntry]) -> str:
    return "".join(json.dumps(e.to_json(), sort_keys=True) + "\n" for e in entries)


def active_totals(ledger: Ledger) -> dict[str, Decimal]:
    """Sum of active contract quantities per unit."""
    totals: dict[str, Decimal] = defaultdict(Decimal)
    for c in ledger.active():
        if c.quantity is not None:
            totals[c.quantity.unit] += c.quantity.q
    return dict(totals)
