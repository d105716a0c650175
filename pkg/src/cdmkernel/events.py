"""Events, operations and the six lifecycle operation constructors.

An :class:`Event` is a bilateral transfer: ``(id, sender, receiver, amount,
econ)`` plus two extensions, the transfer ``kind`` and a ``new_contract``
mark. The "no value" variants of the five-tuple are represented by ``None``
(``NoEvent``, ``NoEventID``, ``NoParty``, ``NoAmount``, ``NoEconomics``).

An :class:`Operation` is a pair of event sequences. ``before`` events are
preconditions the ledger checks; ``after`` events are the actions applied.
Every event in ``after`` carries the same id, the operation id.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Iterable, Sequence

from .provenance import Number, format_decimal, to_decimal


class TransferKind(str, enum.Enum):
    PAYMENT = "payment"
    DELIVERY = "delivery"
    UNSPECIFIED = "unspecified"


@dataclass(frozen=True)
class Amount:
    q: Decimal
    unit: str

    def __post_init__(self):
        if not self.unit:
            raise ValueError("amount needs a unit code")
        if not isinstance(self.q, Decimal):
            object.__setattr__(self, "q", to_decimal(self.q))

    def _check_unit(self, other: Amount) -> None:
        if other.unit != self.unit:
            raise ValueError(f"unit mismatch: {self.unit} vs {other.unit}")

    def __add__(self, other: Amount) -> Amount:
        self._check_unit(other)
        return Amount(self.q + other.q, self.unit)

    def __sub__(self, other: Amount) -> Amount:
        self._check_unit(other)
        return Amount(self.q - other.q, self.unit)

    def plus(self, n: Number) -> Amount:
        return Amount(self.q + to_decimal(n), self.unit)

    def __str__(self) -> str:
        return f"{format_decimal(self.q)} {self.unit}"

    def to_json(self) -> dict[str, str]:
        return {"q": format_decimal(self.q), "unit": self.unit}

    @classmethod
    def from_json(cls, data: dict[str, Any] | None) -> Amount | None:
        if data is None:
            return None
        return cls(to_decimal(data["q"]), data["unit"])


def _non_negative(name: str, n: int | None) -> None:
    if n is not None and n < 0:
        raise ValueError(f"{name} must be non-negative, got {n}")


@dataclass(frozen=True)
class Event:
    id: int | None
    sender: int | None
    receiver: int | None
    amount: Amount | None
    econ: str | None
    kind: TransferKind = TransferKind.UNSPECIFIED
    new_contract: bool = False

    def __post_init__(self):
        _non_negative("event id", self.id)
        _non_negative("party id", self.sender)
        _non_negative("party id", self.receiver)

    def same_transfer(self, other: Event) -> bool:
        """Equal ignoring the event id."""
        return (self.sender, self.receiver, self.amount, self.econ) == (
            other.sender,
            other.receiver,
            other.amount,
            other.econ,
        )

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "from": self.sender,
            "to": self.receiver,
            "amount": self.amount.to_json() if self.amount else None,
            "econ": self.econ,
            "kind": self.kind.value,
            "new_contract": self.new_contract,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> Event:
        return cls(
            id=data.get("id"),
            sender=data.get("from"),
            receiver=data.get("to"),
            amount=Amount.from_json(data.get("amount")),
            econ=data.get("econ"),
            kind=TransferKind(data.get("kind", "unspecified")),
            new_contract=bool(data.get("new_contract", False)),
        )


MaybeEvent = Event | None  # None is NoEvent


def event_to_json(e: MaybeEvent) -> dict[str, Any] | None:
    return None if e is None else e.to_json()


def event_from_json(data: dict[str, Any] | None) -> MaybeEvent:
    return None if data is None else Event.from_json(data)


@dataclass(frozen=True)
class Operation:
    """Before/after event sequences.

    ``name`` tags which constructor built the operation (or a caller's own
    name). ``replaces`` lists ``(old_econ, new_econ)`` pairs for operations
    whose after events introduce a new economics version of a before
    contract, making that linkage explicit rather than positional.
    """

    name: str
    before: tuple[MaybeEvent, ...]
    after: tuple[MaybeEvent, ...]
    replaces: tuple[tuple[str, str], ...] = field(default=())

    def __post_init__(self):
        for attr in ("before", "after", "replaces"):
            value = getattr(self, attr)
            if not isinstance(value, tuple):
                object.__setattr__(self, attr, tuple(value))
        object.__setattr__(self, "replaces", tuple(tuple(p) for p in self.replaces))
        ids = {e.id for e in self.after if e is not None}
        if not ids:
            raise ValueError("an operation needs at least one after event")
        if len(ids) != 1 or None in ids:
            raise ValueError(f"after events must share one operation id, got {sorted(ids, key=str)}")

    @property
    def op_id(self) -> int:
        return next(e.id for e in self.after if e is not None)

    def before_events(self) -> list[Event]:
        return [e for e in self.before if e is not None]

    def after_events(self) -> list[Event]:
        return [e for e in self.after if e is not None]

    def to_json(self) -> dict[str, Any]:
        return {
            "opId": self.op_id,
            "name": self.name,
            "before": [event_to_json(e) for e in self.before],
            "after": [event_to_json(e) for e in self.after],
            "replaces": [list(p) for p in self.replaces],
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> Operation:
        op = cls(
            name=data.get("name", "custom"),
            before=tuple(event_from_json(e) for e in data["before"]),
            after=tuple(event_from_json(e) for e in data["after"]),
            replaces=tuple(tuple(p) for p in data.get("replaces", ())),
        )
        if "opId" in data and data["opId"] != op.op_id:
            raise ValueError(f"opId {data['opId']} disagrees with after events ({op.op_id})")
        return op


# -- constructors -------------------------------------------------------------


def _require_econ(e: str | None, what: str) -> str:
    if e is None:
        raise ValueError(f"{what} requires an economics reference")
    return e


def _require_party(p: int | None, what: str) -> int:
    if p is None:
        raise ValueError(f"{what} requires a party id")
    return p


def _require_positive(a: Amount, what: str) -> None:
    if a.q <= 0:
        raise ValueError(f"{what} must be positive, got {a}")


def new_op(
    id: int,
    e: str | None,
    party1: int | None,
    party2: int | None,
    quantity: Amount,
    *,
    kind: TransferKind = TransferKind.UNSPECIFIED,
    empty_before: bool = False,
) -> Operation:
    """Create a contract. ``empty_before`` selects ``before = []`` over ``[NoEvent]``."""
    _require_econ(e, "new")
    _require_party(party1, "new")
    _require_party(party2, "new")
    before: tuple[MaybeEvent, ...] = () if empty_before else (None,)
    after = (Event(id, party1, party2, quantity, e, kind, new_contract=True),)
    return Operation("new", before, after)


def terminate_for_cash(
    id1: int,
    id2: int,
    sender: int,
    receiver: int,
    quantity: Amount,
    cashamount: Amount,
    e: str | None,
    *,
    kind: TransferKind = TransferKind.UNSPECIFIED,
) -> Operation:
    _require_econ(e, "terminate_for_cash")
    if sender == receiver:
        raise ValueError("terminate_for_cash needs two distinct parties")
    return Operation(
        "terminate_for_cash",
        (Event(id1, sender, receiver, quantity, e, kind),),
        (Event(id2, sender, receiver, cashamount, None, TransferKind.PAYMENT),),
    )


def amend(
    id1: int,
    id2: int,
    sender: int,
    receiver: int,
    quantity1: Amount,
    quantity2: Amount,
    e1: str | None,
    e2: str | None,
    *,
    kind: TransferKind = TransferKind.UNSPECIFIED,
) -> Operation:
    """Replace economics ``e1`` by ``e2`` (and possibly the quantity)."""
    _require_econ(e1, "amend")
    _require_econ(e2, "amend")
    if e1 == e2:
        raise ValueError("amend must introduce a new economics reference")
    return Operation(
        "amend",
        (Event(id1, sender, receiver, quantity1, e1, kind),),
        (Event(id2, sender, receiver, quantity2, e2, kind),),
        replaces=((e1, e2),),
    )


def split(
    id1: int,
    id2: int,
    sender: int,
    receiver: int,
    t1: int | None,
    t2: int | None,
    q1: Amount,
    q2: Amount,
    e: str | None,
    *,
    kind: TransferKind = TransferKind.UNSPECIFIED,
) -> Operation:
    _require_econ(e, "split")
    _require_party(t1, "split")
    _require_party(t2, "split")
    _require_positive(q1, "q1")
    _require_positive(q2, "q2")
    return Operation(
        "split",
        (Event(id1, sender, receiver, q1 + q2, e, kind),),
        (
            Event(id2, sender, t1, q1, e, kind),
            Event(id2, sender, t2, q2, e, kind),
        ),
    )


def partial_assign(
    id1: int,
    id2: int,
    sender: int,
    receiver: int,
    t1: int | None,
    q1: Amount,
    q2: Amount,
    cash: Amount,
    e1: str | None,
    e2: str | None,
    *,
    kind: TransferKind = TransferKind.UNSPECIFIED,
) -> Operation:
    _require_econ(e1, "partial_assign")
    _require_econ(e2, "partial_assign")
    _require_party(t1, "partial_assign")
    _require_positive(q1, "q1")
    _require_positive(q2, "q2")
    if e1 == e2:
        raise ValueError("partial_assign must produce a new economics reference")
    return Operation(
        "partial_assign",
        (Event(id1, sender, receiver, q1 + q2, e1, kind),),
        (
            Event(id2, sender, receiver, q1, e2, kind),
            Event(id2, sender, t1, q2, e2, kind),
            Event(id2, receiver, t1, cash, None, TransferKind.PAYMENT),
        ),
        replaces=((e1, e2),),
    )


def tear_up(
    id: int,
    sender: int,
    receiver: int,
    qx: Sequence[Amount],
    q2: Amount,
    q3: Amount,
    q4: Amount,
    q5: Amount,
    x: Number,
    y: Number,
    cash: Amount,
    ex: Sequence[str],
    e2: str,
    e3: str,
    e4: str,
    e5: str,
    e6: str,
    *,
    kind: TransferKind = TransferKind.UNSPECIFIED,
) -> Operation:
    """Cancel the ``ex`` contracts, adjust e3/e4, create e5, pay ``cash`` under e6.

    ``qx``/``ex`` pair up one-to-one; a single pair gives the four-before,
    five-after shape.
    """
    qx, ex = list(qx), list(ex)
    if len(qx) != len(ex) or not ex:
        raise ValueError("qx and ex must be non-empty and of equal length")
    for name, e in [*(("ex", e) for e in ex), ("e2", e2), ("e3", e3), ("e4", e4), ("e5", e5), ("e6", e6)]:
        _require_econ(e, f"tear_up {name}")
    q3_after = q3.plus(-to_decimal(x))
    if q3_after.q < 0:
        raise ValueError("tear_up would leave a negative quantity on e3")
    cancelled = tuple(Event(id, sender, receiver, q, e, kind) for q, e in zip(qx, ex))
    return Operation(
        "tear_up",
        cancelled
        + (
            Event(id, sender, receiver, q2, e2, kind),
            Event(id, sender, receiver, q3, e3, kind),
            Event(id, sender, receiver, q4, e4, kind),
        ),
        (
            Event(id, sender, receiver, q2, e2, kind),
            Event(id, sender, receiver, q3_after, e3, kind),
            Event(id, sender, receiver, q4.plus(y), e4, kind),
            Event(id, sender, receiver, q5, e5, kind, new_contract=True),
            Event(id, sender, receiver, cash, e6, TransferKind.PAYMENT),
        ),
    )


# -- lint -----------------------------------------------------------------------


@dataclass(frozen=True)
class LintWarning:
    code: str
    where: str
    message: str

    def __str__(self) -> str:
        return f"{self.where}: {self.code}: {self.message}"


NO_CHANGE = "no-change"
KIND_UNSPECIFIED = "kind-unspecified"
NO_AMOUNT = "no-amount"
ZERO_AMOUNT = "zero-amount"
UNMARKED_NEW_CONTRACT = "unmarked-new-contract"


def _positions(events: Iterable[MaybeEvent], side: str) -> list[tuple[str, Event]]:
    return [(f"{side}[{i}]", e) for i, e in enumerate(events) if e is not None]


def lint(op: Operation) -> list[LintWarning]:
    """Diagnostics for constructs whose meaning is doubtful. Never raises."""
    out: list[LintWarning] = []
    before = _positions(op.before, "before")
    after = _positions(op.after, "after")

    for where, e in before + after:
        if e.kind is TransferKind.UNSPECIFIED:
            out.append(LintWarning(KIND_UNSPECIFIED, where, "direction/kind unspecified: delivery or payment?"))
        if e.amount is None:
            out.append(LintWarning(NO_AMOUNT, where, "transfer has no amount"))
        elif e.amount.q == 0:
            out.append(LintWarning(ZERO_AMOUNT, where, f"transfer of zero ({e.amount})"))

    before_econs = {e.econ for _, e in before}
    replacement_targets = {new for _, new in op.replaces}
    for where, e in after:
        for bwhere, b in before:
            if e.same_transfer(b):
                out.append(LintWarning(NO_CHANGE, where, f"no-change event: repeats {bwhere} unchanged"))
                break
        if (
            e.econ is not None
            and e.kind is not TransferKind.PAYMENT
            and not e.new_contract
            and e.econ not in before_econs
            and e.econ not in replacement_targets
        ):
            out.append(
                LintWarning(UNMARKED_NEW_CONTRACT, where, f"economics {e.econ} appears only after but is not marked new")
            )
    return out
