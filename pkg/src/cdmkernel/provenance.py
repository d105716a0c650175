"""Augmented values: numbers that carry the tree of how they were derived.

A value is either observed (an ``Orig`` leaf naming its source) or derived
by a labelled function from other augmented values (a ``Derived`` node whose
inputs are the provenance trees of the arguments, in call order).

Capture is configured once per computation through :class:`CaptureConfig`:

* ``record_history`` stores a snapshot of the value at every node.
* ``record_timestamps`` stamps every node with a token from a clock source.

Example::

    >>> cfg = CaptureConfig()
    >>> x = aplus(observe(3, "ob3", cfg),
    ...           aplus(observe(4, "ob2", cfg), observe(5, "ob1", cfg), cfg), cfg)
    >>> render(x)
    'Aug 12 (Derived "aplus" [Orig "ob3", Derived "aplus" [Orig "ob2", Orig "ob1"]])'
"""

from __future__ import annotations

import decimal
import itertools
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Callable, Iterator, Sequence, Union

Number = Union[Decimal, int, str]
Timestamp = Union[int, str]


def to_decimal(x: Any) -> Decimal:
    """Coerce ints, strings and floats to an exact ``Decimal``.

    Floats go through ``repr`` so ``0.1`` becomes ``Decimal("0.1")`` rather
    than its binary expansion.
    """
    if isinstance(x, Decimal):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, float):
        return Decimal(repr(x))
    if isinstance(x, (int, str)):
        return Decimal(x)
    raise TypeError(f"cannot interpret {x!r} as a number")


def format_decimal(d: Decimal) -> str:
    # positional notation, never exponent form
    return format(d, "f")


class CounterClock:
    """Monotone integer clock source: 1, 2, 3, ..."""

    def __init__(self, start: int = 1):
        self._counter = itertools.count(start)

    def __call__(self) -> int:
        return next(self._counter)


@dataclass(frozen=True)
class CaptureConfig:
    record_history: bool = False
    record_timestamps: bool = False
    clock: Callable[[], Timestamp] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.record_timestamps and self.clock is None:
            raise ValueError("record_timestamps requires a clock source")

    def label(self, base: str) -> str:
        """Built-in function labels gain a ``1`` suffix in history mode."""
        return base + "1" if self.record_history else base

    def _snapshot(self, value: Decimal) -> Decimal | None:
        return value if self.record_history else None

    def _stamp(self) -> Timestamp | None:
        return self.clock() if self.record_timestamps else None


PLAIN = CaptureConfig()
HISTORY = CaptureConfig(record_history=True)


@dataclass(frozen=True)
class Orig:
    """An original observation."""

    label: str
    snapshot: Decimal | None = None
    ts: Timestamp | None = None


@dataclass(frozen=True)
class Derived:
    """The result of applying the function ``label`` to ``inputs``."""

    label: str
    inputs: tuple[ProvenanceNode, ...]
    snapshot: Decimal | None = None
    ts: Timestamp | None = None

    def __post_init__(self):
        if not self.inputs:
            raise ValueError("a derived node needs at least one input")
        if not isinstance(self.inputs, tuple):
            object.__setattr__(self, "inputs", tuple(self.inputs))


ProvenanceNode = Union[Orig, Derived]


@dataclass(frozen=True)
class AugValue:
    value: Decimal
    prov: ProvenanceNode

    def __post_init__(self):
        if not isinstance(self.value, Decimal):
            object.__setattr__(self, "value", to_decimal(self.value))


def observe(value: Number, source: str, cfg: CaptureConfig = PLAIN) -> AugValue:
    if not source:
        raise ValueError("observation source label must be non-empty")
    v = to_decimal(value)
    return AugValue(v, Orig(source, cfg._snapshot(v), cfg._stamp()))


def _derive(label: str, value: Decimal, inputs: Sequence[AugValue], cfg: CaptureConfig) -> AugValue:
    node = Derived(label, tuple(a.prov for a in inputs), cfg._snapshot(value), cfg._stamp())
    return AugValue(value, node)


def replace(av: AugValue, y: Number, cfg: CaptureConfig = PLAIN) -> AugValue:
    """New value ``y`` whose provenance records that it replaced ``av``."""
    return _derive(cfg.label("replace"), to_decimal(y), [av], cfg)


def _checked_sum(values: Sequence[Decimal]) -> Decimal:
    try:
        return sum(values, Decimal(0))
    except decimal.Overflow as exc:
        raise OverflowError("augmented arithmetic overflowed") from exc


def aplus(a: AugValue, b: AugValue, cfg: CaptureConfig = PLAIN) -> AugValue:
    return _derive(cfg.label("aplus"), _checked_sum([a.value, b.value]), [a, b], cfg)


def areplace(old: AugValue, new: AugValue, cfg: CaptureConfig = PLAIN) -> AugValue:
    """Take ``new``'s value; provenance lists the replaced tree then the new one."""
    return _derive(cfg.label("areplace"), new.value, [old, new], cfg)


def apply_n(
    func_label: str,
    fn: Callable[..., Number],
    args: Sequence[AugValue],
    cfg: CaptureConfig = PLAIN,
) -> AugValue:
    """Apply an n-ary function, recording one node with one input per argument.

    ``func_label`` is used verbatim (no history suffix).
    """
    if not args:
        raise ValueError("apply_n needs at least one argument")
    try:
        result = to_decimal(fn(*[a.value for a in args]))
    except decimal.Overflow as exc:
        raise OverflowError(f"{func_label} overflowed") from exc
    return _derive(func_label, result, args, cfg)


def add3(x: AugValue, y: AugValue, z: AugValue, cfg: CaptureConfig = PLAIN) -> AugValue:
    return apply_n("add3", lambda a, b, c: a + b + c, [x, y, z], cfg)


# -- tree walking -----------------------------------------------------------


def walk(node: ProvenanceNode) -> Iterator[ProvenanceNode]:
    """Pre-order traversal."""
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        if isinstance(n, Derived):
            stack.extend(reversed(n.inputs))


def leaves(node: ProvenanceNode) -> list[str]:
    return [n.label for n in walk(node) if isinstance(n, Orig)]


def depth(node: ProvenanceNode) -> int:
    if isinstance(node, Orig):
        return 1
    return 1 + max(depth(c) for c in node.inputs)


def contains(tree: ProvenanceNode, sub: ProvenanceNode) -> bool:
    return any(n == sub for n in walk(tree))


@dataclass(frozen=True)
class LineageReport:
    leaves: tuple[str, ...]
    depth: int
    node_count: int
    function_labels: tuple[str, ...]


def trace(av: AugValue | ProvenanceNode) -> LineageReport:
    """Summarise a provenance tree.

    ``leaves`` are source labels left to right; ``function_labels`` are the
    labels of derived nodes in pre-order.
    """
    node = av.prov if isinstance(av, AugValue) else av
    nodes = list(walk(node))
    return LineageReport(
        leaves=tuple(n.label for n in nodes if isinstance(n, Orig)),
        depth=depth(node),
        node_count=len(nodes),
        function_labels=tuple(n.label for n in nodes if isinstance(n, Derived)),
    )


def check_capture(node: ProvenanceNode, cfg: CaptureConfig) -> bool:
    """True iff every node's optional fields match what ``cfg`` captures."""
    for n in walk(node):
        if (n.snapshot is not None) != cfg.record_history:
            return False
        if (n.ts is not None) != cfg.record_timestamps:
            return False
    return True


# -- rendering --------------------------------------------------------------


def _suffix(node: ProvenanceNode) -> str:
    if node.ts is not None:
        return "2"
    if node.snapshot is not None:
        return "1"
    return ""


def render_node(node: ProvenanceNode) -> str:
    """Text form of a tree: ``Orig "a"``, ``Derived1 "aplus1" 9 [...]``, ``Orig2 7 "a"``."""
    parts = [("Orig" if isinstance(node, Orig) else "Derived") + _suffix(node)]
    if node.ts is not None:
        parts.append(str(node.ts))
    parts.append(f'"{node.label}"')
    if node.snapshot is not None:
        parts.append(format_decimal(node.snapshot))
    if isinstance(node, Derived):
        parts.append("[" + ", ".join(render_node(c) for c in node.inputs) + "]")
    return " ".join(parts)


def render(av: AugValue) -> str:
    return f"Aug{_suffix(av.prov)} {format_decimal(av.value)} ({render_node(av.prov)})"


def node_to_json(node: ProvenanceNode) -> dict[str, Any]:
    out: dict[str, Any] = {
        "kind": "orig" if isinstance(node, Orig) else "derived",
        "label": node.label,
    }
    if node.snapshot is not None:
        out["snapshot"] = format_decimal(node.snapshot)
    if node.ts is not None:
        out["ts"] = node.ts
    if isinstance(node, Derived):
        out["inputs"] = [node_to_json(c) for c in node.inputs]
    return out


def node_from_json(data: dict[str, Any]) -> ProvenanceNode:
    snap = data.get("snapshot")
    snapshot = to_decimal(snap) if snap is not None else None
    kind = data["kind"]
    if kind == "orig":
        return Orig(data["label"], snapshot, data.get("ts"))
    if kind == "derived":
        inputs = tuple(node_from_json(c) for c in data["inputs"])
        return Derived(data["label"], inputs, snapshot, data.get("ts"))
    raise ValueError(f"unknown provenance kind {kind!r}")


def to_json(av: AugValue) -> dict[str, Any]:
    return {"value": format_decimal(av.value), "prov": node_to_json(av.prov)}


def from_json(data: dict[str, Any]) -> AugValue:
    return AugValue(to_decimal(data["value"]), node_from_json(data["prov"]))


def to_dot(node: ProvenanceNode, name: str = "lineage") -> str:
    """Graphviz description; edges point from inputs to the node they feed."""
    lines = [f"digraph {name} {{", "  rankdir=BT;"]
    counter = itertools.count()

    def emit(n: ProvenanceNode) -> str:
        nid = f"n{next(counter)}"
        text = n.label.replace('"', '\\"')
        if n.snapshot is not None:
            text += f"\\n{format_decimal(n.snapshot)}"
        if n.ts is not None:
            text += f"\\n@{n.ts}"
        shape = "box" if isinstance(n, Orig) else "ellipse"
        lines.append(f'  {nid} [label="{text}", shape={shape}];')
        if isinstance(n, Derived):
            for child in n.inputs:
                lines.append(f"  {emit(child)} -> {nid};")
        return nid

    emit(node)
    lines.append("}")
    return "\n".join(lines) + "\n"
