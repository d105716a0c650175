import decimal
import json
import random
from collections import Counter
from decimal import Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cdmkernel import provenance as pv
from cdmkernel.provenance import (
    HISTORY,
    PLAIN,
    AugValue,
    CaptureConfig,
    CounterClock,
    Derived,
    Orig,
    add3,
    aplus,
    apply_n,
    observe,
    render,
    replace,
    trace,
)


def worked_example(cfg=PLAIN, names=("ob3", "ob2", "ob1")):
    a, b, c = names
    return aplus(observe(3, a, cfg), aplus(observe(4, b, cfg), observe(5, c, cfg), cfg), cfg)


class TestObserve:
    def test_plain(self):
        assert observe(5, "ob1") == AugValue(Decimal(5), Orig("ob1"))
        assert render(observe(5, "ob1")) == 'Aug 5 (Orig "ob1")'

    def test_history(self):
        av = observe(5, "datum1", HISTORY)
        assert av.prov == Orig("datum1", Decimal(5))
        assert render(av) == 'Aug1 5 (Orig1 "datum1" 5)'

    def test_zero(self):
        assert observe(0, "zero") == AugValue(Decimal(0), Orig("zero"))

    def test_empty_label_rejected(self):
        with pytest.raises(ValueError):
            observe(1, "")

    def test_float_goes_through_repr(self):
        assert observe(0.1, "f").value == Decimal("0.1")

    def test_timestamps_need_clock(self):
        with pytest.raises(ValueError):
            CaptureConfig(record_timestamps=True)


class TestReplace:
    def test_plain(self):
        out = replace(observe(3, "a"), 7)
        assert out == AugValue(Decimal(7), Derived("replace", (Orig("a"),)))

    def test_same_value_still_grows_provenance(self):
        av = observe(3, "a")
        out = replace(av, av.value)
        assert out.value == av.value
        assert trace(out).node_count == 2

    def test_history_variant(self):
        out = replace(observe(3, "a", HISTORY), 7, HISTORY)
        assert render(out) == 'Aug1 7 (Derived1 "replace1" 7 [Orig1 "a" 3])'


class TestAplus:
    def test_worked_example(self):
        expected = 'Aug 12 (Derived "aplus" [Orig "ob3", Derived "aplus" [Orig "ob2", Orig "ob1"]])'
        assert render(worked_example()) == expected

    def test_history_worked_example(self):
        out = worked_example(HISTORY, ("datum3", "datum2", "datum1"))
        assert out.prov.snapshot == 12
        assert out.prov.inputs[1].snapshot == 9
        assert [n.snapshot for n in pv.walk(out.prov) if isinstance(n, Orig)] == [3, 4, 5]
        assert render(out) == (
            'Aug1 12 (Derived1 "aplus1" 12 [Orig1 "datum3" 3, '
            'Derived1 "aplus1" 9 [Orig1 "datum2" 4, Orig1 "datum1" 5]])'
        )

    def test_additive_identity(self):
        x = observe(Decimal("4.25"), "x")
        assert aplus(observe(0, "z"), x).value == x.value

    def test_overflow(self):
        big = observe(Decimal("9e999999"), "big")
        with pytest.raises(OverflowError):
            aplus(big, big)

    def test_input_order(self):
        out = aplus(observe(1, "left"), observe(2, "right"))
        assert [n.label for n in out.prov.inputs] == ["left", "right"]


class TestApplyN:
    def test_add3_has_three_subtrees(self):
        out = add3(observe(1, "p1"), observe(2, "p2"), observe(3, "p3"))
        assert out.value == 6
        assert out.prov.label == "add3"
        assert len(out.prov.inputs) == 3

    def test_unary(self):
        out = apply_n("negate", lambda v: -v, [observe(5, "a")])
        assert out == AugValue(Decimal(-5), Derived("negate", (Orig("a"),)))

    def test_empty_args_rejected(self):
        with pytest.raises(ValueError):
            apply_n("f", lambda: 0, [])

    def test_derived_node_needs_inputs(self):
        with pytest.raises(ValueError):
            Derived("f", ())

    def test_matches_aplus_on_random_pairs(self):
        rng = random.Random(7)
        for i in range(100):
            a = observe(Decimal(rng.randint(-10**6, 10**6)) / 100, f"a{i}")
            b = observe(Decimal(rng.randint(-10**6, 10**6)) / 100, f"b{i}")
            assert apply_n("aplus", lambda x, y: x + y, [a, b]) == aplus(a, b)


class TestTrace:
    def test_worked_example(self):
        # Derived(Orig, Derived(Orig, Orig)): 5 nodes, 3 levels
        r = trace(worked_example())
        assert r.leaves == ("ob3", "ob2", "ob1")
        assert r.depth == 3
        assert r.node_count == 5
        assert r.function_labels == ("aplus", "aplus")

    def test_single_leaf(self):
        r = trace(observe(1, "x"))
        assert (r.leaves, r.depth, r.node_count) == (("x",), 1, 1)

    def test_add3(self):
        r = trace(add3(observe(1, "a"), observe(2, "b"), observe(3, "c")))
        assert (r.depth, r.node_count) == (2, 4)


class TestTimestamps:
    def test_render_and_monotone(self):
        cfg = CaptureConfig(record_timestamps=True, clock=CounterClock())
        out = aplus(observe(1, "a", cfg), observe(2, "b", cfg), cfg)
        assert render(out) == 'Aug2 3 (Derived2 3 "aplus" [Orig2 1 "a", Orig2 2 "b"])'
        assert pv.check_capture(out.prov, cfg)

    def test_history_and_timestamps(self):
        cfg = CaptureConfig(record_history=True, record_timestamps=True, clock=CounterClock())
        out = replace(observe(1, "a", cfg), 2, cfg)
        assert render(out) == 'Aug2 2 (Derived2 2 "replace1" 2 [Orig2 1 "a" 1])'


class TestSerialization:
    def test_json_shape(self):
        doc = pv.to_json(replace(observe(3, "a", HISTORY), 7, HISTORY))
        assert doc == {
            "value": "7",
            "prov": {
                "kind": "derived",
                "label": "replace1",
                "snapshot": "7",
                "inputs": [{"kind": "orig", "label": "a", "snapshot": "3"}],
            },
        }

    def test_json_round_trip(self):
        av = worked_example(CaptureConfig(True, True, CounterClock()))
        assert pv.from_json(json.loads(json.dumps(pv.to_json(av)))) == av

    def test_dot(self):
        dot = pv.to_dot(worked_example().prov)
        assert dot.startswith("digraph lineage {")
        assert dot.count("->") == 4
        assert dot.count("shape=box") == 3


# -- properties -------------------------------------------------------------------

exprs = st.recursive(
    st.tuples(st.just("obs"), st.integers(-1000, 1000), st.text("abcxyz", min_size=1, max_size=3)),
    lambda children: st.one_of(
        st.tuples(st.just("replace"), children, st.integers(-1000, 1000)),
        st.tuples(st.just("aplus"), children, children),
        st.tuples(st.just("sum"), st.lists(children, min_size=1, max_size=4)),
    ),
    max_leaves=12,
)


def evaluate(expr, cfg):
    """Evaluate an expression; also return the observed labels and the plain value."""
    tag = expr[0]
    if tag == "obs":
        return observe(expr[1], expr[2], cfg), [expr[2]], Decimal(expr[1])
    if tag == "replace":
        av, labels, _ = evaluate(expr[1], cfg)
        return replace(av, expr[2], cfg), labels, Decimal(expr[2])
    if tag == "aplus":
        a, la, va = evaluate(expr[1], cfg)
        b, lb, vb = evaluate(expr[2], cfg)
        return aplus(a, b, cfg), la + lb, va + vb
    parts = [evaluate(e, cfg) for e in expr[1]]
    av = apply_n("sum", lambda *xs: sum(xs, Decimal(0)), [p[0] for p in parts], cfg)
    return av, [l for p in parts for l in p[1]], sum((p[2] for p in parts), Decimal(0))


@given(exprs)
def test_leaf_conservation_and_value_separation(expr):
    av, labels, plain = evaluate(expr, PLAIN)
    assert Counter(trace(av).leaves) == Counter(labels)
    assert av.value == plain


@given(exprs)
def test_history_coherence(expr):
    av, _, _ = evaluate(expr, HISTORY)
    assert av.prov.snapshot == av.value
    assert pv.check_capture(av.prov, HISTORY)
    for node in pv.walk(av.prov):
        if isinstance(node, Derived) and node.label in ("aplus1", "sum"):
            assert node.snapshot == sum((c.snapshot for c in node.inputs), Decimal(0))


@given(exprs)
def test_temporal_coherence(expr):
    cfg = CaptureConfig(record_timestamps=True, clock=CounterClock())
    av, _, _ = evaluate(expr, cfg)
    assert pv.check_capture(av.prov, cfg)
    for node in pv.walk(av.prov):
        if isinstance(node, Derived):
            assert node.ts >= max(c.ts for c in node.inputs)


def test_overflow_in_apply_n():
    with pytest.raises(OverflowError):
        apply_n("double", lambda v: v * 10, [observe(Decimal("9e999999"), "big")])


def test_decimal_context_untouched():
    assert decimal.getcontext().traps[decimal.Overflow]
