"""Contract-lifecycle kernel: lineage-tracked values, an event/operation
state-transition ledger, logical clocks and a replicated-store simulator."""

from .clocks import LamportClock, Ordering, VectorClock, lamport_recv, lamport_tick, vc_compare, vc_merge, vc_tick
from .contract_state import ContractState, lookup, update
from .events import (
    Amount,
    Event,
    LintWarning,
    Operation,
    TransferKind,
    amend,
    lint,
    new_op,
    partial_assign,
    split,
    tear_up,
    terminate_for_cash,
)
from .ledger import (
    CaptureMode,
    ContractRecord,
    Ledger,
    Reason,
    Status,
    ValidationError,
    ValidationReport,
    apply,
    derive_econ_id,
    lineage_of,
    replay,
    validate,
)
from .provenance import (
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

__all__ = [name for name in dir() if not name.startswith("_")]
