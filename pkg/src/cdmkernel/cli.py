"""Command-line entry point.

Exit status: 0 on success, 1 on a validation failure (or divergence, or an
unknown economics id), 2 on malformed input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence, TextIO

from . import provenance
from .events import Operation, lint
from .ledger import CaptureMode, Ledger, LogEntry, UnknownEconomics, ValidationError, apply, operations_from_log
from .replication import ScenarioError, scenario_from_json

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_MALFORMED = 2


class MalformedInput(Exception):
    pass


def _load_json(path: str) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def _load_ndjson(path: str) -> list[Any]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise MalformedInput(f"{path}:{lineno}:{exc.colno}: {exc.msg}") from exc
    return out


def _dump(obj: Any, out: TextIO) -> None:
    out.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_replay(args: argparse.Namespace, out: TextIO, err: TextIO) -> int:
    try:
        entries = [LogEntry.from_json(d) for d in _load_ndjson(args.log)]
        ops = operations_from_log(entries)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInput(f"{args.log}: bad log entry: {exc}") from exc
    ledger = Ledger(
        capture=CaptureMode(args.capture),
        record_history=args.history,
        record_timestamps=args.timestamps,
    )
    status = EXIT_OK
    for op in ops:
        try:
            ledger = apply(ledger, op)
        except ValidationError as exc:
            err.write(f"operation {op.op_id} ({op.name}) rejected:\n{exc.report}\n")
            if not args.skip_invalid:
                status = EXIT_INVALID
                break
    snapshot = ledger.to_json()
    if args.snapshot_out:
        Path(args.snapshot_out).write_text(json.dumps(snapshot, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    active = ledger.active()
    out.write(f"{len(ops)} operations, {len(ledger.event_log)} events, {len(active)} active contracts\n")
    for c in active:
        out.write(f"  {c.econ_id}: {c.quantity} parties={list(c.parties)}\n")
    return status


def _load_ledger(path: str) -> Ledger:
    data = _load_json(path)
    try:
        return Ledger.from_json(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInput(f"{path}: not a ledger snapshot: {exc}") from exc


def cmd_state(args: argparse.Namespace, out: TextIO, err: TextIO) -> int:
    ledger = _load_ledger(args.snapshot)
    if args.econ:
        _dump(ledger.contract(args.econ).to_json(), out)
    else:
        _dump([c.to_json() for c in ledger.contracts.values()], out)
    return EXIT_OK


def cmd_lineage(args: argparse.Namespace, out: TextIO, err: TextIO) -> int:
    data = _load_json(args.file)
    if isinstance(data, dict) and "prov" in data and "value" in data:
        av = provenance.from_json(data)
        node = av.prov
        text = provenance.render(av)
        doc = provenance.to_json(av)
    else:
        if not args.econ:
            raise MalformedInput(f"{args.file} is a ledger snapshot; an economics id is required")
        try:
            ledger = Ledger.from_json(data)
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedInput(f"{args.file}: not a ledger snapshot or augmented value: {exc}") from exc
        node = ledger.lineage_of(args.econ)
        text = provenance.render_node(node)
        doc = provenance.node_to_json(node)
    if args.format == "text":
        out.write(text + "\n")
    elif args.format == "json":
        _dump(doc, out)
    else:
        out.write(provenance.to_dot(node))
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, out: TextIO, err: TextIO) -> int:
    data = _load_json(args.scenario)
    try:
        scenario = scenario_from_json(data, seed=args.seed)
    except ScenarioError as exc:
        raise MalformedInput(str(exc)) from exc
    report = scenario.simulation().run()
    out.write(report.format() + "\n")
    if args.report_out:
        Path(args.report_out).write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
    return EXIT_OK if report.converged else EXIT_INVALID


def cmd_lint(args: argparse.Namespace, out: TextIO, err: TextIO) -> int:
    data = _load_json(args.operation_file)
    docs = data if isinstance(data, list) else [data]
    try:
        ops = [Operation.from_json(d) for d in docs]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInput(f"{args.operation_file}: bad operation: {exc}") from exc
    for op in ops:
        warnings = lint(op)
        out.write(f"operation {op.op_id} ({op.name}): {len(warnings)} warning(s)\n")
        for w in warnings:
            out.write(f"  {w}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdmkernel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("replay", help="fold validate+apply over an NDJSON event log")
    p.add_argument("log")
    p.add_argument("--snapshot-out")
    p.add_argument("--skip-invalid", action="store_true", help="skip rejected operations instead of stopping")
    p.add_argument("--capture", choices=[m.value for m in CaptureMode], default=CaptureMode.PER_TRANSITION.value)
    p.add_argument("--history", action="store_true", help="record value snapshots in provenance")
    p.add_argument("--timestamps", action="store_true", help="stamp provenance nodes with lamport time")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("state", help="print contract records from a ledger snapshot")
    p.add_argument("snapshot")
    p.add_argument("econ", nargs="?")
    p.set_defaults(func=cmd_state)

    p = sub.add_parser("lineage", help="print a provenance tree")
    p.add_argument("file", help="ledger snapshot or augmented-value JSON")
    p.add_argument("econ", nargs="?")
    p.add_argument("--format", choices=["text", "json", "dot"], default="text")
    p.set_defaults(func=cmd_lineage)

    p = sub.add_parser("simulate", help="run a replication scenario to quiescence")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, help="overrides the scenario's seed")
    p.add_argument("--report-out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("lint", help="print diagnostics for operations in a JSON file")
    p.add_argument("operation_file")
    p.set_defaults(func=cmd_lint)
    return parser


def main(argv: Sequence[str] | None = None, out: TextIO | None = None, err: TextIO | None = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out, err)
    except MalformedInput as exc:
        err.write(f"malformed input: {exc}\n")
        return EXIT_MALFORMED
    except UnknownEconomics as exc:
        err.write(f"UnknownEconomics: {exc.args[0]}\n")
        return EXIT_INVALID
    except OSError as exc:
        err.write(f"{exc}\n")
        return EXIT_MALFORMED


if __name__ == "__main__":
    sys.exit(main())
