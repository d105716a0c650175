"""Contract state as an ordered list of ``(key, AugValue)`` pairs.

Updating an existing key keeps its position and wraps the old and new
provenance in an ``areplace`` node; a new key is appended.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterator

from .provenance import PLAIN, AugValue, CaptureConfig, areplace, from_json, to_json


@dataclass(frozen=True)
class ContractState:
    entries: tuple[tuple[str, AugValue], ...] = ()

    def __post_init__(self):
        keys = [k for k, _ in self.entries]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate keys in contract state")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple[str, AugValue]]:
        return iter(self.entries)

    def keys(self) -> list[str]:
        return [k for k, _ in self.entries]

    def lookup(self, key: str) -> AugValue | None:
        return lookup(self, key)

    def update(self, key: str, v: AugValue, cfg: CaptureConfig = PLAIN) -> ContractState:
        return update(self, key, v, cfg)

    def values(self) -> dict[str, Any]:
        """Project away provenance."""
        return {k: av.value for k, av in self.entries}


EMPTY = ContractState()


def lookup(st: ContractState, key: str) -> AugValue | None:
    for k, av in st.entries:
        if k == key:
            return av
    return None


def update(st: ContractState, key: str, v: AugValue, cfg: CaptureConfig = PLAIN) -> ContractState:
    entries = list(st.entries)
    for i, (k, av) in enumerate(entries):
        if k == key:
            entries[i] = (k, areplace(av, v, cfg))
            return ContractState(tuple(entries))
    entries.append((key, v))
    return ContractState(tuple(entries))


def to_json_list(st: ContractState) -> list[dict[str, Any]]:
    return [{"key": k, "value": to_json(av)} for k, av in st.entries]


def from_json_list(data: list[dict[str, Any]]) -> ContractState:
    return ContractState(tuple((d["key"], from_json(d["value"])) for d in data))
