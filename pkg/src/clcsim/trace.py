"""Run traces: an ordered stream of typed records plus a header.

A trace is the single source of truth for every checker: it contains
the resolved config, every mined block (withheld ones included), every
message send and per-recipient delivery, every chain adoption, vote,
period start, halt and checkpoint mark. Serialization is line-delimited
JSON with a schema-versioned header line; byte-identical reruns of the
same scenario+seed are part of the contract, so records are written
with sorted keys and no whitespace.
"""

from __future__ import annotations

import json
from typing import Any, Dict, Iterable, List, Optional, Tuple

SCHEMA = "clcsim-trace/1"

# kind -> names of the fields packed in the data tuple (documentation +
# replay sanity checks; the in-memory form stays a flat tuple for speed)
RECORD_FIELDS: Dict[str, Tuple[str, ...]] = {
    "block": ("block", "parent", "height", "miner", "adversarial", "withheld"),
    "opportunity": ("kind", "miner"),  # miner -1 when dropped (nobody online)
    "send": ("msg", "mkind", "sender", "payload"),
    "delivery": ("msg", "recipient", "sent"),
    "online": (),
    "offline": (),
    "adopt": ("tip", "length", "truncated"),
    "confirm": ("fin_tip", "ada_tip"),
    "ckpt": ("iteration", "block", "period", "value"),
    "period": ("iteration", "period", "st", "entry_tip"),
    "vote": ("vkind", "iteration", "period", "value"),
    "proposal": ("iteration", "period", "value"),
    "halt": ("iteration", "period", "value", "own_clock"),
    "iterstart": ("iteration",),
    "event": ("etype", "detail"),
    "anomaly": ("what", "detail"),
}

Record = Tuple[float, int, str, int, tuple]  # (time, seq, kind, node, data)


class Trace:
    def __init__(self, header: Dict[str, Any]):
        header = dict(header)
        header.setdefault("schema", SCHEMA)
        self.header = header
        self.records: List[Record] = []
        self._seq = 0
        self._by_kind: Optional[Dict[str, List[Record]]] = None

    def emit(self, time: float, kind: str, node: int, data: tuple) -> None:
        self.records.append((time, self._seq, kind, node, data))
        self._seq += 1
        self._by_kind = None

    def by_kind(self, kind: str) -> List[Record]:
        if self._by_kind is None:
            grouped: Dict[str, List[Record]] = {}
            for rec in self.records:
                grouped.setdefault(rec[2], []).append(rec)
            self._by_kind = grouped
        return self._by_kind.get(kind, [])

    def config(self) -> Dict[str, Any]:
        return self.header.get("config", {})

    # -- serialization ----------------------------------------------------

    def write(self, path: str) -> None:
        with open(path, "w") as f:
            for line in self.iter_lines():
                f.write(line)
                f.write("\n")

    def iter_lines(self) -> Iterable[str]:
        dump = json.dumps
        yield dump(self.header, sort_keys=True, separators=(",", ":"))
        for t, q, k, n, d in self.records:
            yield dump(
                {"t": t, "q": q, "k": k, "n": n, "d": _jsonable(d)},
                sort_keys=True,
                separators=(",", ":"),
            )

    def to_bytes(self) -> bytes:
        return ("\n".join(self.iter_lines()) + "\n").encode()

    @classmethod
    def read(cls, path: str) -> "Trace":
        with open(path) as f:
            header = json.loads(f.readline())
            if header.get("schema") != SCHEMA:
                raise ValueError(f"unsupported trace schema {header.get('schema')!r}")
            trace = cls(header)
            for line in f:
                if not line.strip():
                    continue
                row = json.loads(line)
                if row["k"] not in RECORD_FIELDS:
                    raise ValueError(f"unknown record kind {row['k']!r}")
                trace.records.append(
                    (row["t"], row["q"], row["k"], row["n"], _tupled(row["d"]))
                )
            trace._seq = len(trace.records)
            return trace


def _jsonable(value):
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    return value


def _tupled(value):
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    return value
