"""Pipeline traces: JSON-lines, one record per event.

Records carry a monotone sequence number, a phase tag, an event name, and
event data. Wall-clock fields are confined to the keys stripped by
``semantic_events`` so two runs of the same work compare equal.
"""
from __future__ import annotations

import json
import time
from typing import Optional

from tarot.errors import InputError

VOLATILE_KEYS = {"ts", "wall_ms"}

PHASE_ALIASES = {"eri": "interpret", "msr": "refine"}


class TraceRecorder:
    """Collects events in memory and optionally appends them to a file."""

    def __init__(self, path=None):
        self.path = str(path) if path is not None else None
        self.events = []
        self._fh = open(path, "w", encoding="utf-8") if path is not None else None

    def emit(self, phase: str, event: str, **data) -> dict:
        record = {
            "seq": len(self.events),
            "ts": time.time(),
            "phase": phase,
            "event": event,
            **data,
        }
        self.events.append(record)
        if self._fh is not None:
            self._fh.write(json.dumps(record, sort_keys=True) + "\n")
            self._fh.flush()
        return record

    def warning(self, phase: str, event: str, **data) -> dict:
        return self.emit(phase, event, warning=True, **data)

    def backend_call(self, phase: str, op: str, args_digest: str,
                     response_digest: str, **extra) -> dict:
        return self.emit(phase, "backend_call", op=op, args_digest=args_digest,
                         response_digest=response_digest, **extra)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()
        return False


def load_trace(path) -> list:
    events = []
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    events.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise InputError(f"{path}:{lineno}: bad trace record: {exc}") from exc
    except OSError as exc:
        raise InputError(f"cannot read trace {path}: {exc}") from exc
    return events


def _strip(record: dict) -> dict:
    return {k: v for k, v in record.items() if k not in VOLATILE_KEYS}


def semantic_events(events: list) -> list:
    return [_strip(e) for e in events]


def compare_traces(a: list, b: list) -> Optional[dict]:
    """First semantic divergence between two event lists, or None if equal.

    Returns {"index", "left", "right"} where the missing side is None when
    one trace is a prefix of the other.
    """
    sa = semantic_events(a)
    sb = semantic_events(b)
    for i in range(max(len(sa), len(sb))):
        left = sa[i] if i < len(sa) else None
        right = sb[i] if i < len(sb) else None
        if left != right:
            return {"index": i, "left": left, "right": right}
    return None
