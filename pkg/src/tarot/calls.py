"""Traced backend invocation and ordered fan-out.

Every backend call the pipeline makes goes through traced_call (or is
recorded with record_call after a fan-out), so a trace always holds
exactly one record per call with the argument and response digests.
Fan-outs gather results first and record them in submission order, which
keeps traces deterministic under thread scheduling.
"""
from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence

from tarot.backends.types import Criterion, MaskCandidate, ParsedExpression
from tarot.canonical import args_digest, canonical_value, response_digest
from tarot.fmap import FeatureMap
from tarot.trace import TraceRecorder


def to_canonical_response(value):
    """Convert a typed backend response into canonicalizable plain data."""
    if isinstance(value, ParsedExpression):
        return {
            "target": value.target_name,
            "refers": list(value.refer_names),
            "is_explicit": value.is_explicit,
            "is_multi_object": value.is_multi_object,
            "adjectives": list(value.adjectives),
            "confusion_notes": value.confusion_notes,
        }
    if isinstance(value, Criterion):
        return {"relation_text": value.relation_text, "refer": value.refer_name}
    if isinstance(value, MaskCandidate):
        return {"mask": value.mask, "box": value.box, "score": value.score}
    if isinstance(value, FeatureMap):
        digest = hashlib.sha256(value.vectors.tobytes()).hexdigest()[:16]
        return {"grid": [value.grid_h, value.grid_w, value.dim], "digest": digest}
    if isinstance(value, (list, tuple)):
        return [to_canonical_response(v) for v in value]
    return value


def call_digests(op: str, digest_args: dict, result) -> tuple:
    return (args_digest(op, digest_args),
            response_digest(to_canonical_response(result)))


def record_call(recorder: TraceRecorder, phase: str, op: str, digest_args: dict,
                result, **extra) -> None:
    args_d, resp_d = call_digests(op, digest_args, result)
    recorder.backend_call(phase, op, args_d, resp_d, **extra)


def traced_call(recorder: TraceRecorder, phase: str, op: str, digest_args: dict,
                invoke: Callable, **extra):
    result = invoke()
    record_call(recorder, phase, op, digest_args, result, **extra)
    return result


def gather_ordered(invokes: Sequence[Callable], workers: int) -> List:
    """Run callables (possibly concurrently) and return results in input order."""
    if workers <= 1 or len(invokes) <= 1:
        return [fn() for fn in invokes]
    with ThreadPoolExecutor(max_workers=min(workers, len(invokes))) as pool:
        futures = [pool.submit(fn) for fn in invokes]
        return [f.result() for f in futures]


__all__ = [
    "call_digests",
    "canonical_value",
    "gather_ordered",
    "record_call",
    "to_canonical_response",
    "traced_call",
]
