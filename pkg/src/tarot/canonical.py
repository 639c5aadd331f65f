"""Canonical serialization of backend-call arguments and responses.

Scripted scenario lookup, trace records, and the remote wire client all
need the same normalization so a call is identified by the same digest
everywhere: texts are case/whitespace-folded, masks go to their RLE line,
boxes and points to plain lists, images to their content digest.
"""
from __future__ import annotations

import hashlib
import json
import re

from tarot.geometry import BBox, BinaryMask, PixelPoint
from tarot.images import ImageRef
from tarot.maskio import encode_rle

_WS = re.compile(r"\s+")


class ImageDigest:
    """Stands in for an ImageRef when only the content digest is known."""

    __slots__ = ("digest",)

    def __init__(self, digest: str):
        self.digest = digest


def normalize_text(text: str) -> str:
    return _WS.sub(" ", text.strip()).lower()


def canonical_value(value):
    if isinstance(value, (ImageRef, ImageDigest)):
        return {"$image": value.digest}
    if isinstance(value, BinaryMask):
        return {"$mask": encode_rle(value)}
    if isinstance(value, BBox):
        return value.as_list()
    if isinstance(value, PixelPoint):
        return [value.x, value.y, value.polarity]
    if isinstance(value, str):
        return normalize_text(value)
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, float):
        return round(value, 6)
    if isinstance(value, int):
        return value
    if isinstance(value, (list, tuple)):
        return [canonical_value(v) for v in value]
    if isinstance(value, dict):
        return {str(k): canonical_value(v) for k, v in sorted(value.items())}
    if hasattr(value, "bits"):  # reasoning option vectors
        return value.bits()
    raise TypeError(f"cannot canonicalize {type(value).__name__}")


def canonical_json(op: str, args: dict) -> str:
    payload = {"op": op, "args": canonical_value(args)}
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def args_digest(op: str, args: dict) -> str:
    return hashlib.sha256(canonical_json(op, args).encode()).hexdigest()[:16]


def response_digest(value) -> str:
    text = json.dumps(canonical_value(value), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]
