"""Wire protocol helpers shared by the remote client and the gateway.

The schema document ships as package data; both sides load the same bytes
and validate with it. Masks travel as RLE text lines inside JSON strings,
feature maps as binary FMAP bodies.
"""
from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import jsonschema

from tarot.backends.types import ReasoningPromptOptions
from tarot.errors import InputError
from tarot.geometry import BBox, BinaryMask, PixelPoint
from tarot.maskio import decode_rle, encode_rle


@lru_cache(maxsize=1)
def schema_bytes() -> bytes:
    return resources.files("tarot.schema").joinpath("wire_schema.json").read_bytes()


@lru_cache(maxsize=1)
def wire_schema() -> dict:
    return json.loads(schema_bytes())


@lru_cache(maxsize=None)
def _validator(endpoint: str, part: str):
    root = wire_schema()
    try:
        sub = root["endpoints"][endpoint][part]
    except KeyError as exc:
        raise InputError(f"wire schema has no {part} for {endpoint}") from exc
    wrapped = {"definitions": root["definitions"], **sub}
    return jsonschema.Draft202012Validator(wrapped)


def validate_payload(endpoint: str, part: str, payload) -> None:
    """Raise jsonschema.ValidationError when payload violates the schema."""
    _validator(endpoint, part).validate(payload)


def endpoint_names() -> list:
    return list(wire_schema()["endpoints"])


def mask_to_wire(mask: BinaryMask) -> str:
    return encode_rle(mask)


def mask_from_wire(text: str) -> BinaryMask:
    return decode_rle(text)


def box_to_wire(box: BBox) -> list:
    return box.as_list()


def box_from_wire(values) -> BBox:
    return BBox(*[int(v) for v in values])


def points_to_wire(points) -> list:
    return [[p.x, p.y] for p in points]


def points_from_wire(values, polarity: str) -> list:
    return [PixelPoint(int(x), int(y), polarity) for x, y in values]


def options_to_wire(options: ReasoningPromptOptions) -> list:
    return [c == "1" for c in options.bits()]


def options_from_wire(values) -> ReasoningPromptOptions:
    return ReasoningPromptOptions.from_bits("".join("1" if v else "0" for v in values))
