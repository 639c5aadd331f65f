"""Canonical argument serialization and digests."""
import hashlib
import json

import numpy as np
import pytest

from tarot.canonical import (ImageDigest, args_digest, canonical_json,
                             canonical_value, normalize_text, response_digest)
from tarot.geometry import BBox, BinaryMask, PixelPoint
from tarot.images import from_array
from tarot.backends.types import ReasoningPromptOptions

from conftest import mask_from_rows


def test_normalize_text_folds_case_and_whitespace():
    assert normalize_text("  The   RED\tmug\n") == "the red mug"
    assert normalize_text("plain") == "plain"
    assert normalize_text("A  B") == normalize_text("a b")


def test_canonical_value_primitives():
    assert canonical_value(True) is True
    assert canonical_value(None) is None
    assert canonical_value(3) == 3
    assert canonical_value(0.1234567) == 0.123457  # rounded to 6 places
    assert canonical_value([1, "X  y"]) == [1, "x y"]
    assert canonical_value((1, 2)) == [1, 2]


def test_canonical_value_dict_sorts_keys():
    out = canonical_value({"b": 1, "a": {"d": 2.0, "c": "Z"}})
    assert json.dumps(out) == json.dumps({"a": {"c": "z", "d": 2.0}, "b": 1})


def test_canonical_value_geometry_types():
    assert canonical_value(BBox(1, 2, 5, 9)) == [1, 2, 5, 9]
    assert canonical_value(PixelPoint(3, 4, "negative")) == [3, 4, "negative"]
    mask = mask_from_rows(["#.", ".#"])
    assert canonical_value(mask) == {"$mask": "2 2 0 1 2 1"}


def test_canonical_value_images_reduce_to_digest():
    image = from_array(np.zeros((4, 4, 3), dtype=np.uint8))
    assert canonical_value(image) == {"$image": image.digest}
    assert canonical_value(ImageDigest("abc123")) == {"$image": "abc123"}


def test_canonical_value_option_vector_uses_bits():
    options = ReasoningPromptOptions.all_on()
    assert canonical_value(options) == options.bits()
    assert isinstance(options.bits(), str)


def test_canonical_value_rejects_unknown_types():
    with pytest.raises(TypeError):
        canonical_value(object())


def test_args_digest_is_prefix_of_payload_sha256():
    args = {"query": "The Mug", "box": BBox(0, 0, 2, 2)}
    payload = canonical_json("ground_bbox", args)
    full = hashlib.sha256(payload.encode()).hexdigest()
    assert args_digest("ground_bbox", args) == full[:16]
    assert len(args_digest("ground_bbox", args)) == 16


def test_args_digest_invariant_to_formatting_noise():
    image = from_array(np.full((3, 3, 3), 40, dtype=np.uint8))
    a = args_digest("parse_expression", {"image": image, "query": "the RED mug"})
    b = args_digest("parse_expression",
                    {"query": " the  red mug ", "image": ImageDigest(image.digest)})
    assert a == b


def test_args_digest_separates_ops_and_values():
    args = {"query": "mug"}
    assert args_digest("parse_expression", args) != args_digest("rephrase", args)
    assert args_digest("rephrase", {"query": "mug"}) \
        != args_digest("rephrase", {"query": "cup"})


def test_float_rounding_merges_near_equal_digests():
    a = args_digest("score_mask", {"tau": 0.80000004})
    b = args_digest("score_mask", {"tau": 0.8})
    assert a == b
    assert args_digest("score_mask", {"tau": 0.81}) != b


def test_response_digest_stable_for_masks():
    mask = mask_from_rows(["##", "#."])
    same = BinaryMask(mask.array.copy())
    assert response_digest(mask) == response_digest(same)
    assert response_digest(mask) != response_digest(mask_from_rows(["##", ".#"]))
