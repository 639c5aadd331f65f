"""Echo mode: serve scripted scenarios over the wire protocol.

The library loads a scenario directory (or a whole generated suite via its
manifest) and answers each request by calling the matching scripted
backend, so HTTP responses are exactly what an in-process scripted run
would produce. Requests are routed to a scenario by image digest; the few
operations that carry no image are answered by the first scenario whose
script covers them.
"""
from __future__ import annotations

import base64
import binascii
import json
import threading
from pathlib import Path
from typing import Callable, Dict, List, Optional

from tarot.backends.scripted import Scenario, load_scenario
from tarot.backends.wire import (
    box_from_wire,
    box_to_wire,
    mask_from_wire,
    mask_to_wire,
    options_from_wire,
    points_from_wire,
)
from tarot.errors import (
    BackendError,
    GeometryError,
    InputError,
    ScenarioLookupError,
)
from tarot.geometry import BBox, BinaryMask
from tarot.images import ImageRef, from_bytes

from tarot_gateway.errors import ApiError, semantic


class EchoLibrary:
    """Loaded scenarios plus the content-addressed image store."""

    def __init__(self, scenarios: List[Scenario]):
        if not scenarios:
            raise InputError("echo mode needs at least one scenario")
        self.scenarios = scenarios
        self._images: Dict[str, bytes] = {}
        self._by_digest: Dict[str, List[Scenario]] = {}
        self._lock = threading.Lock()
        for scen in scenarios:
            self._images[scen.image.digest] = scen.image.data
            self._by_digest.setdefault(scen.image.digest, []).append(scen)

    @classmethod
    def from_path(cls, root) -> "EchoLibrary":
        """Load one scenario dir, or every scenario a suite manifest names."""
        root = Path(root)
        manifest = root / "manifest.jsonl"
        if manifest.is_file():
            scenarios = []
            for line in manifest.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                row = json.loads(line)
                scenarios.append(load_scenario(root / row["scenario"]))
            return cls(scenarios)
        return cls([load_scenario(root)])

    # ------------------------------------------------------------ images

    def store_image(self, data: bytes) -> ImageRef:
        try:
            image = from_bytes(data)
        except InputError as exc:
            raise semantic("bad_image", str(exc)) from exc
        with self._lock:
            self._images.setdefault(image.digest, data)
        return image

    def resolve_image(self, payload: dict) -> ImageRef:
        """Turn a wire image reference (digest or inline b64) into pixels."""
        if "b64" in payload:
            try:
                data = base64.b64decode(payload["b64"], validate=True)
            except (binascii.Error, ValueError) as exc:
                raise semantic("bad_image", f"invalid base64 image: {exc}") from exc
            return self.store_image(data)
        digest = payload["digest"]
        with self._lock:
            data = self._images.get(digest)
        if data is None:
            raise semantic("unknown_image",
                           f"image {digest} was never uploaded here")
        return from_bytes(data)

    # ----------------------------------------------------------- routing

    def for_image(self, image: ImageRef) -> List[Scenario]:
        scenarios = self._by_digest.get(image.digest)
        if not scenarios:
            raise semantic("not_scripted",
                           f"no scenario covers image {image.digest}")
        return scenarios

    @staticmethod
    def first_answer(scenarios: List[Scenario], call: Callable):
        """First scenario whose script answers; 422 when none does."""
        last: Optional[Exception] = None
        for scen in scenarios:
            try:
                return call(scen)
            except ScenarioLookupError as exc:
                last = exc
        raise semantic("not_scripted", str(last) if last else "no scenario matched")


# ------------------------------------------------------- request helpers

def _mask_for(image: ImageRef, encoded: str, what: str) -> BinaryMask:
    try:
        mask = mask_from_wire(encoded)
    except InputError as exc:
        raise semantic("bad_mask", f"{what}: {exc}") from exc
    if (mask.width, mask.height) != (image.width, image.height):
        raise semantic(
            "bad_mask",
            f"{what} is {mask.width}x{mask.height}, image is "
            f"{image.width}x{image.height}",
        )
    return mask


def _box_for(image: ImageRef, values) -> BBox:
    try:
        box = box_from_wire(values)
    except GeometryError as exc:
        raise semantic("bad_box", str(exc)) from exc
    if box.x_min < 0 or box.y_min < 0 or box.x_max > image.width \
            or box.y_max > image.height:
        raise semantic("bad_box",
                       f"box {values} outside {image.width}x{image.height} image")
    return box


def _points_for(image: ImageRef, values, polarity: str) -> list:
    points = points_from_wire(values, polarity)
    for p in points:
        if not (0 <= p.x < image.width and 0 <= p.y < image.height):
            raise semantic(
                "bad_point",
                f"{polarity} point [{p.x}, {p.y}] outside "
                f"{image.width}x{image.height} image",
            )
    return points


def candidate_to_wire(candidate) -> dict:
    return {
        "mask": mask_to_wire(candidate.mask),
        "box": box_to_wire(candidate.box),
        "score": float(candidate.score),
    }


# ------------------------------------------------------------- handlers

def _parse(library: EchoLibrary, payload: dict) -> dict:
    image = library.resolve_image(payload["image"])
    options = options_from_wire(payload["options"])
    parsed = library.first_answer(
        library.for_image(image),
        lambda s: s.backends.reasoner.parse_expression(image, payload["query"],
                                                       options),
    )
    return {
        "target": parsed.target_name,
        "refers": list(parsed.refer_names),
        "is_explicit": parsed.is_explicit,
        "is_multi_object": parsed.is_multi_object,
        "adjectives": list(parsed.adjectives),
        "confusion_notes": parsed.confusion_notes,
    }


def _augment(library: EchoLibrary, payload: dict) -> dict:
    texts = library.first_answer(
        library.scenarios,
        lambda s: s.backends.reasoner.augment_target(payload["target"]),
    )
    return {"texts": list(texts)}


def _criterion(library: EchoLibrary, payload: dict) -> dict:
    try:
        box = box_from_wire(payload["refer_box"])
    except GeometryError as exc:
        raise semantic("bad_box", str(exc)) from exc
    criterion = library.first_answer(
        library.scenarios,
        lambda s: s.backends.reasoner.criterion_map(payload["target"],
                                                    payload["refer"], box),
    )
    return {"relation_text": criterion.relation_text}


def _rephrase(library: EchoLibrary, payload: dict) -> dict:
    from tarot.backends.types import Criterion

    criterion = Criterion(relation_text=payload["relation"],
                          refer_name=payload["refer"])
    short, long = library.first_answer(
        library.scenarios,
        lambda s: s.backends.reasoner.rephrase(payload["query"],
                                               payload["target"],
                                               payload["refer"], criterion),
    )
    return {"short": short, "long": long}


def _ground(library: EchoLibrary, payload: dict) -> dict:
    image = library.resolve_image(payload["image"])
    box = library.first_answer(
        library.for_image(image),
        lambda s: s.backends.reasoner.ground_bbox(image, payload["expression"]),
    )
    return {"box": box_to_wire(box)}


def _score(library: EchoLibrary, payload: dict) -> dict:
    image = library.resolve_image(payload["image"])
    mask = _mask_for(image, payload["mask"], "mask")
    options = options_from_wire(payload["options"])
    score = library.first_answer(
        library.for_image(image),
        lambda s: s.backends.reasoner.score_mask(image, mask, payload["query"],
                                                 options),
    )
    return {"score": float(score)}


def _prefer(library: EchoLibrary, payload: dict) -> dict:
    image = library.resolve_image(payload["image"])
    masks = [_mask_for(image, m, f"masks[{i}]")
             for i, m in enumerate(payload["masks"])]
    options = options_from_wire(payload["options"])
    index = library.first_answer(
        library.for_image(image),
        lambda s: s.backends.reasoner.prefer_mask(image, masks,
                                                  payload["query"], options),
    )
    return {"index": int(index)}


def _affiliate(library: EchoLibrary, payload: dict) -> dict:
    image = library.resolve_image(payload["image"])
    candidate = _mask_for(image, payload["candidate"], "candidate")
    core = _mask_for(image, payload["core"], "core")
    if candidate.is_empty():
        raise semantic("bad_mask", "candidate mask is empty")
    verdict = library.first_answer(
        library.for_image(image),
        lambda s: s.backends.reasoner.affiliation(image, candidate, core),
    )
    return {"same_object": bool(verdict)}


def _segment_text(library: EchoLibrary, payload: dict) -> dict:
    image = library.resolve_image(payload["image"])
    candidates = library.first_answer(
        library.for_image(image),
        lambda s: s.backends.segmenter.segment_text(image, payload["phrase"]),
    )
    return {"candidates": [candidate_to_wire(c) for c in candidates]}


def _segment_box(library: EchoLibrary, payload: dict) -> dict:
    image = library.resolve_image(payload["image"])
    box = _box_for(image, payload["box"])
    candidate = library.first_answer(
        library.for_image(image),
        lambda s: s.backends.segmenter.segment_box(image, box),
    )
    return candidate_to_wire(candidate)


def _segment_points(library: EchoLibrary, payload: dict) -> dict:
    image = library.resolve_image(payload["image"])
    positives = _points_for(image, payload["positives"], "positive")
    negatives = _points_for(image, payload.get("negatives", []), "negative")
    prior = None
    if payload.get("prior") is not None:
        prior = _mask_for(image, payload["prior"], "prior")
    candidate = library.first_answer(
        library.for_image(image),
        lambda s: s.backends.segmenter.segment_points(image, positives,
                                                      negatives, prior),
    )
    return candidate_to_wire(candidate)


def _features(library: EchoLibrary, payload: dict) -> bytes:
    image = library.resolve_image(payload["image"])

    def fetch(scen: Scenario) -> bytes:
        scen.backends.features.extract(image)
        # serve the scenario's stored bytes so responses are bit-true
        return (scen.root / scen.doc["features"]["path"]).read_bytes()

    return library.first_answer(library.for_image(image), fetch)


HANDLERS = {
    "/reason/parse": _parse,
    "/reason/augment": _augment,
    "/reason/criterion": _criterion,
    "/reason/rephrase": _rephrase,
    "/reason/ground": _ground,
    "/reason/score": _score,
    "/reason/prefer": _prefer,
    "/reason/affiliate": _affiliate,
    "/segment/text": _segment_text,
    "/segment/box": _segment_box,
    "/segment/points": _segment_points,
    "/features": _features,
}


def dispatch(library: EchoLibrary, endpoint: str, payload: dict):
    """Answer one schema-valid request; raises ApiError on semantic trouble."""
    handler = HANDLERS[endpoint]
    try:
        return handler(library, payload)
    except ApiError:
        raise
    except (InputError, GeometryError) as exc:
        raise semantic("semantic_violation", str(exc)) from exc
    except BackendError as exc:
        raise semantic("not_scripted", str(exc)) from exc
