"""Scenario-driven deterministic backends.

A scenario directory holds one JSON document plus the referenced image,
mask, and feature-map files. Reasoner answers are keyed on the digest of
the canonicalized call arguments; a scenario may additionally declare
explicit procedural rules for the mask-judging ops whose arguments depend
on pipeline numerics (score_mask, prefer_mask, affiliation). Lookups
covered by neither an entry nor a rule raise ScenarioLookupError so a test
can never pass on an accidental default.
"""
from __future__ import annotations

import json
from collections import Counter
from pathlib import Path
from typing import Optional

import numpy as np

from tarot import fmap as fmap_io
from tarot.backends.base import Backends, ConceptSegmenter, FeatureExtractor, Reasoner
from tarot.backends.types import (
    Criterion,
    MaskCandidate,
    ParsedExpression,
)
from tarot.canonical import ImageDigest, args_digest, canonical_json, normalize_text
from tarot.errors import InputError, ScenarioLookupError
from tarot.fmap import FeatureMap
from tarot.geometry import (
    BBox,
    BinaryMask,
    connected_components,
    difference,
    dilate4,
    erode4,
    intersect,
    iou,
    union,
)
from tarot.images import ImageRef, load_image
from tarot.maskio import load_mask_png

IMAGE_OPS = {
    "parse_expression", "ground_bbox", "score_mask", "prefer_mask", "affiliation",
    "segment_text", "segment_box", "segment_points", "extract",
}

_RULE_OPS = {"score_mask", "prefer_mask", "affiliation"}


def entry_digest(op: str, args: dict, image_digest: Optional[str] = None) -> str:
    """Digest for a scenario entry written with plain JSON argument values."""
    args = dict(args)
    if op in IMAGE_OPS:
        if image_digest is None:
            raise InputError(f"op {op} needs the scenario image digest")
        args["image"] = ImageDigest(image_digest)
    return args_digest(op, args)


class ScriptedReasoner(Reasoner):
    def __init__(self, entries: dict, rules: Optional[dict] = None,
                 gt: Optional[BinaryMask] = None):
        self._entries = entries
        self._rules = dict(rules or {})
        self._gt = gt
        self.calls = Counter()
        for op in self._rules:
            if op not in _RULE_OPS:
                raise InputError(f"procedural rules are not supported for {op}")

    def _lookup(self, op: str, args: dict):
        digest = args_digest(op, args)
        return self._entries.get(digest)

    def _fail(self, op: str, args: dict):
        raise ScenarioLookupError(
            f"scenario has no answer for {op} with args {canonical_json(op, args)}"
        )

    def parse_expression(self, image, query, options):
        self.calls["parse_expression"] += 1
        args = {"image": image, "query": query, "options": options}
        raw = self._lookup("parse_expression", args)
        if raw is None:
            self._fail("parse_expression", args)
        return ParsedExpression(
            target_name=raw["target"],
            refer_names=tuple(raw.get("refers", ())),
            is_explicit=bool(raw.get("is_explicit", True)),
            is_multi_object=bool(raw.get("is_multi_object", False)),
            adjectives=tuple(raw.get("adjectives", ())),
            confusion_notes=raw.get("confusion_notes", ""),
        )

    def augment_target(self, target):
        self.calls["augment_target"] += 1
        args = {"target": target}
        raw = self._lookup("augment_target", args)
        if raw is None:
            self._fail("augment_target", args)
        return list(raw["texts"])

    def criterion_map(self, target, refer, refer_box):
        self.calls["criterion_map"] += 1
        args = {"target": target, "refer": refer, "refer_box": refer_box}
        raw = self._lookup("criterion_map", args)
        if raw is None:
            self._fail("criterion_map", args)
        return Criterion(relation_text=raw["relation_text"], refer_name=refer,
                         refer_box=refer_box)

    def rephrase(self, query, target, refer, criterion):
        self.calls["rephrase"] += 1
        args = {"query": query, "target": target, "refer": refer,
                "relation": criterion.relation_text}
        raw = self._lookup("rephrase", args)
        if raw is None:
            self._fail("rephrase", args)
        return raw["short"], raw["long"]

    def ground_bbox(self, image, expression):
        self.calls["ground_bbox"] += 1
        args = {"image": image, "expression": expression}
        raw = self._lookup("ground_bbox", args)
        if raw is None:
            self._fail("ground_bbox", args)
        return BBox(*raw["box"])

    def _need_gt(self, op: str) -> BinaryMask:
        if self._gt is None:
            raise InputError(f"rule for {op} needs the scenario ground-truth mask")
        return self._gt

    def score_mask(self, image, mask, query, options):
        self.calls["score_mask"] += 1
        args = {"image": image, "mask": mask, "query": query, "options": options}
        raw = self._lookup("score_mask", args)
        if raw is not None:
            return float(raw["score"])
        rule = self._rules.get("score_mask")
        if rule is None:
            self._fail("score_mask", args)
        if rule["mode"] == "gt_iou":
            return iou(mask, self._need_gt("score_mask"))
        if rule["mode"] == "constant":
            return float(rule["value"])
        raise InputError(f"unknown score_mask rule mode {rule['mode']!r}")

    def prefer_mask(self, image, masks, query, options):
        self.calls["prefer_mask"] += 1
        args = {"image": image, "masks": list(masks), "query": query,
                "options": options}
        raw = self._lookup("prefer_mask", args)
        if raw is not None:
            return int(raw["index"])
        rule = self._rules.get("prefer_mask")
        if rule is None:
            self._fail("prefer_mask", args)
        if rule["mode"] == "first":
            return 0
        if rule["mode"] == "index":
            return int(rule["index"])
        if rule["mode"] == "gt_iou":
            gt = self._need_gt("prefer_mask")
            scores = [iou(m, gt) for m in masks]
            return int(max(range(len(scores)), key=lambda i: (scores[i], -i)))
        raise InputError(f"unknown prefer_mask rule mode {rule['mode']!r}")

    def affiliation(self, image, candidate, core):
        self.calls["affiliation"] += 1
        args = {"image": image, "candidate": candidate, "core": core}
        raw = self._lookup("affiliation", args)
        if raw is not None:
            return bool(raw["same_object"])
        rule = self._rules.get("affiliation")
        if rule is None:
            self._fail("affiliation", args)
        if rule["mode"] == "gt_overlap":
            gt = self._need_gt("affiliation")
            inside = intersect(candidate, gt).area
            return inside / candidate.area >= float(rule.get("threshold", 0.5))
        if rule["mode"] == "constant":
            return bool(rule["value"])
        raise InputError(f"unknown affiliation rule mode {rule['mode']!r}")


def _resolve_mask_spec(spec, masks: dict, base_dir: Path) -> BinaryMask:
    if isinstance(spec, str):
        if spec in masks:
            return masks[spec]
        return load_mask_png(base_dir / spec)
    if isinstance(spec, dict) and "derive" in spec:
        d = spec["derive"]
        base = masks[d["base"]]
        op = d["op"]
        if op == "dilate":
            return dilate4(base, int(d.get("n", 1)))
        if op == "erode":
            return erode4(base, int(d.get("n", 1)))
        if op == "union":
            return union(base, masks[d["other"]])
        if op == "minus":
            return difference(base, masks[d["other"]])
        raise InputError(f"unknown mask derivation {op!r}")
    raise InputError(f"cannot resolve mask spec {spec!r}")


class ScriptedSegmenter(ConceptSegmenter):
    def __init__(self, masks: dict, text_responses: dict, box_spec: dict,
                 points_spec: dict, image: Optional[ImageRef] = None):
        self._masks = masks
        self._text = text_responses  # normalized phrase -> list of (mask, score)
        self._box = box_spec
        self._points = points_spec
        self._image = image
        self.calls = Counter()

    def segment_text(self, image, phrase):
        self.calls["segment_text"] += 1
        key = normalize_text(phrase)
        if key not in self._text:
            raise ScenarioLookupError(f"scenario has no text response for {phrase!r}")
        return [MaskCandidate.from_mask(mask, score) for mask, score in self._text[key]]

    def segment_box(self, image, box):
        self.calls["segment_box"] += 1
        mode = self._box.get("mode")
        if mode == "fixed":
            mask, score = self._box["candidate"]
            return MaskCandidate.from_mask(mask, score)
        if mode == "canned":
            for item in self._box["responses"]:
                if item["box"] == box.as_list():
                    mask, score = item["candidate"]
                    return MaskCandidate.from_mask(mask, score)
            raise ScenarioLookupError(f"scenario has no box response for {box}")
        raise InputError(f"unknown segment_box mode {mode!r}")

    def segment_points(self, image, positives, negatives=(), prior=None):
        self.calls["segment_points"] += 1
        if not positives:
            raise InputError("segment_points needs at least one positive point")
        mode = self._points.get("mode")
        if mode == "fixed":
            mask, score = self._points["candidate"]
            return MaskCandidate.from_mask(mask, score)
        if mode == "color_component":
            return self._color_component(positives, negatives)
        raise InputError(f"unknown segment_points mode {mode!r}")

    def _color_component(self, positives, negatives):
        if self._image is None:
            raise InputError("color_component mode needs the scenario image")
        tol = int(self._points.get("tolerance", 40))
        arr = self._image.array.astype(np.int16)
        first = positives[0]
        color = arr[first.y, first.x]
        within = BinaryMask((np.abs(arr - color).max(axis=2) <= tol))
        keep = np.zeros(within.array.shape, dtype=bool)
        for comp in connected_components(within):
            hit = any(comp.mask.array[p.y, p.x] for p in positives)
            veto = any(comp.mask.array[n.y, n.x] for n in negatives)
            if hit and not veto:
                keep |= comp.mask.array
        if not keep.any():
            keep[first.y, first.x] = True
        return MaskCandidate.from_mask(BinaryMask(keep), 1.0)


class ScriptedFeatureExtractor(FeatureExtractor):
    def __init__(self, feature_map: FeatureMap, image_digest: Optional[str] = None):
        self._fmap = feature_map
        self._digest = image_digest
        self.calls = Counter()

    def extract(self, image):
        self.calls["extract"] += 1
        if self._digest is not None and image.digest != self._digest:
            raise ScenarioLookupError(
                f"feature map belongs to image {self._digest}, got {image.digest}"
            )
        if (self._fmap.image_w, self._fmap.image_h) != (image.width, image.height):
            raise InputError(
                f"feature map is {self._fmap.image_w}x{self._fmap.image_h}, "
                f"image is {image.width}x{image.height}"
            )
        return self._fmap


def load_reasoner_entries(entries: list, image_digest: str) -> dict:
    """Digest scenario entries written with plain JSON argument values."""
    table = {}
    for item in entries:
        digest = entry_digest(item["op"], item["args"], image_digest)
        table[digest] = item["response"]
    return table


class Scenario:
    """A fully loaded scenario: backends plus the sample wiring."""

    def __init__(self, root: Path, doc: dict, image: ImageRef, gt: Optional[BinaryMask],
                 backends: Backends):
        self.root = root
        self.doc = doc
        self.image = image
        self.gt = gt
        self.backends = backends

    @property
    def query(self) -> str:
        return self.doc.get("query", "")


def load_scenario(path) -> Scenario:
    """Load a scenario directory (or its scenario.json directly)."""
    path = Path(path)
    doc_path = path / "scenario.json" if path.is_dir() else path
    root = doc_path.parent
    try:
        doc = json.loads(doc_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read scenario {doc_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"scenario {doc_path} is not valid JSON: {exc}") from exc

    image = load_image(root / doc["image"])
    gt = load_mask_png(root / doc["gt"]) if "gt" in doc else None

    reasoner_doc = doc.get("reasoner", {})
    entries = load_reasoner_entries(reasoner_doc.get("responses", []), image.digest)
    reasoner = ScriptedReasoner(entries, reasoner_doc.get("rules"), gt=gt)

    seg_doc = doc.get("segmenter", {})
    masks = {}
    for name, spec in seg_doc.get("masks", {}).items():
        masks[name] = _resolve_mask_spec(spec, masks, root)

    text_responses = {}
    for item in seg_doc.get("text", []):
        candidates = [
            (_resolve_mask_spec(c["mask"], masks, root), float(c.get("score", 1.0)))
            for c in item.get("candidates", [])
        ]
        text_responses[normalize_text(item["phrase"])] = candidates

    box_spec = dict(seg_doc.get("box", {}))
    if box_spec.get("mode") == "fixed":
        c = box_spec["candidate"]
        box_spec["candidate"] = (_resolve_mask_spec(c["mask"], masks, root),
                                 float(c.get("score", 1.0)))
    elif box_spec.get("mode") == "canned":
        box_spec["responses"] = [
            {"box": list(item["box"]),
             "candidate": (_resolve_mask_spec(item["candidate"]["mask"], masks, root),
                           float(item["candidate"].get("score", 1.0)))}
            for item in box_spec.get("responses", [])
        ]

    points_spec = dict(seg_doc.get("points", {}))
    if points_spec.get("mode") == "fixed":
        c = points_spec["candidate"]
        points_spec["candidate"] = (_resolve_mask_spec(c["mask"], masks, root),
                                    float(c.get("score", 1.0)))

    segmenter = ScriptedSegmenter(masks, text_responses, box_spec, points_spec,
                                  image=image)

    features_doc = doc.get("features", {})
    feature_map = fmap_io.load(root / features_doc["path"])
    features = ScriptedFeatureExtractor(feature_map, image_digest=image.digest)

    return Scenario(root=root, doc=doc, image=image, gt=gt,
                    backends=Backends(reasoner, segmenter, features))
