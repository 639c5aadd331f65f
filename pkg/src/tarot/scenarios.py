"""Deterministic scenario suites for offline runs.

Each scenario is a small synthetic tabletop: a colored rectangular target
on a noisy gray background plus one distractor rectangle, a ground-truth
mask, a patch feature map whose vectors encode object identity, and a
scripted answer set for every backend call the pipeline will make. A
scenario can carry an injected segmentation fault:

* ``none``: the text-prompt candidate equals the ground truth.
* ``under``: an edge strip of the target is missing from the candidate.
* ``over``: the candidate spills beyond the target (dilated outline or a
  merge with the distractor), while still agreeing with the grounded box.

The faulty candidate is kept close enough to the grounded box to survive
the consistency filter, and the preference rule pins selection to it, so
the refinement stage is what has to repair the mask.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from tarot import fmap as fmap_io
from tarot.errors import InputError, InvariantViolation
from tarot.geometry import BBox, BinaryMask, dilate4, difference, mask_box_iou, union
from tarot.images import from_array
from tarot.maskio import save_mask_png

_PALETTE = {
    "red": (200, 60, 60),
    "green": (60, 200, 60),
    "blue": (60, 60, 200),
    "yellow": (200, 200, 60),
    "magenta": (200, 60, 200),
    "cyan": (60, 200, 200),
}

_NOUNS = ("mug", "block", "panel", "disk")

_SYNONYMS = {
    "mug": ("cup", "beaker"),
    "block": ("cube", "brick"),
    "panel": ("board", "sheet"),
    "disk": ("disc", "puck"),
}

_DIMS = (88, 96, 104, 112, 120, 128)

_BG_GRAY = 120
_COLOR_TOLERANCE = 40
_FMAP_PATCH = 8
_FMAP_DIM = 16
_FILTER_MARGIN = 0.02

FAULT_KINDS = ("none", "under", "over")


def _expand_fault_mix(count: int, fault_mix: Optional[Dict[str, int]]) -> List[str]:
    if fault_mix is None:
        third = count // 3
        fault_mix = {"under": third, "over": third,
                     "none": count - 2 * third}
    unknown = set(fault_mix) - set(FAULT_KINDS)
    if unknown:
        raise InputError(f"unknown fault kinds {sorted(unknown)}")
    if any(v < 0 for v in fault_mix.values()):
        raise InputError("fault mix counts must be non-negative")
    if sum(fault_mix.values()) != count:
        raise InputError(
            f"fault mix sums to {sum(fault_mix.values())}, expected {count}"
        )
    remaining = {k: fault_mix.get(k, 0) for k in FAULT_KINDS}
    faults = []
    while len(faults) < count:
        for kind in FAULT_KINDS:
            if remaining[kind] > 0:
                remaining[kind] -= 1
                faults.append(kind)
    return faults


def _rect_mask(h: int, w: int, box: BBox) -> BinaryMask:
    arr = np.zeros((h, w), dtype=bool)
    arr[box.y_min:box.y_max, box.x_min:box.x_max] = True
    return BinaryMask(arr)


def _paint(image: np.ndarray, box: BBox, color, rng) -> None:
    block = image[box.y_min:box.y_max, box.x_min:box.x_max]
    noise = rng.integers(-3, 4, size=block.shape, dtype=np.int16)
    block[:] = np.clip(np.asarray(color, dtype=np.int16) + noise, 0, 255)


def _render_image(h: int, w: int, gt_box: BBox, gt_color, decoy_box: BBox,
                  decoy_color, rng) -> np.ndarray:
    gray = _BG_GRAY + rng.integers(-6, 7, size=(h, w, 1), dtype=np.int16)
    image = np.repeat(np.clip(gray, 0, 255), 3, axis=2)
    _paint(image, gt_box, gt_color, rng)
    _paint(image, decoy_box, decoy_color, rng)
    return image.astype(np.uint8)


def _build_fmap(h: int, w: int, gt_box: BBox, decoy_box: BBox, rng) -> np.ndarray:
    """Patch vectors: an orthonormal identity per object with small noise.

    A patch takes the identity of whichever label (target, distractor,
    background) covers most of its pixels, ties favoring the target.
    """
    grid_h, grid_w = h // _FMAP_PATCH, w // _FMAP_PATCH
    basis, _ = np.linalg.qr(rng.standard_normal((_FMAP_DIM, 3)))
    identities = basis.T  # rows: target, distractor, background
    labels = np.zeros((h, w), dtype=np.int8)
    labels[gt_box.y_min:gt_box.y_max, gt_box.x_min:gt_box.x_max] = 1
    labels[decoy_box.y_min:decoy_box.y_max, decoy_box.x_min:decoy_box.x_max] = 2
    vectors = np.empty((grid_h * grid_w, _FMAP_DIM), dtype=np.float64)
    for gy in range(grid_h):
        for gx in range(grid_w):
            block = labels[gy * _FMAP_PATCH:(gy + 1) * _FMAP_PATCH,
                           gx * _FMAP_PATCH:(gx + 1) * _FMAP_PATCH]
            counts = [(block == 1).sum(), (block == 2).sum(), (block == 0).sum()]
            identity = identities[int(np.argmax(counts))]
            vectors[gy * grid_w + gx] = identity + 0.05 * rng.standard_normal(_FMAP_DIM)
    return vectors


def _check_color_separation(gt_color, decoy_color) -> None:
    margin = _COLOR_TOLERANCE + 6 + 3  # tolerance + bg noise + object noise
    pairs = (
        (gt_color, decoy_color),
        (gt_color, (_BG_GRAY,) * 3),
        (decoy_color, (_BG_GRAY,) * 3),
    )
    for a, b in pairs:
        dist = max(abs(x - y) for x, y in zip(a, b))
        if dist <= margin:
            raise InvariantViolation(
                f"colors {a} and {b} are only {dist} apart, need > {margin}"
            )


def _faulty_text_mask(fault: str, variant: int, gt: BinaryMask, gt_box: BBox,
                      decoy: BinaryMask, rng):
    """Returns (mask spec for the scenario JSON, extra named masks, mask)."""
    if fault == "none":
        return "gt", {}, gt
    if fault == "under":
        frac = rng.uniform(0.125, 0.15)
        strip_w = max(6, int(round(gt_box.width * frac)))
        if rng.integers(2) == 0:
            strip_box = BBox(gt_box.x_min, gt_box.y_min,
                             gt_box.x_min + strip_w, gt_box.y_max)
        else:
            strip_box = BBox(gt_box.x_max - strip_w, gt_box.y_min,
                             gt_box.x_max, gt_box.y_max)
        strip = _rect_mask(gt.height, gt.width, strip_box)
        spec = {"derive": {"op": "minus", "base": "gt", "other": "strip"}}
        return spec, {"strip": strip}, difference(gt, strip)
    if fault == "over":
        if variant % 2 == 0:
            spec = {"derive": {"op": "dilate", "base": "gt", "n": 2}}
            return spec, {}, dilate4(gt, 2)
        spec = {"derive": {"op": "union", "base": "gt", "other": "decoy"}}
        return spec, {}, union(gt, decoy)
    raise InputError(f"unknown fault kind {fault!r}")


def _pick_aligned(rng, low: int, high: int) -> int:
    """A multiple of the patch size in [low, high]."""
    choices = range(low, high + 1, _FMAP_PATCH)
    return int(choices[rng.integers(len(choices))])


def _place_boxes(h: int, w: int, rng):
    """Target rectangle aligned to the feature patch grid, distractor to its
    right.

    Alignment keeps every patch under the target purely target-labeled, so
    similarity stays high across the whole object (the negative point must
    not be attracted inside it). The size floor keeps every faulty
    candidate's box agreement above the filter line: dilation by 2 on a
    40x40 target scores ~0.83, merging an 18x18 distractor ~0.83, both
    above tau + margin.
    """
    gt_w = _pick_aligned(rng, 40, 48)
    gt_h = _pick_aligned(rng, 40, min(48, h - 16))
    decoy_w = int(rng.integers(16, 19))
    decoy_h = int(rng.integers(16, 19))
    x0 = _pick_aligned(rng, _FMAP_PATCH, w - gt_w - decoy_w - 5)
    y0 = _pick_aligned(rng, _FMAP_PATCH, h - gt_h - _FMAP_PATCH)
    gt_box = BBox(x0, y0, x0 + gt_w, y0 + gt_h)
    dx0 = int(rng.integers(gt_box.x_max + 3, w - decoy_w - 1))
    dy0 = int(rng.integers(3, h - decoy_h - 2))
    decoy_box = BBox(dx0, dy0, dx0 + decoy_w, dy0 + decoy_h)
    return gt_box, decoy_box


def _scenario_doc(index: int, fault: str, query: str, target: str,
                  refer: Optional[str], refer_box: Optional[BBox], gt_box: BBox,
                  texts: List[str], text_spec, extra_candidate, relation: str,
                  rephrased) -> dict:
    all_on = "111111"
    all_off = "000000"
    refers = [refer] if refer else []
    color = target.split()[0]
    responses = [
        {"op": "parse_expression",
         "args": {"query": query, "options": bits},
         "response": {"target": target, "refers": refers,
                      "adjectives": [color], "is_explicit": True}}
        for bits in (all_on, all_off)
    ]
    responses.append({
        "op": "augment_target",
        "args": {"target": target},
        "response": {"texts": texts},
    })
    grounded = [query]
    if refer:
        short, long = rephrased
        responses.append({
            "op": "criterion_map",
            "args": {"target": target, "refer": refer,
                     "refer_box": refer_box.as_list()},
            "response": {"relation_text": relation},
        })
        responses.append({
            "op": "rephrase",
            "args": {"query": query, "target": target, "refer": refer,
                     "relation": relation},
            "response": {"short": short, "long": long},
        })
        grounded.extend([short, long])
    for expression in grounded:
        responses.append({
            "op": "ground_bbox",
            "args": {"expression": expression},
            "response": {"box": gt_box.as_list()},
        })

    text_entries = []
    for phrase in texts:
        candidates = [{"mask": "text_main", "score": 0.95}]
        if extra_candidate is not None:
            candidates.append(dict(extra_candidate))
        text_entries.append({"phrase": phrase, "candidates": candidates})
    if refer:
        text_entries.append(
            {"phrase": refer, "candidates": [{"mask": "decoy", "score": 0.9}]}
        )

    masks: dict = {"gt": "gt.png", "decoy": "decoy.png", "text_main": text_spec}
    doc = {
        "name": f"scen_{index:03d}",
        "fault": fault,
        "image": "image.png",
        "gt": "gt.png",
        "query": query,
        "reasoner": {
            "responses": responses,
            "rules": {
                "score_mask": {"mode": "gt_iou"},
                "prefer_mask": {"mode": "first"},
                "affiliation": {"mode": "gt_overlap", "threshold": 0.5},
            },
        },
        "segmenter": {
            "masks": masks,
            "text": text_entries,
            "box": {"mode": "canned", "responses": [
                {"box": gt_box.as_list(),
                 "candidate": {"mask": "gt", "score": 1.0}},
            ]},
            "points": {"mode": "color_component", "tolerance": _COLOR_TOLERANCE},
        },
        "features": {"path": "fmap.bin"},
    }
    return doc


def generate_scenarios(out_dir, seed: int = 0, count: int = 20,
                       fault_mix: Optional[Dict[str, int]] = None,
                       tau: float = 0.80) -> List[dict]:
    """Write ``count`` scenario directories plus a manifest under ``out_dir``.

    Returns one metadata dict per scenario (name, fault, query, paths).
    Output bytes are a pure function of (seed, count, fault_mix, tau).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    faults = _expand_fault_mix(count, fault_mix)
    over_seen = 0
    manifest_lines = []
    summaries = []

    for index, fault in enumerate(faults):
        rng = np.random.default_rng([seed, index])
        name = f"scen_{index:03d}"
        scen_dir = out / name
        scen_dir.mkdir(exist_ok=True)

        w = int(_DIMS[rng.integers(len(_DIMS))])
        h = int(_DIMS[rng.integers(len(_DIMS))])
        gt_box, decoy_box = _place_boxes(h, w, rng)

        color_names = list(_PALETTE)
        gt_color_name, decoy_color_name = (
            color_names[i] for i in rng.choice(len(color_names), 2, replace=False)
        )
        gt_color = _PALETTE[gt_color_name]
        decoy_color = _PALETTE[decoy_color_name]
        _check_color_separation(gt_color, decoy_color)

        noun = _NOUNS[int(rng.integers(len(_NOUNS)))]
        decoy_nouns = [n for n in _NOUNS if n != noun]
        decoy_noun = decoy_nouns[int(rng.integers(len(decoy_nouns)))]
        target = f"{gt_color_name} {noun}"
        with_refer = index % 3 == 2
        refer = f"{decoy_color_name} {decoy_noun}" if with_refer else None
        if with_refer:
            query = (f"the {target} left of the {refer}, scene {index:03d}")
        else:
            query = f"the {target}, scene {index:03d}"
        syn_a, syn_b = _SYNONYMS[noun]
        texts = [target, f"{gt_color_name} {syn_a}", f"{gt_color_name} {syn_b}"]
        relation = "left of"
        short = f"{target} left of {decoy_noun}"
        long = f"the {target} positioned to the left of the {refer}"
        if len(short) > len(long):
            raise InvariantViolation("rephrased short text longer than long text")

        gt = _rect_mask(h, w, gt_box)
        decoy = _rect_mask(h, w, decoy_box)

        variant = over_seen
        if fault == "over":
            over_seen += 1
        text_spec, extra_masks, text_mask = _faulty_text_mask(
            fault, variant, gt, gt_box, decoy, rng)

        agreement = mask_box_iou(text_mask, gt_box)
        if agreement <= tau + _FILTER_MARGIN:
            raise InvariantViolation(
                f"{name}: faulty candidate agreement {agreement:.4f} too close "
                f"to the filter threshold {tau}"
            )
        decoy_agreement = mask_box_iou(decoy, gt_box)
        if decoy_agreement > tau - _FILTER_MARGIN:
            raise InvariantViolation(
                f"{name}: distractor agreement {decoy_agreement:.4f} would "
                "survive the consistency filter"
            )

        extra_candidate = None
        if index % 4 == 3:
            if fault == "none":
                extra_candidate = {"mask": "near_gt", "score": 0.8}
            else:
                extra_candidate = {"mask": "decoy", "score": 0.4}

        image = _render_image(h, w, gt_box, gt_color, decoy_box, decoy_color, rng)
        (scen_dir / "image.png").write_bytes(from_array(image).data)
        save_mask_png(gt, scen_dir / "gt.png")
        save_mask_png(decoy, scen_dir / "decoy.png")
        for mask_name, mask in extra_masks.items():
            save_mask_png(mask, scen_dir / f"{mask_name}.png")

        vectors = _build_fmap(h, w, gt_box, decoy_box, rng)
        fmap_io.save(scen_dir / "fmap.bin", h // _FMAP_PATCH, w // _FMAP_PATCH,
                     _FMAP_DIM, w, h, vectors)

        doc = _scenario_doc(index, fault, query, target, refer, decoy_box,
                            gt_box, texts, text_spec, extra_candidate, relation,
                            (short, long))
        for mask_name in extra_masks:
            doc["segmenter"]["masks"][mask_name] = f"{mask_name}.png"
        if extra_candidate is not None and extra_candidate["mask"] == "near_gt":
            doc["segmenter"]["masks"]["near_gt"] = {
                "derive": {"op": "dilate", "base": "gt", "n": 1}
            }

        # masks must be declared before any derivation that references them
        ordered = {}
        for key in ("gt", "decoy", "strip", "near_gt", "text_main"):
            if key in doc["segmenter"]["masks"]:
                ordered[key] = doc["segmenter"]["masks"][key]
        doc["segmenter"]["masks"] = ordered

        # insertion order matters for the masks table, so no key sorting here
        (scen_dir / "scenario.json").write_text(
            json.dumps(doc, indent=2) + "\n", encoding="utf-8"
        )
        manifest_lines.append(json.dumps({
            "image": f"{name}/image.png",
            "query": query,
            "gt_mask": f"{name}/gt.png",
            "split": "val",
            "scenario": name,
        }, sort_keys=True))
        summaries.append({
            "name": name, "fault": fault, "query": query,
            "dir": str(scen_dir), "image_size": [w, h],
        })

    (out / "manifest.jsonl").write_text(
        "\n".join(manifest_lines) + "\n", encoding="utf-8"
    )
    return summaries
