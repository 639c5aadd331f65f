"""Interpret phase: turn one referring expression into heterogeneous
prompts and the per-type masks they produce.

The phase parses the query, augments the target into text prompts,
grounds bounding boxes for the raw and rephrased expressions, collects
text/box mask candidates, drops text candidates that disagree with every
grounded box, selects the best candidate per prompt type, intersects the
survivors into a high-confidence overlap core, and derives point prompts
from dense-feature similarity around that core.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

from tarot.backends.base import Backends
from tarot.backends.types import (
    MaskCandidate,
    ParsedExpression,
    PromptBundle,
    ReasoningPromptOptions,
)
from tarot.calls import gather_ordered, record_call, traced_call
from tarot.config import PipelineConfig
from tarot.errors import PipelineError
from tarot.fmap import FeatureMap
from tarot.geometry import BinaryMask, PixelPoint, intersect, mask_box_iou
from tarot.images import ImageRef
from tarot.similarity import (
    SimilarityField,
    accumulate,
    sample_anchors,
    select_negative,
    select_positive,
)
from tarot.trace import TraceRecorder

PHASE = "interpret"


@dataclass
class InterpretResult:
    mask_text: Optional[BinaryMask]
    mask_bbx: Optional[BinaryMask]
    mask_point: Optional[BinaryMask]
    omega: BinaryMask
    omega_fallback: bool
    field: SimilarityField
    bundle: PromptBundle
    parsed: ParsedExpression
    feature_map: FeatureMap
    positives: List[PixelPoint] = field(default_factory=list)
    negative: Optional[PixelPoint] = None


def filter_text_candidates(candidates: List[MaskCandidate], boxes, tau: float):
    """Keep candidates whose best agreement with any grounded box beats tau.

    Returns (kept, per-candidate best IoU, fallback flag); when the filter
    would empty a non-empty pool the unfiltered pool is returned instead
    with the flag set.
    """
    ious = [max(mask_box_iou(c.mask, b) for b in boxes) if boxes else 0.0
            for c in candidates]
    kept = [c for c, v in zip(candidates, ious) if v > tau]
    if candidates and not kept:
        return list(candidates), ious, True
    return kept, ious, False


def _select_candidate(candidates, image, query, options, backends, recorder,
                      prompt_type: str) -> Optional[MaskCandidate]:
    """Per-type selection; a single candidate never costs a reasoner call."""
    if not candidates:
        return None
    if len(candidates) == 1:
        recorder.emit(PHASE, "select", prompt_type=prompt_type, index=0, scored=False)
        return candidates[0]
    scores = []
    for cand in candidates:
        score = traced_call(
            recorder, PHASE, "score_mask",
            {"image": image, "mask": cand.mask, "query": query, "options": options},
            lambda c=cand: backends.reasoner.score_mask(image, c.mask, query, options),
        )
        scores.append(score)
    best = max(range(len(scores)), key=lambda i: (scores[i], -i))
    recorder.emit(PHASE, "select", prompt_type=prompt_type, index=best, scored=True,
                  scores=scores)
    return candidates[best]


def _dedupe_keep_order(pairs):
    seen = set()
    out = []
    for text, source in pairs:
        if text not in seen:
            seen.add(text)
            out.append((text, source))
    return out


def run_interpret(image: ImageRef, query: str, backends: Backends,
                  cfg: PipelineConfig, recorder: TraceRecorder) -> InterpretResult:
    options = (ReasoningPromptOptions.all_on() if cfg.rpo
               else ReasoningPromptOptions.all_off())

    # 1. parse the expression
    parsed = traced_call(
        recorder, PHASE, "parse_expression",
        {"image": image, "query": query, "options": options},
        lambda: backends.reasoner.parse_expression(image, query, options),
    )
    if not options.refer_analysis and parsed.refer_names:
        recorder.warning(PHASE, "refers_dropped", reason="refer analysis disabled")
        parsed = ParsedExpression(
            target_name=parsed.target_name,
            refer_names=(),
            is_explicit=parsed.is_explicit,
            is_multi_object=parsed.is_multi_object,
            adjectives=parsed.adjectives,
            confusion_notes=parsed.confusion_notes,
        )
    recorder.emit(PHASE, "parse", target=parsed.target_name,
                  refers=list(parsed.refer_names), options=options.bits())

    # 2. text prompts for the target
    if cfg.text_aug:
        texts = traced_call(
            recorder, PHASE, "augment_target", {"target": parsed.target_name},
            lambda: backends.reasoner.augment_target(parsed.target_name),
        )
        if not texts or texts[0] != parsed.target_name:
            recorder.warning(PHASE, "augment_fixed",
                             reason="first text prompt must be the target")
            texts = [parsed.target_name,
                     *[t for t in texts if t != parsed.target_name]]
    else:
        texts = [parsed.target_name]
    recorder.emit(PHASE, "texts", texts=list(texts))

    # 3. refer-object criterion and rephrasings
    criterion = None
    short = long = query
    if parsed.refer_names:
        refer = parsed.refer_names[0]  # remaining refer objects are parked
        refer_cands = traced_call(
            recorder, PHASE, "segment_text", {"image": image, "phrase": refer},
            lambda: backends.segmenter.segment_text(image, refer),
        )
        if not refer_cands:
            recorder.warning(PHASE, "refer_not_found", refer=refer)
        else:
            best_refer = max(range(len(refer_cands)),
                             key=lambda i: (refer_cands[i].score, -i))
            refer_box = refer_cands[best_refer].box
            recorder.emit(PHASE, "refer_grounded", refer=refer,
                          box=refer_box.as_list())
            criterion = traced_call(
                recorder, PHASE, "criterion_map",
                {"target": parsed.target_name, "refer": refer, "refer_box": refer_box},
                lambda: backends.reasoner.criterion_map(parsed.target_name, refer,
                                                        refer_box),
            )
            short, long = traced_call(
                recorder, PHASE, "rephrase",
                {"query": query, "target": parsed.target_name, "refer": refer,
                 "relation": criterion.relation_text},
                lambda: backends.reasoner.rephrase(query, parsed.target_name, refer,
                                                   criterion),
            )
            if len(short) > len(long):
                recorder.warning(PHASE, "rephrase_swapped",
                                 short_len=len(short), long_len=len(long))
                short, long = long, short
            recorder.emit(PHASE, "rephrased", short=short, long=long)

    # 4. ground boxes for the (deduplicated) expressions
    if cfg.bbox_aug:
        expressions = _dedupe_keep_order(
            [(query, "ini"), (short, "short"), (long, "long")])
    else:
        expressions = [(query, "ini")]
    boxes = []
    sources = []
    for expression, source in expressions:
        box = traced_call(
            recorder, PHASE, "ground_bbox", {"image": image, "expression": expression},
            lambda e=expression: backends.reasoner.ground_bbox(image, e),
        )
        boxes.append(box)
        sources.append(source)
    recorder.emit(PHASE, "boxes", boxes=[b.as_list() for b in boxes], sources=sources)

    bundle = PromptBundle(texts=tuple(texts), boxes=tuple(boxes),
                          box_sources=tuple(sources), criterion=criterion,
                          short_text=short, long_text=long)

    # 5. candidates per prompt type (text prompts fan out concurrently)
    text_results = gather_ordered(
        [lambda t=t: backends.segmenter.segment_text(image, t) for t in texts],
        workers=cfg.inflight_cap,
    )
    text_candidates = []
    for text, result in zip(texts, text_results):
        record_call(recorder, PHASE, "segment_text",
                    {"image": image, "phrase": text}, result)
        text_candidates.extend(result)
    recorder.emit(PHASE, "text_candidates",
                  counts=[len(r) for r in text_results])

    box_results = gather_ordered(
        [lambda b=b: backends.segmenter.segment_box(image, b) for b in boxes],
        workers=cfg.inflight_cap,
    )
    box_candidates = []
    for box, result in zip(boxes, box_results):
        record_call(recorder, PHASE, "segment_box",
                    {"image": image, "box": box}, result)
        box_candidates.append(result)
    recorder.emit(PHASE, "box_candidates", count=len(box_candidates))

    # 6. grounded-box consistency filter over text candidates
    kept, ious, fell_back = filter_text_candidates(text_candidates, boxes, cfg.tau)
    dropped = 0 if fell_back else len(text_candidates) - len(kept)
    recorder.emit(PHASE, "filter", tau=cfg.tau, ious=[round(v, 6) for v in ious],
                  kept=len(kept), dropped=dropped)
    if fell_back:
        recorder.warning(PHASE, "filter_fallback",
                         reason="filter would drop every text candidate")

    # 7. best candidate per type
    best_text = _select_candidate(kept, image, query, options, backends,
                                  recorder, "text")
    best_bbx = _select_candidate(box_candidates, image, query, options, backends,
                                 recorder, "bbx")
    if best_text is None:
        recorder.warning(PHASE, "type_missing", prompt_type="text")
    if best_bbx is None:
        recorder.warning(PHASE, "type_missing", prompt_type="bbx")

    mask_text = best_text.mask if best_text else None
    mask_bbx = best_bbx.mask if best_bbx else None

    # 8. overlap core
    omega_fallback = False
    if mask_text is not None and mask_bbx is not None:
        omega = intersect(mask_text, mask_bbx)
        if omega.is_empty():
            omega_fallback = True
            if mask_bbx.area < mask_text.area:
                omega = mask_bbx
            else:
                omega = mask_text
            recorder.warning(PHASE, "omega_fallback",
                             reason="text/box masks do not overlap")
    elif mask_text is not None:
        omega = mask_text
    elif mask_bbx is not None:
        omega = mask_bbx
    else:
        raise PipelineError("no mask candidates from any prompt type")
    if omega.is_empty():
        raise PipelineError("overlap core is empty")
    recorder.emit(PHASE, "omega", area=omega.area, fallback=omega_fallback)

    # 9. similarity-driven point prompts
    feature_map = traced_call(recorder, PHASE, "extract", {"image": image},
                              lambda: backends.features.extract(image))
    anchors = sample_anchors(omega, cfg.anchors)
    recorder.emit(PHASE, "anchors", points=[[p.x, p.y] for p in anchors])
    field_obj = accumulate(feature_map, anchors)
    p_pos = select_positive(field_obj, omega)
    p_neg = select_negative(field_obj, omega, p_pos, cfg.s_neg)
    recorder.emit(PHASE, "points", positive=[p_pos.x, p_pos.y],
                  negative=[p_neg.x, p_neg.y] if p_neg else None)
    negatives = [p_neg] if p_neg else []
    point_candidate = traced_call(
        recorder, PHASE, "segment_points",
        {"image": image, "positives": [p_pos], "negatives": negatives, "prior": None},
        lambda: backends.segmenter.segment_points(image, [p_pos], negatives,
                                                  prior=None),
    )
    mask_point = point_candidate.mask
    recorder.emit(PHASE, "mask_point", area=mask_point.area)

    return InterpretResult(
        mask_text=mask_text,
        mask_bbx=mask_bbx,
        mask_point=mask_point,
        omega=omega,
        omega_fallback=omega_fallback,
        field=field_obj,
        bundle=bundle,
        parsed=parsed,
        feature_map=feature_map,
        positives=[p_pos],
        negative=p_neg,
    )
