"""Refine phase: pick the globally best mask, then correct over- and
under-segmentation with object-aware point-prompt updates.

Pixels claimed by only one of (best mask, point mask) form disputed
regions. Each region is judged by probing dense-feature similarity from
its center and asking the reasoner whether the resulting evidence area
belongs to the queried object: a best-only region that does not belong
signals over-segmentation, a point-only region that does signals
under-segmentation. Point prompts are shifted, added, or negated
accordingly and the segmenter is re-queried, guarded by agreement with
the grounded boxes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

from tarot.backends.base import Backends
from tarot.backends.types import ReasoningPromptOptions
from tarot.calls import traced_call
from tarot.config import PipelineConfig
from tarot.errors import BackendError, InvariantViolation
from tarot.geometry import (
    BinaryMask,
    PixelPoint,
    Region,
    complement,
    connected_components,
    difference,
    mask_box_iou,
    point_distance,
)
from tarot.images import ImageRef
from tarot.interpret import InterpretResult
from tarot.similarity import anchor_similarity, region_similarity_stats
from tarot.trace import TraceRecorder

PHASE = "refine"


@dataclass
class DisputedRegions:
    from_best: List[Region] = field(default_factory=list)
    from_point: List[Region] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not self.from_best and not self.from_point


@dataclass
class Verdict:
    kind: Optional[str]  # "over", "under", or None for no finding
    source: str          # "best" or "point"
    region: Region
    affiliated: bool


@dataclass
class RefineState:
    best: BinaryMask
    source: str
    positives: List[PixelPoint]
    negatives: List[PixelPoint]
    rounds: int = 0


def select_best(image: ImageRef, query: str, interp: InterpretResult,
                backends: Backends, cfg: PipelineConfig,
                recorder: TraceRecorder):
    """Pick the starting mask among the per-type outputs.

    Fixed presentation order (text, bbx, point). With ips off the text
    mask wins outright when present; a single present mask never costs a
    reasoner call.
    """
    present = [(name, mask) for name, mask in (
        ("text", interp.mask_text),
        ("bbx", interp.mask_bbx),
        ("point", interp.mask_point),
    ) if mask is not None]
    if not present:
        raise InvariantViolation("refine phase received no masks at all")

    if not cfg.ips:
        # Presentation order puts the text mask first whenever it exists.
        name, mask = present[0]
        recorder.emit(PHASE, "select_best", source=name, via="ips_off")
        return mask, name
    if len(present) == 1:
        name, mask = present[0]
        recorder.emit(PHASE, "select_best", source=name, via="single")
        return mask, name

    options = (ReasoningPromptOptions.all_on() if cfg.rpo
               else ReasoningPromptOptions.all_off())
    masks = [mask for _, mask in present]
    index = traced_call(
        recorder, PHASE, "prefer_mask",
        {"image": image, "masks": masks, "query": query, "options": options},
        lambda: backends.reasoner.prefer_mask(image, masks, query, options),
    )
    index = min(max(int(index), 0), len(present) - 1)
    name, mask = present[index]
    recorder.emit(PHASE, "select_best", source=name, via="preference", index=index)
    return mask, name


def build_regions(best: BinaryMask, point: BinaryMask,
                  min_area: int) -> DisputedRegions:
    """Connected components of the symmetric claims, small ones dropped."""
    return DisputedRegions(
        from_best=connected_components(difference(best, point), min_area=min_area),
        from_point=connected_components(difference(point, best), min_area=min_area),
    )


def check_affiliation(image: ImageRef, interp: InterpretResult, best: BinaryMask,
                      regions: DisputedRegions, backends: Backends,
                      recorder: TraceRecorder, round_idx: int) -> List[Verdict]:
    """Judge each disputed region from its similarity evidence.

    A best-only region yields the sub-threshold area (threshold: minimum
    similarity inside the region) within the best-minus-point difference;
    a point-only region yields the super-threshold area (threshold:
    maximum inside) within the complement of best. The reasoner then says
    whether that evidence belongs with the overlap core.
    """
    fmap = interp.feature_map
    omega = interp.omega
    verdicts = []
    point = interp.mask_point
    diff_best = difference(best, point) if point is not None else best
    outside_best = complement(best)

    for source, bunch in (("best", regions.from_best), ("point", regions.from_point)):
        for region in bunch:
            sim = anchor_similarity(fmap, region.center)
            low, high = region_similarity_stats(sim, region.mask)
            if source == "best":
                area = BinaryMask((sim.values <= low) & diff_best.array)
            else:
                area = BinaryMask((sim.values >= high) & outside_best.array)
            affiliated = traced_call(
                recorder, PHASE, "affiliation",
                {"image": image, "candidate": area, "core": omega},
                lambda a=area: backends.reasoner.affiliation(image, a, omega),
            )
            if source == "best":
                kind = "over" if not affiliated else None
            else:
                kind = "under" if affiliated else None
            verdicts.append(Verdict(kind=kind, source=source, region=region,
                                    affiliated=affiliated))
            recorder.emit(PHASE, "verdict", round=round_idx, source=source,
                          kind=kind, affiliated=affiliated,
                          region_area=region.area,
                          region_center=[region.center.x, region.center.y])
    return verdicts


def modify_prompts(state: RefineState, verdicts: List[Verdict], image_w: int,
                   image_h: int, shift_dist_frac: float,
                   recorder: TraceRecorder, round_idx: int) -> None:
    """Translate verdicts into point-prompt updates.

    Under-segmentation adds a positive at the region center when it is far
    from every existing positive, otherwise shifts the nearest one there.
    Over-segmentation points the (single) negative at the region center;
    with several over verdicts the last one wins.
    """
    min_dist = shift_dist_frac * math.hypot(image_w, image_h)
    for verdict in verdicts:
        center = verdict.region.center
        if verdict.kind == "under":
            target = PixelPoint(center.x, center.y, "positive")
            distances = [point_distance(center, p) for p in state.positives]
            if not distances or min(distances) > min_dist:
                state.positives.append(target)
                action = "add"
            else:
                state.positives[distances.index(min(distances))] = target
                action = "shift"
        elif verdict.kind == "over":
            if state.negatives:
                recorder.emit(PHASE, "negative_replaced", round=round_idx,
                              previous=[state.negatives[-1].x, state.negatives[-1].y])
            state.negatives = [PixelPoint(center.x, center.y, "negative")]
            action = "negate"
        else:
            continue
        recorder.emit(PHASE, "modify", round=round_idx, action=action,
                      point=[center.x, center.y])
    recorder.emit(PHASE, "prompts", round=round_idx,
                  positives=[[p.x, p.y] for p in state.positives],
                  negatives=[[n.x, n.y] for n in state.negatives])


def run_refine(image: ImageRef, query: str, interp: InterpretResult,
               backends: Backends, cfg: PipelineConfig,
               recorder: TraceRecorder) -> BinaryMask:
    best, source = select_best(image, query, interp, backends, cfg, recorder)
    if not cfg.opm:
        recorder.emit(PHASE, "final", area=best.area, rounds=0, refined=False)
        return best
    if interp.mask_point is None:
        recorder.warning(PHASE, "no_point_mask",
                         reason="cannot refine without a point-prompt mask")
        recorder.emit(PHASE, "final", area=best.area, rounds=0, refined=False)
        return best

    state = RefineState(
        best=best,
        source=source,
        positives=list(interp.positives),
        negatives=[interp.negative] if interp.negative else [],
    )
    min_area = max(1, round(cfg.min_region_frac * image.width * image.height))
    guard_floor = cfg.tau / 2.0

    for round_idx in range(cfg.max_rounds):
        regions = build_regions(state.best, interp.mask_point, min_area)
        recorder.emit(PHASE, "regions", round=round_idx,
                      from_best=[r.area for r in regions.from_best],
                      from_point=[r.area for r in regions.from_point])
        if regions.is_empty():
            break
        try:
            verdicts = check_affiliation(image, interp, state.best, regions,
                                         backends, recorder, round_idx)
        except BackendError as exc:
            recorder.warning(PHASE, "backend_failure", round=round_idx,
                             error=str(exc))
            break
        actionable = [v for v in verdicts if v.kind is not None]
        if not actionable:
            break
        modify_prompts(state, actionable, image.width, image.height,
                       cfg.shift_dist_frac, recorder, round_idx)
        try:
            refined = traced_call(
                recorder, PHASE, "segment_points",
                {"image": image, "positives": state.positives,
                 "negatives": state.negatives, "prior": state.best},
                lambda: backends.segmenter.segment_points(
                    image, state.positives, state.negatives, prior=state.best),
            )
        except BackendError as exc:
            recorder.warning(PHASE, "backend_failure", round=round_idx,
                             error=str(exc))
            break
        if interp.bundle.boxes:
            guard_iou = max(mask_box_iou(refined.mask, b)
                            for b in interp.bundle.boxes)
        else:
            guard_iou = 1.0
        accepted = guard_iou >= guard_floor
        recorder.emit(PHASE, "guard", round=round_idx,
                      iou=round(guard_iou, 6), floor=round(guard_floor, 6),
                      accepted=accepted)
        if not accepted:
            break
        state.best = refined.mask
        state.rounds += 1

    recorder.emit(PHASE, "final", area=state.best.area, rounds=state.rounds,
                  refined=state.rounds > 0)
    return state.best
