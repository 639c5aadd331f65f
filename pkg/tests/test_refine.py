"""Refine phase: mask selection, disputed regions, verdicts, prompt repair."""
import numpy as np
import pytest

from tarot import fmap as fmap_io
from tarot.backends.base import Backends
from tarot.backends.scripted import (ScriptedFeatureExtractor,
                                     ScriptedReasoner, ScriptedSegmenter)
from tarot.backends.types import (ParsedExpression, PromptBundle,
                                  ReasoningPromptOptions)
from tarot.config import PipelineConfig
from tarot.errors import BackendSemanticError, InvariantViolation
from tarot.geometry import (BinaryMask, PixelPoint, Region, mask_bbox,
                            region_center, union)
from tarot.images import from_array
from tarot.interpret import InterpretResult
from tarot.refine import (RefineState, Verdict, build_regions, modify_prompts,
                          run_refine, select_best)
from tarot.similarity import accumulate
from tarot.trace import TraceRecorder

from conftest import mask_from_rows

SIDE = 32
ON = ReasoningPromptOptions.all_on()


def _rect(y0, x0, y1, x1, side=SIDE):
    arr = np.zeros((side, side), dtype=bool)
    arr[y0:y1, x0:x1] = True
    return BinaryMask(arr)


GT = _rect(8, 8, 20, 20)
BLOB = _rect(24, 24, 30, 30)       # disjoint 36 px appendage
STRIP = _rect(8, 16, 20, 20)       # right third of GT
CORE = _rect(8, 8, 20, 16)         # GT minus the strip


def _image():
    return from_array(np.full((SIDE, SIDE, 3), 120, dtype=np.uint8))


def _uniform_fmap():
    return fmap_io.loads(fmap_io.dumps(4, 4, 2, SIDE, SIDE, np.ones((16, 2))))


def _interp(mask_text=None, mask_bbx=None, mask_point=None, omega=None,
            boxes=None, positives=None, negative=None):
    fmap = _uniform_fmap()
    omega = omega if omega is not None else GT
    field = accumulate(fmap, [region_center(omega)])
    return InterpretResult(
        mask_text=mask_text,
        mask_bbx=mask_bbx,
        mask_point=mask_point,
        omega=omega,
        omega_fallback=False,
        field=field,
        bundle=PromptBundle(texts=("mug",),
                            boxes=tuple(boxes if boxes is not None
                                        else [mask_bbox(GT)])),
        parsed=ParsedExpression(target_name="mug"),
        feature_map=fmap,
        positives=list(positives or [region_center(omega)]),
        negative=negative,
    )


def _backends(entries=None, rules=None, gt=None, points_mask=None,
              segmenter=None):
    reasoner = ScriptedReasoner(entries or {}, rules, gt=gt)
    if segmenter is None:
        segmenter = ScriptedSegmenter(
            {}, {}, {"mode": "fixed", "candidate": (GT, 1.0)},
            {"mode": "fixed", "candidate": (points_mask or GT, 1.0)})
    return Backends(reasoner, segmenter, ScriptedFeatureExtractor(_uniform_fmap()))


def _events(recorder, name):
    return [e for e in recorder.events if e["event"] == name]


# ------------------------------------------------------------ select_best

def test_select_best_ips_off_prefers_text_without_asking():
    recorder = TraceRecorder()
    interp = _interp(mask_text=GT, mask_bbx=BLOB, mask_point=STRIP)
    backends = _backends()
    mask, name = select_best(_image(), "mug", interp, backends,
                             PipelineConfig(ips=False), recorder)
    assert (mask, name) == (GT, "text")
    assert backends.reasoner.calls["prefer_mask"] == 0
    assert _events(recorder, "select_best")[0]["via"] == "ips_off"


def test_select_best_ips_off_without_text_takes_next_in_order():
    recorder = TraceRecorder()
    interp = _interp(mask_bbx=BLOB, mask_point=STRIP)
    mask, name = select_best(_image(), "mug", interp, _backends(),
                             PipelineConfig(ips=False), recorder)
    assert (mask, name) == (BLOB, "bbx")


def test_select_best_single_mask_skips_the_reasoner():
    recorder = TraceRecorder()
    interp = _interp(mask_point=STRIP)
    backends = _backends()
    mask, name = select_best(_image(), "mug", interp, backends,
                             PipelineConfig(), recorder)
    assert (mask, name) == (STRIP, "point")
    assert backends.reasoner.calls["prefer_mask"] == 0
    assert _events(recorder, "select_best")[0]["via"] == "single"


def test_select_best_asks_preference_and_respects_it():
    recorder = TraceRecorder()
    interp = _interp(mask_text=GT, mask_bbx=BLOB, mask_point=STRIP)
    backends = _backends(rules={"prefer_mask": {"mode": "index", "index": 2}})
    mask, name = select_best(_image(), "mug", interp, backends,
                             PipelineConfig(), recorder)
    assert (mask, name) == (STRIP, "point")
    event = _events(recorder, "select_best")[0]
    assert event["via"] == "preference" and event["index"] == 2


def test_select_best_clamps_wild_preference_index():
    recorder = TraceRecorder()
    interp = _interp(mask_text=GT, mask_bbx=BLOB)
    backends = _backends(rules={"prefer_mask": {"mode": "index", "index": 9}})
    mask, name = select_best(_image(), "mug", interp, backends,
                             PipelineConfig(), recorder)
    assert name == "bbx"  # clamped to the last present mask


def test_select_best_with_nothing_is_an_invariant_violation():
    with pytest.raises(InvariantViolation):
        select_best(_image(), "mug", _interp(), _backends(), PipelineConfig(),
                    TraceRecorder())


# ---------------------------------------------------------- build_regions

def test_build_regions_splits_both_claim_directions():
    best = mask_from_rows([
        "###....",
        "###....",
        ".......",
    ])
    point = mask_from_rows([
        ".##..#.",
        ".##..#.",
        ".......",
    ])
    regions = build_regions(best, point, min_area=1)
    assert [r.area for r in regions.from_best] == [2]   # best-only column
    assert [r.area for r in regions.from_point] == [2]  # point-only column
    assert not regions.is_empty()


def test_build_regions_min_area_drops_slivers():
    best = mask_from_rows(["##.#", "##..", "....."[:4]])
    point = mask_from_rows(["##..", "##..", "...."])
    regions = build_regions(best, point, min_area=2)
    assert regions.is_empty()  # the lone disputed pixel is under min_area


# -------------------------------------------------------- modify_prompts

def _region_at(x, y, side=SIDE):
    arr = np.zeros((side, side), dtype=bool)
    arr[y, x] = True
    mask = BinaryMask(arr)
    return Region(mask=mask, area=1, center=PixelPoint(x, y), top_left=(y, x))


def _verdict(kind, x, y, source="point"):
    return Verdict(kind=kind, source=source, region=_region_at(x, y),
                   affiliated=kind == "under")


def test_modify_prompts_adds_far_positive_and_shifts_near_one():
    recorder = TraceRecorder()
    state = RefineState(best=GT, source="text",
                        positives=[PixelPoint(10, 10, "positive")], negatives=[])
    # 32x32 image: the shift radius is 5% of the diagonal, about 2.26 px
    modify_prompts(state, [_verdict("under", 20, 20)], SIDE, SIDE, 0.05,
                   recorder, round_idx=0)
    assert [(p.x, p.y) for p in state.positives] == [(10, 10), (20, 20)]
    modify_prompts(state, [_verdict("under", 11, 10)], SIDE, SIDE, 0.05,
                   recorder, round_idx=0)
    assert [(p.x, p.y) for p in state.positives] == [(11, 10), (20, 20)]
    actions = [e["action"] for e in _events(recorder, "modify")]
    assert actions == ["add", "shift"]


def test_modify_prompts_single_negative_slot_last_wins():
    recorder = TraceRecorder()
    state = RefineState(best=GT, source="text",
                        positives=[PixelPoint(10, 10, "positive")], negatives=[])
    verdicts = [_verdict("over", 25, 25, source="best"),
                _verdict("over", 28, 28, source="best")]
    modify_prompts(state, verdicts, SIDE, SIDE, 0.05, recorder, round_idx=0)
    assert [(n.x, n.y) for n in state.negatives] == [(28, 28)]
    replaced = _events(recorder, "negative_replaced")
    assert len(replaced) == 1
    assert replaced[0]["previous"] == [25, 25]


def test_modify_prompts_ignores_no_finding_verdicts():
    recorder = TraceRecorder()
    state = RefineState(best=GT, source="text", positives=[], negatives=[])
    modify_prompts(state, [Verdict(kind=None, source="best",
                                   region=_region_at(5, 5), affiliated=True)],
                   SIDE, SIDE, 0.05, recorder, round_idx=0)
    assert state.positives == [] and state.negatives == []
    assert not _events(recorder, "modify")


# ------------------------------------------------------------- run_refine

def test_run_refine_opm_off_returns_selection_untouched():
    recorder = TraceRecorder()
    interp = _interp(mask_text=CORE, mask_point=GT)
    backends = _backends(rules={"prefer_mask": {"mode": "first"}})
    out = run_refine(_image(), "mug", interp, backends,
                     PipelineConfig(opm=False), recorder)
    assert out == CORE
    final = _events(recorder, "final")[0]
    assert final["refined"] is False and final["rounds"] == 0
    assert backends.reasoner.calls["affiliation"] == 0
    assert backends.segmenter.calls["segment_points"] == 0


def test_run_refine_without_point_mask_warns_and_stops():
    recorder = TraceRecorder()
    interp = _interp(mask_text=CORE)
    out = run_refine(_image(), "mug", interp, _backends(), PipelineConfig(),
                     recorder)
    assert out == CORE
    assert _events(recorder, "no_point_mask")
    assert _events(recorder, "final")[0]["refined"] is False


def test_run_refine_agreeing_masks_finish_in_zero_rounds():
    recorder = TraceRecorder()
    interp = _interp(mask_text=GT, mask_point=GT)
    backends = _backends(rules={"prefer_mask": {"mode": "first"}})
    out = run_refine(_image(), "mug", interp, backends, PipelineConfig(),
                     recorder)
    assert out == GT
    assert _events(recorder, "final")[0]["rounds"] == 0
    assert backends.reasoner.calls["affiliation"] == 0


def test_run_refine_repairs_under_segmentation():
    recorder = TraceRecorder()
    # best misses the strip that the point mask claims
    interp = _interp(mask_text=CORE, mask_point=GT)
    backends = _backends(
        rules={"prefer_mask": {"mode": "first"},
               "affiliation": {"mode": "constant", "value": True}},
        points_mask=GT)
    out = run_refine(_image(), "mug", interp, backends, PipelineConfig(),
                     recorder)
    assert out == GT
    verdicts = _events(recorder, "verdict")
    assert [v["kind"] for v in verdicts] == ["under"]
    assert verdicts[0]["source"] == "point"
    final = _events(recorder, "final")[0]
    assert final["refined"] is True and final["rounds"] == 1
    assert _events(recorder, "guard")[0]["accepted"] is True


def test_run_refine_repairs_over_segmentation_and_replaces_negative():
    recorder = TraceRecorder()
    inflated = union(GT, BLOB)
    interp = _interp(mask_text=inflated, mask_point=GT,
                     negative=PixelPoint(0, 0, "negative"))
    backends = _backends(
        rules={"prefer_mask": {"mode": "first"},
               "affiliation": {"mode": "constant", "value": False}},
        points_mask=GT)
    out = run_refine(_image(), "mug", interp, backends, PipelineConfig(),
                     recorder)
    assert out == GT
    verdicts = _events(recorder, "verdict")
    assert [v["kind"] for v in verdicts] == ["over"]
    assert verdicts[0]["source"] == "best"
    # the pre-existing interpret negative occupied the single slot
    assert _events(recorder, "negative_replaced")
    assert _events(recorder, "final")[0]["refined"] is True


def test_run_refine_guard_rejects_off_box_masks():
    recorder = TraceRecorder()
    interp = _interp(mask_text=CORE, mask_point=GT)
    # the repaired mask lands far away from every grounded box
    far = _rect(26, 0, 32, 6)
    backends = _backends(
        rules={"prefer_mask": {"mode": "first"},
               "affiliation": {"mode": "constant", "value": True}},
        points_mask=far)
    out = run_refine(_image(), "mug", interp, backends, PipelineConfig(),
                     recorder)
    assert out == CORE  # rejected update leaves the previous best in place
    guard = _events(recorder, "guard")[0]
    assert guard["accepted"] is False
    assert _events(recorder, "final")[0]["refined"] is False


def test_run_refine_stops_at_max_rounds():
    recorder = TraceRecorder()
    inflated = union(GT, BLOB)
    interp = _interp(mask_text=inflated, mask_point=GT)
    # the segmenter keeps returning the inflated mask, so every round
    # finds the same over region again
    backends = _backends(
        rules={"prefer_mask": {"mode": "first"},
               "affiliation": {"mode": "constant", "value": False}},
        points_mask=inflated)
    cfg = PipelineConfig(max_rounds=2)
    out = run_refine(_image(), "mug", interp, backends, cfg, recorder)
    assert out == inflated
    final = _events(recorder, "final")[0]
    assert final["rounds"] == 2
    assert len(_events(recorder, "verdict")) == 2
    # round two replaced the negative planted in round one
    assert _events(recorder, "negative_replaced")


def test_run_refine_survives_affiliation_backend_failure():
    recorder = TraceRecorder()
    interp = _interp(mask_text=CORE, mask_point=GT)
    backends = _backends(rules={"prefer_mask": {"mode": "first"}})
    out = run_refine(_image(), "mug", interp, backends, PipelineConfig(),
                     recorder)
    assert out == CORE  # unanswerable affiliation keeps the selected mask
    failure = _events(recorder, "backend_failure")[0]
    assert failure["warning"] is True
    assert _events(recorder, "final")[0]["refined"] is False


def test_run_refine_survives_segmenter_failure_mid_loop():
    class ExplodingSegmenter(ScriptedSegmenter):
        def segment_points(self, image, positives, negatives=(), prior=None):
            self.calls["segment_points"] += 1
            raise BackendSemanticError("segment backend down")

    recorder = TraceRecorder()
    interp = _interp(mask_text=CORE, mask_point=GT)
    segmenter = ExplodingSegmenter(
        {}, {}, {"mode": "fixed", "candidate": (GT, 1.0)},
        {"mode": "fixed", "candidate": (GT, 1.0)})
    backends = _backends(
        rules={"prefer_mask": {"mode": "first"},
               "affiliation": {"mode": "constant", "value": True}},
        segmenter=segmenter)
    out = run_refine(_image(), "mug", interp, backends, PipelineConfig(),
                     recorder)
    assert out == CORE
    assert segmenter.calls["segment_points"] == 1
    assert _events(recorder, "backend_failure")
