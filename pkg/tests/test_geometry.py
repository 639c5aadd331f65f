"""Mask algebra and box geometry against coordinate-set oracles.

The oracles work on plain python sets of (y, x) pixels, computed with
loops and no numpy, so the vectorized implementations are checked against
an independent formulation.
"""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tarot.errors import GeometryError
from tarot.geometry import (
    BBox,
    BinaryMask,
    PixelPoint,
    ciou,
    complement,
    connected_components,
    difference,
    dilate4,
    erode4,
    giou,
    intersect,
    iou,
    mask_bbox,
    mask_box_iou,
    rasterize_box,
    region_center,
    union,
)

from conftest import mask_from_rows


# ---------------------------------------------------------------- oracles

def pixel_set(mask: BinaryMask) -> set:
    out = set()
    for y in range(mask.height):
        for x in range(mask.width):
            if mask.array[y, x]:
                out.add((y, x))
    return out


def oracle_iou(a: BinaryMask, b: BinaryMask) -> float:
    sa, sb = pixel_set(a), pixel_set(b)
    uni = sa | sb
    if not uni:
        return 0.0
    return len(sa & sb) / len(uni)


def oracle_components(mask: BinaryMask):
    """BFS over the pixel set; returns a list of frozensets."""
    todo = pixel_set(mask)
    comps = []
    while todo:
        seed = next(iter(todo))
        todo.discard(seed)
        comp = {seed}
        frontier = [seed]
        while frontier:
            y, x = frontier.pop()
            for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                if (ny, nx) in todo:
                    todo.discard((ny, nx))
                    comp.add((ny, nx))
                    frontier.append((ny, nx))
        comps.append(frozenset(comp))
    return comps


def oracle_center(mask: BinaryMask) -> tuple:
    pixels = sorted(pixel_set(mask))
    cy = sum(p[0] for p in pixels) / len(pixels)
    cx = sum(p[1] for p in pixels) / len(pixels)
    best = min(pixels, key=lambda p: ((p[0] - cy) ** 2 + (p[1] - cx) ** 2, p))
    return best


def oracle_box_set(box: BBox) -> set:
    return {(y, x) for y in range(box.y_min, box.y_max)
            for x in range(box.x_min, box.x_max)}


def random_mask(rng, max_side=24) -> BinaryMask:
    h = int(rng.integers(1, max_side + 1))
    w = int(rng.integers(1, max_side + 1))
    density = rng.uniform(0.1, 0.9)
    return BinaryMask(rng.random((h, w)) < density)


# ---------------------------------------------------------- frozen values

def test_iou_frozen_cross_shapes():
    top_row = mask_from_rows(["###", "...", "..."])
    left_col = mask_from_rows(["#..", "#..", "#.."])
    assert iou(top_row, left_col) == pytest.approx(0.2)
    assert iou(top_row, top_row) == 1.0


def test_mask_box_iou_frozen():
    # mask fills the left two columns; the box covers columns 1..2
    mask = mask_from_rows(["##..", "##..", "##..", "##.."])
    box = BBox(1, 0, 3, 4)
    assert mask_box_iou(mask, box) == pytest.approx(1.0 / 3.0)


def test_region_center_l_shape_tie_breaks_row_major():
    mask = mask_from_rows(["###", "#..", "#.."])
    assert region_center(mask) == PixelPoint(1, 0)


def test_empty_masks_have_zero_iou():
    a = BinaryMask.zeros(4, 4)
    assert iou(a, a) == 0.0


# --------------------------------------------------------- oracle battles

def test_algebra_matches_pixel_set_oracle(rng):
    for _ in range(50):
        h = int(rng.integers(1, 20))
        w = int(rng.integers(1, 20))
        a = BinaryMask(rng.random((h, w)) < 0.5)
        b = BinaryMask(rng.random((h, w)) < 0.5)
        sa, sb = pixel_set(a), pixel_set(b)
        assert pixel_set(intersect(a, b)) == sa & sb
        assert pixel_set(union(a, b)) == sa | sb
        assert pixel_set(difference(a, b)) == sa - sb
        assert pixel_set(complement(a)) == {
            (y, x) for y in range(h) for x in range(w)} - sa
        assert iou(a, b) == pytest.approx(oracle_iou(a, b), abs=0)


def test_components_match_bfs_oracle(rng):
    for _ in range(40):
        mask = random_mask(rng)
        expected = oracle_components(mask)
        got = connected_components(mask)
        assert len(got) == len(expected)
        assert {frozenset(pixel_set(r.mask)) for r in got} == set(expected)
        # ordering contract: big components first, position breaking ties
        areas = [r.area for r in got]
        assert areas == sorted(areas, reverse=True)
        for r in got:
            assert r.area == len(pixel_set(r.mask))


def test_components_min_area_filters(rng):
    mask = mask_from_rows([
        "##....#",
        "##.....",
        ".....##",
    ])
    got = connected_components(mask, min_area=2)
    assert [r.area for r in got] == [4, 2]


def test_region_center_matches_oracle(rng):
    for _ in range(60):
        mask = random_mask(rng, max_side=12)
        if mask.is_empty():
            continue
        cy, cx = oracle_center(mask)
        assert region_center(mask) == PixelPoint(cx, cy)


def test_mask_box_iou_matches_set_oracle(rng):
    for _ in range(40):
        mask = random_mask(rng, max_side=16)
        x0 = int(rng.integers(0, mask.width))
        y0 = int(rng.integers(0, mask.height))
        box = BBox(x0, y0,
                   int(rng.integers(x0 + 1, mask.width + 1)),
                   int(rng.integers(y0 + 1, mask.height + 1)))
        sm, sb = pixel_set(mask), oracle_box_set(box)
        expected = len(sm & sb) / len(sm | sb) if (sm | sb) else 0.0
        assert mask_box_iou(mask, box) == pytest.approx(expected, abs=0)


def test_erode_dilate_match_neighborhood_oracle(rng):
    for _ in range(25):
        mask = random_mask(rng, max_side=14)
        sm = pixel_set(mask)
        h, w = mask.height, mask.width
        grown = set(sm)
        for y, x in sm:
            for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                if 0 <= ny < h and 0 <= nx < w:
                    grown.add((ny, nx))
        # out-of-image neighbors count as background, so border pixels erode away
        kept = {
            (y, x) for y, x in sm
            if all(0 <= ny < h and 0 <= nx < w and (ny, nx) in sm
                   for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)))
        }
        assert pixel_set(dilate4(mask)) == grown
        assert pixel_set(erode4(mask)) == kept


# ------------------------------------------------------------- properties

mask_arrays = arrays(np.bool_, st.tuples(st.integers(1, 12), st.integers(1, 12)))

mask_array_pairs = st.tuples(st.integers(1, 12), st.integers(1, 12)).flatmap(
    lambda shape: st.tuples(arrays(np.bool_, shape), arrays(np.bool_, shape)))


@given(mask_array_pairs)
def test_difference_partition_property(pair):
    arr_a, arr_b = pair
    a, b = BinaryMask(arr_a), BinaryMask(arr_b)
    rebuilt = union(difference(a, b), intersect(a, b))
    assert rebuilt == a
    assert intersect(difference(a, b), b).is_empty()


@given(mask_arrays)
def test_de_morgan_property(arr):
    a = BinaryMask(arr)
    b = BinaryMask(np.flip(arr, axis=0).copy())
    left = complement(union(a, b))
    right = intersect(complement(a), complement(b))
    assert left == right


@given(mask_arrays)
@settings(max_examples=60)
def test_components_partition_the_mask(arr):
    mask = BinaryMask(arr)
    comps = connected_components(mask)
    total = BinaryMask.zeros(mask.width, mask.height)
    for r in comps:
        assert intersect(total, r.mask).is_empty()
        total = union(total, r.mask)
    assert total == mask


# ------------------------------------------------------------- box basics

def test_bbox_rejects_degenerate():
    with pytest.raises(GeometryError):
        BBox(3, 0, 3, 4)


def test_rasterize_box_and_tight_bbox_round_trip():
    box = BBox(1, 2, 5, 6)
    mask = rasterize_box(box, 8, 8)
    assert pixel_set(mask) == oracle_box_set(box)
    assert mask_bbox(mask) == box


def test_rasterize_box_outside_image_raises():
    with pytest.raises(GeometryError):
        rasterize_box(BBox(0, 0, 9, 2), 8, 8)


def test_mask_bbox_of_empty_is_none():
    assert mask_bbox(BinaryMask.zeros(3, 3)) is None


def test_giou_ciou_aggregate_differently():
    a_pred = mask_from_rows(["##", ".."])
    a_gt = mask_from_rows(["##", "##"])
    b_pred = mask_from_rows(["#.", ".."])
    b_gt = mask_from_rows(["#.", ".."])
    pairs = [(a_pred, a_gt), (b_pred, b_gt)]
    assert giou(pairs) == pytest.approx((0.5 + 1.0) / 2)
    assert ciou(pairs) == pytest.approx(3 / 5)
    with pytest.raises(GeometryError):
        giou([])
