"""Dense-feature similarity engine.

Everything here is pure and deterministic: cosine similarity between an
anchor pixel's patch vector and every patch, bilinear lifting of the grid
result to image resolution, accumulation over several anchors with
finite-difference gradients, and the positive/negative point selectors
that feed the point-prompt stage.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from tarot import kernels
from tarot.errors import GeometryError, InvariantViolation
from tarot.fmap import FeatureMap
from tarot.geometry import BinaryMask, PixelPoint, erode4, mask_bbox, region_center


@dataclass(frozen=True)
class ScalarMap:
    """A per-pixel float map at image resolution."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def height(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class SimilarityField:
    """Accumulated similarity plus its spatial gradient."""

    map: ScalarMap
    grad_x: np.ndarray
    grad_y: np.ndarray
    anchor_count: int

    def __post_init__(self):
        shape = self.map.values.shape
        if self.grad_x.shape != shape or self.grad_y.shape != shape:
            raise InvariantViolation("gradient shape differs from map shape")
        if self.anchor_count < 1:
            raise InvariantViolation("similarity field needs at least one anchor")
        bound = float(self.anchor_count) + 1e-9
        peak = float(np.abs(self.map.values).max())
        if peak > bound:
            raise InvariantViolation(
                f"similarity magnitude {peak} exceeds anchor count {self.anchor_count}"
            )


def _grid_similarity(fmap: FeatureMap, point: PixelPoint) -> np.ndarray:
    anchor = fmap.vectors[fmap.patch_index(point.x, point.y)]
    sims = fmap.vectors @ anchor
    return sims.reshape(fmap.grid_h, fmap.grid_w)


def anchor_similarity(fmap: FeatureMap, point: PixelPoint) -> ScalarMap:
    """Cosine similarity of every patch to the patch under ``point``, lifted
    to image resolution with bilinear interpolation."""
    grid = _grid_similarity(fmap, point)
    lifted = kernels.bilinear_lift(
        np.ascontiguousarray(grid, dtype=np.float64), fmap.image_h, fmap.image_w
    )
    return ScalarMap(lifted)


def _gradients(values: np.ndarray):
    # central differences inside, one-sided at the borders
    grad_x = np.empty_like(values)
    grad_y = np.empty_like(values)
    if values.shape[1] > 1:
        grad_x[:, 1:-1] = (values[:, 2:] - values[:, :-2]) / 2.0
        grad_x[:, 0] = values[:, 1] - values[:, 0]
        grad_x[:, -1] = values[:, -1] - values[:, -2]
    else:
        grad_x[:] = 0.0
    if values.shape[0] > 1:
        grad_y[1:-1, :] = (values[2:, :] - values[:-2, :]) / 2.0
        grad_y[0, :] = values[1, :] - values[0, :]
        grad_y[-1, :] = values[-1, :] - values[-2, :]
    else:
        grad_y[:] = 0.0
    return grad_x, grad_y


def accumulate(fmap: FeatureMap, anchors: Sequence[PixelPoint]) -> SimilarityField:
    """Sum the anchor similarity maps and attach finite-difference gradients.

    Summation happens at grid scale; the lift is linear, so this equals
    summing per-anchor lifted maps while doing one interpolation pass.
    """
    if not anchors:
        raise GeometryError("accumulate needs at least one anchor")
    total = np.zeros((fmap.grid_h, fmap.grid_w), dtype=np.float64)
    for point in anchors:
        total += _grid_similarity(fmap, point)
    lifted = kernels.bilinear_lift(
        np.ascontiguousarray(total), fmap.image_h, fmap.image_w
    )
    grad_x, grad_y = _gradients(lifted)
    return SimilarityField(
        map=ScalarMap(lifted), grad_x=grad_x, grad_y=grad_y, anchor_count=len(anchors)
    )


def _nearest_pixel(xs: np.ndarray, ys: np.ndarray, cx: float, cy: float) -> PixelPoint:
    """Pixel from (xs, ys) nearest (cx, cy); ties to smallest (y, x)."""
    order = np.lexsort((xs, ys))
    xs = xs[order]
    ys = ys[order]
    d2 = (xs - cx) ** 2 + (ys - cy) ** 2
    best = int(np.argmin(d2))
    return PixelPoint(int(xs[best]), int(ys[best]))


def sample_anchors(omega: BinaryMask, k: int) -> list:
    """Deterministic spread of k anchor pixels inside ``omega``.

    The mask is eroded one step to stay off boundaries (skipped when that
    would empty it), a ceil(sqrt(k)) grid is placed over the eroded bounding
    box, and every occupied cell emits the mask pixel nearest the centroid
    of its own pixels. The list is truncated or padded with the mask's
    center pixel to exactly k entries.
    """
    if k < 1:
        raise GeometryError(f"anchor count must be >= 1, got {k}")
    if omega.is_empty():
        raise GeometryError("cannot sample anchors from an empty mask")
    core = erode4(omega)
    if core.is_empty():
        core = omega
    box = mask_bbox(core)
    side = math.isqrt(k)
    if side * side < k:
        side += 1
    ys, xs = np.nonzero(core.array)
    cell_y = np.minimum(((ys - box.y_min) * side) // box.height, side - 1)
    cell_x = np.minimum(((xs - box.x_min) * side) // box.width, side - 1)
    points = []
    for cy in range(side):
        for cx in range(side):
            here = (cell_y == cy) & (cell_x == cx)
            if not here.any():
                continue
            px = xs[here]
            py = ys[here]
            points.append(_nearest_pixel(px, py, px.mean(), py.mean()))
    if len(points) > k:
        points = points[:k]
    if len(points) < k:
        pad = region_center(core)
        points.extend([pad] * (k - len(points)))
    return points


def select_positive(field: SimilarityField, omega: BinaryMask) -> PixelPoint:
    """Highest-similarity pixel inside omega; ties to smallest (y, x)."""
    if omega.is_empty():
        raise GeometryError("select_positive needs a non-empty region")
    values = field.map.values
    if values.shape != omega.array.shape:
        raise GeometryError("field and mask shapes differ")
    masked = np.where(omega.array, values, -np.inf)
    flat = int(np.argmax(masked))  # first max = smallest (y, x)
    y, x = divmod(flat, omega.width)
    return PixelPoint(int(x), int(y), "positive")


def select_negative(field: SimilarityField, omega: BinaryMask, positive: PixelPoint,
                    s_neg: float) -> Optional[PixelPoint]:
    """Pick the pixel where similarity decays fastest away from the positive.

    Candidates are pixels outside omega with similarity below
    s_neg * max(field); among them the score -grad . unit(p - positive) is
    maximized, ties to smallest (y, x). Returns None when nothing qualifies.
    """
    values = field.map.values
    if values.shape != omega.array.shape:
        raise GeometryError("field and mask shapes differ")
    threshold = s_neg * float(values.max())
    allowed = (~omega.array) & (values < threshold)
    if not allowed.any():
        return None
    flat = kernels.decay_argmax(
        values,
        np.ascontiguousarray(field.grad_x),
        np.ascontiguousarray(field.grad_y),
        np.ascontiguousarray(allowed, dtype=np.uint8),
        positive.y,
        positive.x,
    )
    if flat < 0:
        return None
    y, x = divmod(int(flat), omega.width)
    return PixelPoint(int(x), int(y), "negative")


def region_similarity_stats(scalar_map: ScalarMap, region: BinaryMask):
    """(min, max) of the map over the region's set pixels."""
    if region.is_empty():
        raise GeometryError("similarity stats over empty region")
    if scalar_map.values.shape != region.array.shape:
        raise GeometryError("map and region shapes differ")
    picked = scalar_map.values[region.array]
    return float(picked.min()), float(picked.max())
