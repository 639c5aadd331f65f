"""Binary mask and box algebra used by every pipeline stage.

Masks are immutable wrappers around (height, width) boolean arrays in
row-major order. Boxes use half-open pixel intervals: x_min/y_min are
inclusive, x_max/y_max exclusive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from tarot import kernels
from tarot.errors import GeometryError


@dataclass(frozen=True, eq=False)
class BinaryMask:
    array: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.array)
        if arr.ndim != 2:
            raise GeometryError(f"mask must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise GeometryError(f"mask must be at least 1x1, got shape {arr.shape}")
        if arr.dtype != np.bool_:
            arr = arr.astype(bool)
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "array", arr)

    @property
    def width(self) -> int:
        return int(self.array.shape[1])

    @property
    def height(self) -> int:
        return int(self.array.shape[0])

    @property
    def area(self) -> int:
        """Number of set pixels."""
        return int(np.count_nonzero(self.array))

    def is_empty(self) -> bool:
        return not self.array.any()

    @classmethod
    def zeros(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def full(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.ones((height, width), dtype=bool))

    @classmethod
    def from_pixels(cls, width: int, height: int, pixels: Iterable[tuple]) -> "BinaryMask":
        """Build a mask from an iterable of (x, y) pairs."""
        arr = np.zeros((height, width), dtype=bool)
        for x, y in pixels:
            arr[y, x] = True
        return cls(arr)

    def pixels(self) -> list:
        """Set pixels as (x, y) tuples in row-major order."""
        ys, xs = np.nonzero(self.array)
        return [(int(x), int(y)) for x, y in zip(xs, ys)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.array.shape == other.array.shape and bool(
            np.array_equal(self.array, other.array)
        )

    def __repr__(self) -> str:
        return f"BinaryMask({self.width}x{self.height}, area={self.area})"


@dataclass(frozen=True)
class BBox:
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise GeometryError(f"degenerate box {self}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @property
    def area(self) -> int:
        return self.width * self.height

    def clip(self, width: int, height: int) -> "BBox":
        """Clamp to image bounds; raises if nothing remains."""
        return BBox(
            max(0, min(self.x_min, width - 1)),
            max(0, min(self.y_min, height - 1)),
            min(width, max(self.x_max, 1)),
            min(height, max(self.y_max, 1)),
        )

    def as_list(self) -> list:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True)
class PixelPoint:
    x: int
    y: int
    polarity: str = "positive"

    def __post_init__(self):
        if self.polarity not in ("positive", "negative"):
            raise GeometryError(f"bad polarity {self.polarity!r}")


@dataclass(frozen=True)
class Region:
    """One 4-connected component, carried as a full-size mask."""

    mask: BinaryMask
    area: int
    center: PixelPoint
    top_left: tuple = field(default=(0, 0))  # smallest (y, x) set pixel, as (y, x)


def _check_same_shape(a: BinaryMask, b: BinaryMask) -> None:
    if a.array.shape != b.array.shape:
        raise GeometryError(f"mask shape mismatch: {a.array.shape} vs {b.array.shape}")


def intersect(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_same_shape(a, b)
    return BinaryMask(a.array & b.array)


def union(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_same_shape(a, b)
    return BinaryMask(a.array | b.array)


def difference(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    """Pixels set in a but not in b."""
    _check_same_shape(a, b)
    return BinaryMask(a.array & ~b.array)


def complement(a: BinaryMask) -> BinaryMask:
    return BinaryMask(~a.array)


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union; defined as 0.0 when both masks are empty."""
    _check_same_shape(a, b)
    inter = int(np.count_nonzero(a.array & b.array))
    uni = int(np.count_nonzero(a.array | b.array))
    if uni == 0:
        return 0.0
    return inter / uni


def rasterize_box(box: BBox, width: int, height: int) -> BinaryMask:
    """Fill a box into a width x height mask; the box must fit the image."""
    if box.x_min < 0 or box.y_min < 0 or box.x_max > width or box.y_max > height:
        raise GeometryError(f"box {box} outside {width}x{height} image")
    arr = np.zeros((height, width), dtype=bool)
    arr[box.y_min:box.y_max, box.x_min:box.x_max] = True
    return BinaryMask(arr)


def mask_box_iou(mask: BinaryMask, box: BBox) -> float:
    return iou(mask, rasterize_box(box, mask.width, mask.height))


def mask_bbox(mask: BinaryMask) -> Optional[BBox]:
    """Tight bounding box of the set pixels, or None for an empty mask."""
    ys, xs = np.nonzero(mask.array)
    if ys.size == 0:
        return None
    return BBox(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


def region_center(mask: BinaryMask) -> PixelPoint:
    """Set pixel nearest the mass centroid; ties resolve to smallest (y, x)."""
    ys, xs = np.nonzero(mask.array)
    if ys.size == 0:
        raise GeometryError("region_center of empty mask")
    cy = ys.mean()
    cx = xs.mean()
    d2 = (ys - cy) ** 2 + (xs - cx) ** 2
    best = int(np.argmin(d2))  # nonzero() is row-major, so first min is smallest (y, x)
    return PixelPoint(int(xs[best]), int(ys[best]))


def _region_from_label(labels: np.ndarray, label: int) -> Region:
    picked = labels == label
    ys, xs = np.nonzero(picked)
    mask = BinaryMask(picked)
    return Region(
        mask=mask,
        area=int(ys.size),
        center=region_center(mask),
        top_left=(int(ys[0]), int(xs[0])),
    )


def connected_components(mask: BinaryMask, min_area: int = 1) -> list:
    """4-connected components with area >= min_area.

    Ordered by descending area; ties by the smallest (y, x) among each
    component's set pixels.
    """
    if min_area < 1:
        raise GeometryError(f"min_area must be >= 1, got {min_area}")
    labels, count = kernels.label4(np.ascontiguousarray(mask.array, dtype=np.uint8))
    regions = []
    for label in range(1, count + 1):
        region = _region_from_label(labels, label)
        if region.area >= min_area:
            regions.append(region)
    regions.sort(key=lambda r: (-r.area, r.top_left))
    return regions


def erode4(mask: BinaryMask, steps: int = 1) -> BinaryMask:
    """Erode with the 4-neighborhood cross; out-of-image neighbors count as unset."""
    arr = mask.array
    for _ in range(steps):
        padded = np.pad(arr, 1, constant_values=False)
        arr = (padded[1:-1, 1:-1] & padded[:-2, 1:-1] & padded[2:, 1:-1]
               & padded[1:-1, :-2] & padded[1:-1, 2:])
    return BinaryMask(arr)


def dilate4(mask: BinaryMask, steps: int = 1) -> BinaryMask:
    arr = mask.array
    for _ in range(steps):
        padded = np.pad(arr, 1, constant_values=False)
        arr = (padded[1:-1, 1:-1] | padded[:-2, 1:-1] | padded[2:, 1:-1]
               | padded[1:-1, :-2] | padded[1:-1, 2:])
    return BinaryMask(arr)


def giou(samples: Sequence[tuple]) -> float:
    """Mean per-sample IoU over (prediction, ground_truth) pairs."""
    if not samples:
        raise GeometryError("giou of empty sample list")
    return float(sum(iou(p, g) for p, g in samples) / len(samples))


def ciou(samples: Sequence[tuple]) -> float:
    """Cumulative IoU: total intersection over total union across samples."""
    if not samples:
        raise GeometryError("ciou of empty sample list")
    inter = 0
    uni = 0
    for p, g in samples:
        _check_same_shape(p, g)
        inter += int(np.count_nonzero(p.array & g.array))
        uni += int(np.count_nonzero(p.array | g.array))
    if uni == 0:
        return 0.0
    return inter / uni


def point_distance(a: PixelPoint, b: PixelPoint) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)
