"""Numpy/scipy fallbacks for the compiled kernels in ``tarot._native``."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.int32)


def label4(mask: np.ndarray):
    """Label 4-connected components; returns (int32 labels, count)."""
    labels, count = ndimage.label(mask, structure=_CROSS)
    return labels.astype(np.int32, copy=False), int(count)


def bilinear_lift(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize a grid to (out_h, out_w) with half-pixel-center bilinear interpolation."""
    gh, gw = grid.shape
    gy = np.clip((np.arange(out_h) + 0.5) * (gh / out_h) - 0.5, 0.0, gh - 1.0)
    gx = np.clip((np.arange(out_w) + 0.5) * (gw / out_w) - 0.5, 0.0, gw - 1.0)
    y0 = np.clip(gy.astype(np.intp), 0, max(gh - 2, 0))
    x0 = np.clip(gx.astype(np.intp), 0, max(gw - 2, 0))
    y1 = y0 + 1 if gh > 1 else y0
    x1 = x0 + 1 if gw > 1 else x0
    fy = (gy - y0)[:, None]
    fx = (gx - x0)[None, :]
    return (grid[np.ix_(y0, x0)] * (1.0 - fy) * (1.0 - fx)
            + grid[np.ix_(y0, x1)] * (1.0 - fy) * fx
            + grid[np.ix_(y1, x0)] * fy * (1.0 - fx)
            + grid[np.ix_(y1, x1)] * fy * fx)


def decay_argmax(field: np.ndarray, grad_x: np.ndarray, grad_y: np.ndarray,
                 allowed: np.ndarray, pos_y: int, pos_x: int) -> int:
    """Vectorized twin of the compiled decay scan; see tarot._native.decay_argmax."""
    h, w = field.shape
    ys, xs = np.nonzero(allowed)
    if ys.size == 0:
        return -1
    dy = (ys - pos_y).astype(np.float64)
    dx = (xs - pos_x).astype(np.float64)
    norm = np.sqrt(dy * dy + dx * dx)
    keep = norm > 0.0
    if not keep.any():
        return -1
    ys, xs, dy, dx, norm = ys[keep], xs[keep], dy[keep], dx[keep], norm[keep]
    scores = -(grad_x[ys, xs] * (dx / norm) + grad_y[ys, xs] * (dy / norm))
    best = int(np.argmax(scores))  # first max = smallest (y, x) in row-major order
    return int(ys[best] * w + xs[best])
