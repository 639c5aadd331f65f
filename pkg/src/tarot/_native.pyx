# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: component labeling, bilinear lifting, decay scans.

`tarot.kernels` picks this module when the extension was built and falls
back to the numpy implementations otherwise; both expose the same
signatures and must stay numerically interchangeable.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def label4(const cnp.uint8_t[:, ::1] mask):
    """Label 4-connected components of a binary mask.

    Returns (labels, count). Labels are assigned in row-major order of
    first encounter, starting at 1; background stays 0.
    """
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    labels_arr = np.zeros((h, w), dtype=np.int32)
    cdef cnp.int32_t[:, ::1] labels = labels_arr
    stack_arr = np.empty(h * w, dtype=np.intp)
    cdef cnp.intp_t[::1] stack = stack_arr
    cdef Py_ssize_t y, x, cy, cx, top
    cdef cnp.int32_t current = 0

    for y in range(h):
        for x in range(w):
            if mask[y, x] == 0 or labels[y, x] != 0:
                continue
            current += 1
            top = 0
            stack[top] = y * w + x
            top += 1
            labels[y, x] = current
            while top > 0:
                top -= 1
                cy = stack[top] // w
                cx = stack[top] % w
                if cy > 0 and mask[cy - 1, cx] != 0 and labels[cy - 1, cx] == 0:
                    labels[cy - 1, cx] = current
                    stack[top] = (cy - 1) * w + cx
                    top += 1
                if cy + 1 < h and mask[cy + 1, cx] != 0 and labels[cy + 1, cx] == 0:
                    labels[cy + 1, cx] = current
                    stack[top] = (cy + 1) * w + cx
                    top += 1
                if cx > 0 and mask[cy, cx - 1] != 0 and labels[cy, cx - 1] == 0:
                    labels[cy, cx - 1] = current
                    stack[top] = cy * w + cx - 1
                    top += 1
                if cx + 1 < w and mask[cy, cx + 1] != 0 and labels[cy, cx + 1] == 0:
                    labels[cy, cx + 1] = current
                    stack[top] = cy * w + cx + 1
                    top += 1
    return labels_arr, int(current)


def bilinear_lift(const cnp.float64_t[:, ::1] grid, Py_ssize_t out_h, Py_ssize_t out_w):
    """Resize a grid to (out_h, out_w) with half-pixel-center bilinear interpolation."""
    cdef Py_ssize_t gh = grid.shape[0]
    cdef Py_ssize_t gw = grid.shape[1]
    out_arr = np.empty((out_h, out_w), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out = out_arr
    cdef Py_ssize_t y, x, y0, x0, y1, x1
    cdef double gy, gx, fy, fx, sy, sx

    sy = (<double> gh) / (<double> out_h)
    sx = (<double> gw) / (<double> out_w)
    for y in range(out_h):
        gy = (y + 0.5) * sy - 0.5
        if gy < 0.0:
            gy = 0.0
        if gy > gh - 1.0:
            gy = gh - 1.0
        y0 = <Py_ssize_t> gy
        if y0 > gh - 2:
            y0 = gh - 2
        if y0 < 0:
            y0 = 0
        y1 = y0 + 1 if gh > 1 else y0
        fy = gy - y0
        for x in range(out_w):
            gx = (x + 0.5) * sx - 0.5
            if gx < 0.0:
                gx = 0.0
            if gx > gw - 1.0:
                gx = gw - 1.0
            x0 = <Py_ssize_t> gx
            if x0 > gw - 2:
                x0 = gw - 2
            if x0 < 0:
                x0 = 0
            x1 = x0 + 1 if gw > 1 else x0
            fx = gx - x0
            out[y, x] = (grid[y0, x0] * (1.0 - fy) * (1.0 - fx)
                         + grid[y0, x1] * (1.0 - fy) * fx
                         + grid[y1, x0] * fy * (1.0 - fx)
                         + grid[y1, x1] * fy * fx)
    return out_arr


def decay_argmax(const cnp.float64_t[:, ::1] field,
                 const cnp.float64_t[:, ::1] grad_x,
                 const cnp.float64_t[:, ::1] grad_y,
                 const cnp.uint8_t[:, ::1] allowed,
                 Py_ssize_t pos_y, Py_ssize_t pos_x):
    """Among allowed pixels, maximize the similarity decay away from (pos_x, pos_y).

    The score of pixel p is -grad(p) . unit(p - pos); ties resolve to the
    smallest (y, x). Returns the flat row-major index, or -1 when no pixel
    is allowed.
    """
    cdef Py_ssize_t h = field.shape[0]
    cdef Py_ssize_t w = field.shape[1]
    cdef Py_ssize_t y, x
    cdef Py_ssize_t best = -1
    cdef double best_score = 0.0
    cdef double dy, dx, norm, score

    for y in range(h):
        for x in range(w):
            if allowed[y, x] == 0:
                continue
            dy = <double> (y - pos_y)
            dx = <double> (x - pos_x)
            norm = sqrt(dy * dy + dx * dx)
            if norm == 0.0:
                continue
            score = -(grad_x[y, x] * (dx / norm) + grad_y[y, x] * (dy / norm))
            if best < 0 or score > best_score:
                best = y * w + x
                best_score = score
    return int(best)
