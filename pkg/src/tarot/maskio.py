"""Mask file formats: single-channel PNG and the run-length text form.

PNG masks are 8-bit single channel, 0 background / 255 foreground; the
loader thresholds at 128 so antialiased inputs still round-trip. The RLE
text form is ``W H n1 n2 n3 ...`` with runs alternating background /
foreground, starting with background, over row-major pixels.
"""
from __future__ import annotations

import numpy as np
from PIL import Image

from tarot.errors import InputError
from tarot.geometry import BinaryMask


def load_mask_png(path) -> BinaryMask:
    try:
        img = Image.open(path)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read mask image {path}: {exc}") from exc
    with img:
        arr = np.asarray(img.convert("L"))
    return BinaryMask(arr >= 128)


def save_mask_png(mask: BinaryMask, path) -> None:
    arr = np.where(mask.array, 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def encode_rle(mask: BinaryMask) -> str:
    """Encode a mask as the run-length text line."""
    flat = mask.array.reshape(-1)
    changes = np.nonzero(flat[1:] != flat[:-1])[0] + 1
    boundaries = [0, *changes.tolist(), flat.size]
    runs = [0] if flat[0] else []  # a leading zero keeps runs starting with background
    runs.extend(end - start for start, end in zip(boundaries[:-1], boundaries[1:]))
    return " ".join(str(n) for n in [mask.width, mask.height, *runs])


def decode_rle(text: str) -> BinaryMask:
    parts = text.split()
    if len(parts) < 3:
        raise InputError(f"RLE line too short: {text!r}")
    try:
        numbers = [int(p) for p in parts]
    except ValueError as exc:
        raise InputError(f"RLE line has non-integer token: {text!r}") from exc
    width, height, *runs = numbers
    if width < 1 or height < 1:
        raise InputError(f"RLE dimensions must be positive, got {width}x{height}")
    if any(n < 0 for n in runs):
        raise InputError("RLE runs must be non-negative")
    total = sum(runs)
    if total != width * height:
        raise InputError(
            f"RLE runs sum to {total}, expected {width * height} for {width}x{height}"
        )
    flat = np.zeros(width * height, dtype=bool)
    pos = 0
    value = False
    for run in runs:
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    return BinaryMask(flat.reshape(height, width))
