"""Image handles passed to model backends.

Backends identify images by content digest (sha256 of the encoded file
bytes), so an ImageRef carries the raw bytes alongside the decoded RGB
array.
"""
from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

from tarot.errors import InputError


@dataclass(frozen=True)
class ImageRef:
    path: str
    data: bytes
    array: np.ndarray
    digest: str

    @property
    def width(self) -> int:
        return int(self.array.shape[1])

    @property
    def height(self) -> int:
        return int(self.array.shape[0])


def _digest(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def from_bytes(data: bytes, path: str = "<memory>") -> ImageRef:
    try:
        with Image.open(io.BytesIO(data)) as img:
            arr = np.asarray(img.convert("RGB"))
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot decode image {path}: {exc}") from exc
    arr.setflags(write=False)
    return ImageRef(path=str(path), data=data, array=arr, digest=_digest(data))


def load_image(path) -> ImageRef:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read image {path}: {exc}") from exc
    return from_bytes(data, path=str(path))


def from_array(arr: np.ndarray, path: str = "<memory>") -> ImageRef:
    """Encode an RGB array to PNG bytes and wrap it; used by tests and tooling."""
    buf = io.BytesIO()
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode="RGB").save(buf, format="PNG")
    return from_bytes(buf.getvalue(), path=path)
