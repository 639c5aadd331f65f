"""Dense feature-map container and its binary file format.

File layout (little endian): magic ``FMAP``, u32 version (1), u32 grid_h,
u32 grid_w, u32 dim, u32 image_w, u32 image_h, then grid_h * grid_w * dim
float32 values in row-major patch order.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from tarot.errors import InputError

MAGIC = b"FMAP"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIII")


@dataclass(frozen=True)
class FeatureMap:
    """Patch-level feature vectors tied to the image they describe.

    ``vectors`` is (grid_h * grid_w, dim) float64 and unit-normalized; raw
    magnitudes are dropped at load so similarity is always cosine.
    """

    grid_h: int
    grid_w: int
    dim: int
    image_w: int
    image_h: int
    vectors: np.ndarray

    def __post_init__(self):
        for name in ("grid_h", "grid_w", "dim", "image_w", "image_h"):
            if getattr(self, name) < 1:
                raise InputError(f"feature map {name} must be >= 1")
        vec = np.asarray(self.vectors, dtype=np.float64)
        if vec.shape != (self.grid_h * self.grid_w, self.dim):
            raise InputError(
                f"vector block shape {vec.shape} does not match "
                f"{self.grid_h}x{self.grid_w} grid with dim {self.dim}"
            )
        if not np.isfinite(vec).all():
            raise InputError("feature map contains non-finite values")
        norms = np.linalg.norm(vec, axis=1)
        if (norms < 1e-12).any():
            bad = int(np.argmin(norms))
            raise InputError(f"feature map patch {bad} has (near-)zero vector")
        vec = vec / norms[:, None]
        vec.setflags(write=False)
        object.__setattr__(self, "vectors", vec)

    def patch_index(self, x: int, y: int) -> int:
        """Grid cell holding pixel (x, y)."""
        if not (0 <= x < self.image_w and 0 <= y < self.image_h):
            raise InputError(f"pixel ({x}, {y}) outside {self.image_w}x{self.image_h}")
        gx = min(self.grid_w - 1, x * self.grid_w // self.image_w)
        gy = min(self.grid_h - 1, y * self.grid_h // self.image_h)
        return gy * self.grid_w + gx


def dumps(grid_h: int, grid_w: int, dim: int, image_w: int, image_h: int,
          vectors: np.ndarray) -> bytes:
    """Serialize raw (not necessarily normalized) vectors to FMAP bytes."""
    vec = np.ascontiguousarray(vectors, dtype=np.float32)
    if vec.shape != (grid_h * grid_w, dim):
        raise InputError(f"vector block shape {vec.shape} does not match header")
    header = _HEADER.pack(MAGIC, VERSION, grid_h, grid_w, dim, image_w, image_h)
    return header + vec.tobytes()


def loads(data: bytes) -> FeatureMap:
    if len(data) < _HEADER.size:
        raise InputError("feature map file truncated before header")
    magic, version, grid_h, grid_w, dim, image_w, image_h = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise InputError(f"bad feature map magic {magic!r}")
    if version != VERSION:
        raise InputError(f"unsupported feature map version {version}")
    expected = grid_h * grid_w * dim * 4
    body = data[_HEADER.size:]
    if len(body) != expected:
        raise InputError(f"feature map body is {len(body)} bytes, expected {expected}")
    vec = np.frombuffer(body, dtype="<f4").reshape(grid_h * grid_w, dim)
    return FeatureMap(grid_h, grid_w, dim, image_w, image_h, vec.astype(np.float64))


def load(path) -> FeatureMap:
    with open(path, "rb") as fh:
        return loads(fh.read())


def save(path, grid_h: int, grid_w: int, dim: int, image_w: int, image_h: int,
         vectors: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(grid_h, grid_w, dim, image_w, image_h, vectors))
