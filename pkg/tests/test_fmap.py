"""Feature-map container and binary format."""
import struct

import numpy as np
import pytest

from tarot.errors import InputError
from tarot.fmap import MAGIC, VERSION, FeatureMap, dumps, load, loads, save


def _raw_vectors(rng, cells, dim):
    return rng.uniform(0.5, 2.0, size=(cells, dim))


def test_round_trip_preserves_geometry_and_direction(tmp_path, rng):
    vec = _raw_vectors(rng, 6, 4)
    path = tmp_path / "f.bin"
    save(path, 2, 3, 4, 24, 16, vec)
    fmap = load(path)
    assert (fmap.grid_h, fmap.grid_w, fmap.dim) == (2, 3, 4)
    assert (fmap.image_w, fmap.image_h) == (24, 16)
    # directions survive the float32 trip even though magnitudes do not
    expected = vec / np.linalg.norm(vec, axis=1)[:, None]
    assert np.allclose(fmap.vectors, expected, atol=1e-6)


def test_vectors_are_unit_normalized_and_read_only():
    vec = np.array([[3.0, 4.0], [0.0, 2.0]])
    fmap = FeatureMap(1, 2, 2, 8, 4, vec)
    assert np.allclose(np.linalg.norm(fmap.vectors, axis=1), 1.0)
    assert np.allclose(fmap.vectors[0], [0.6, 0.8])
    with pytest.raises(ValueError):
        fmap.vectors[0, 0] = 9.0


def test_header_layout_is_frozen(rng):
    data = dumps(2, 3, 4, 24, 16, _raw_vectors(rng, 6, 4))
    magic, version, gh, gw, dim, iw, ih = struct.unpack_from("<4sIIIIII", data)
    assert magic == MAGIC == b"FMAP"
    assert version == VERSION == 1
    assert (gh, gw, dim, iw, ih) == (2, 3, 4, 24, 16)
    assert len(data) == 28 + 6 * 4 * 4


def test_patch_index_maps_pixels_row_major():
    vec = np.ones((4, 2))
    fmap = FeatureMap(2, 2, 2, 8, 8, vec)
    # 4x4 pixel patches: index = gy * grid_w + gx
    assert fmap.patch_index(0, 0) == 0
    assert fmap.patch_index(3, 3) == 0
    assert fmap.patch_index(4, 0) == 1
    assert fmap.patch_index(0, 4) == 2
    assert fmap.patch_index(7, 7) == 3


def test_patch_index_clamps_ragged_last_patch():
    # 10 pixels over a 3-wide grid: cells cover 0-3, 4-6, 7-9 after clamping
    fmap = FeatureMap(1, 3, 2, 10, 1, np.ones((3, 2)))
    assert fmap.patch_index(9, 0) == 2


def test_patch_index_rejects_out_of_image():
    fmap = FeatureMap(1, 1, 2, 4, 4, np.ones((1, 2)))
    with pytest.raises(InputError):
        fmap.patch_index(4, 0)
    with pytest.raises(InputError):
        fmap.patch_index(0, -1)


def test_container_validates_shape_and_values():
    with pytest.raises(InputError):
        FeatureMap(2, 2, 2, 8, 8, np.ones((3, 2)))      # wrong cell count
    with pytest.raises(InputError):
        FeatureMap(0, 2, 2, 8, 8, np.ones((0, 2)))      # degenerate grid
    bad = np.ones((4, 2))
    bad[1, 0] = np.nan
    with pytest.raises(InputError):
        FeatureMap(2, 2, 2, 8, 8, bad)
    zero = np.ones((4, 2))
    zero[2] = 0.0
    with pytest.raises(InputError, match="patch 2"):
        FeatureMap(2, 2, 2, 8, 8, zero)


def test_loads_rejects_corrupt_headers(rng):
    good = dumps(2, 2, 3, 16, 16, _raw_vectors(rng, 4, 3))
    with pytest.raises(InputError, match="truncated"):
        loads(good[:10])
    with pytest.raises(InputError, match="magic"):
        loads(b"JUNK" + good[4:])
    bumped = good[:4] + struct.pack("<I", 9) + good[8:]
    with pytest.raises(InputError, match="version"):
        loads(bumped)
    with pytest.raises(InputError, match="body"):
        loads(good[:-4])
    with pytest.raises(InputError, match="body"):
        loads(good + b"\x00" * 4)


def test_dumps_rejects_mismatched_block(rng):
    with pytest.raises(InputError):
        dumps(2, 2, 3, 16, 16, _raw_vectors(rng, 5, 3))
