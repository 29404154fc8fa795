"""Flat-binary array interchange, PGM/PNG export and JSON sidecar helpers.

The array container is deliberately minimal: a 16-byte header (magic
``LIMB``, u32 rows, u32 cols, u32 dtype code) followed by row-major
little-endian float64 values, so files stay hexdump-auditable.
"""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import DataError

MAGIC = b"LIMB"
DTYPE_F64 = 8  # bytes per element; only float64 is written


def save_array(path, values):
    """Write a 2D float array in the flat binary format."""
    arr = np.ascontiguousarray(values, dtype="<f8")
    if arr.ndim != 2:
        raise DataError(f"flat binary format stores 2D arrays, got shape {arr.shape}")
    header = MAGIC + struct.pack("<III", arr.shape[0], arr.shape[1], DTYPE_F64)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes())


def load_array(path):
    """Read a 2D float array written by :func:`save_array`."""
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise DataError(f"{path}: not a LIMB flat binary file")
    rows, cols, code = struct.unpack("<III", raw[4:16])
    if code != DTYPE_F64:
        raise DataError(f"{path}: unsupported dtype code {code}")
    expected = 16 + rows * cols * 8
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(raw)}")
    return np.frombuffer(raw[16:], dtype="<f8").reshape(rows, cols).copy()


def save_pgm(path, img):
    """Export an image as 8-bit binary PGM, min-max scaled."""
    arr = np.asarray(img, dtype=float)
    lo, hi = float(arr.min()), float(arr.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    data = np.round((arr - lo) * scale).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode())
        fh.write(data.tobytes())


def save_png_rgb(path, rgb):
    """Write an H x W x 3 uint8 array as PNG."""
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise DataError(f"expected H x W x 3 uint8 array, got {arr.shape} {arr.dtype}")
    PILImage.fromarray(arr, mode="RGB").save(path, format="PNG")


def save_stack(path_prefix, stack, tag, scale, subband_names):
    """Persist a six-subband stack: concatenated grids plus a JSON sidecar."""
    grids = np.asarray(stack, dtype=float)
    if grids.ndim != 3 or grids.shape[2] != 6:
        raise DataError(f"subband stack must be H x W x 6, got {grids.shape}")
    flat = grids.transpose(2, 0, 1).reshape(6 * grids.shape[0], grids.shape[1])
    save_array(str(path_prefix) + ".bin", flat)
    sidecar = {
        "tag": tag,
        "scale": scale,
        "subbands": list(subband_names),
        "grid_shape": [int(grids.shape[0]), int(grids.shape[1])],
    }
    Path(str(path_prefix) + ".json").write_text(json.dumps(sidecar, indent=2))


def load_stack(path_prefix):
    """Load a stack written by :func:`save_stack`; returns (H x W x 6 array, sidecar)."""
    sidecar = json.loads(Path(str(path_prefix) + ".json").read_text())
    rows, cols = sidecar["grid_shape"]
    flat = load_array(str(path_prefix) + ".bin")
    if flat.shape != (6 * rows, cols):
        raise DataError(f"{path_prefix}.bin does not match its sidecar shape")
    grids = flat.reshape(6, rows, cols).transpose(1, 2, 0)
    return grids, sidecar


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed JSON ({exc})") from exc


def sha256_of(path):
    """Hex digest of a file, used for provenance fields in reports."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
