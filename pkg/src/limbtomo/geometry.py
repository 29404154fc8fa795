"""Parallel-beam projection geometry and the discrete Radon operator pair.

Angles are measured in degrees so that 90 deg is the vertical central
direction of projection; rays at angle phi travel along
(cos phi, sin phi) in (x, y) = (column, row) pixel coordinates.  The
detector line passes through the image center with offsets in pixel
units.  The projector is ray-driven with bilinear interpolation at
0.5-pixel steps, which makes the exact adjoint available by transposing
the interpolation weights.
"""

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, ParameterError

RAY_STEP = 0.5  # sampling step along each ray, in pixels


@dataclass(frozen=True)
class ProjectionGeometry:
    """Set of projection angles plus the detector layout.

    angles: strictly increasing projection directions in degrees; the
    opening angle (max - min) must stay below 180.
    """

    angles: tuple = field(default_factory=tuple)
    detector_count: int = 128
    detector_spacing: float = 1.0

    def __post_init__(self):
        angles = tuple(float(a) for a in self.angles)
        object.__setattr__(self, "angles", angles)
        if len(angles) < 2:
            raise ParameterError("geometry needs at least 2 angles")
        if any(b <= a for a, b in zip(angles, angles[1:])):
            raise ParameterError("angles must be strictly increasing")
        if angles[-1] - angles[0] >= 180.0:
            raise ParameterError("opening angle must be < 180 degrees")
        if self.detector_count < 1:
            raise ParameterError("detector_count must be positive")
        if self.detector_spacing <= 0:
            raise ParameterError("detector_spacing must be positive")

    @property
    def n_angles(self):
        return len(self.angles)


def limited_angle_geometry(n_angles=50, start=70.0, stop=110.0, detector_count=128,
                           detector_spacing=1.0):
    """Evenly spaced angles on [start, stop], endpoints included."""
    angles = tuple(np.linspace(start, stop, n_angles))
    return ProjectionGeometry(angles, detector_count, detector_spacing)


@dataclass
class Sinogram:
    """Line-integral samples: one row per angle, one column per detector bin."""

    geometry: ProjectionGeometry
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.geometry.n_angles, self.geometry.detector_count)
        if self.values.shape != expected:
            raise DimensionError(
                f"sinogram shape {self.values.shape} does not match geometry {expected}")
        if not np.all(np.isfinite(self.values)):
            raise DimensionError("sinogram contains non-finite values")


def _require_square(img):
    arr = np.asarray(img, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"image must be square 2D, got shape {arr.shape}")
    return arr


# One sparse system matrix per (geometry, size); kept small because each
# matrix can be tens of MB.
_MATRIX_CACHE = {}
_MATRIX_LOCK = threading.Lock()
_MATRIX_CACHE_MAX = 4


def _build_system_matrix(geom, size):
    """Sparse m x n matrix of the ray-driven bilinear projector."""
    n_ang, n_det = geom.n_angles, geom.detector_count
    half = (size - 1) / 2.0
    t_max = size / np.sqrt(2.0) + 1.0
    t = np.arange(-t_max, t_max + RAY_STEP / 2, RAY_STEP)
    offsets = (np.arange(n_det) - (n_det - 1) / 2.0) * geom.detector_spacing

    rows_idx, cols_idx, weights = [], [], []
    for a, ang in enumerate(geom.angles):
        phi = np.deg2rad(ang)
        dx, dy = np.cos(phi), np.sin(phi)
        nx, ny = -np.sin(phi), np.cos(phi)
        # sample points for every (detector bin, step): shape (n_det, n_t)
        px = offsets[:, None] * nx + t[None, :] * dx + half
        py = offsets[:, None] * ny + t[None, :] * dy + half

        x0 = np.floor(px).astype(np.int64)
        y0 = np.floor(py).astype(np.int64)
        fx = px - x0
        fy = py - y0
        bins = np.broadcast_to(np.arange(n_det)[:, None], px.shape)
        for ddy, ddx, w in (
            (0, 0, (1 - fy) * (1 - fx)),
            (0, 1, (1 - fy) * fx),
            (1, 0, fy * (1 - fx)),
            (1, 1, fy * fx),
        ):
            yy = y0 + ddy
            xx = x0 + ddx
            valid = (yy >= 0) & (yy < size) & (xx >= 0) & (xx < size) & (w > 0)
            rows_idx.append(a * n_det + bins[valid])
            cols_idx.append(yy[valid] * size + xx[valid])
            weights.append(w[valid] * RAY_STEP)

    mat = sp.coo_matrix(
        (np.concatenate(weights), (np.concatenate(rows_idx), np.concatenate(cols_idx))),
        shape=(n_ang * n_det, size * size),
    )
    return mat.tocsr()


def system_matrix(geom, size):
    """Cached sparse projector for a geometry/image-size pair."""
    key = (geom.angles, geom.detector_count, geom.detector_spacing, int(size))
    with _MATRIX_LOCK:
        if key in _MATRIX_CACHE:
            return _MATRIX_CACHE[key]
    mat = _build_system_matrix(geom, int(size))
    with _MATRIX_LOCK:
        if len(_MATRIX_CACHE) >= _MATRIX_CACHE_MAX:
            _MATRIX_CACHE.pop(next(iter(_MATRIX_CACHE)))
        _MATRIX_CACHE[key] = mat
    return mat


def radon_forward(img, geom):
    """Line integrals of a square image along every (angle, offset) ray."""
    arr = _require_square(img)
    mat = system_matrix(geom, arr.shape[0])
    values = (mat @ arr.ravel()).reshape(geom.n_angles, geom.detector_count)
    return Sinogram(geom, values)


def radon_adjoint(sino, size):
    """Exact transpose of :func:`radon_forward` for the same discretization."""
    mat = system_matrix(sino.geometry, size)
    return (mat.T @ sino.values.ravel()).reshape(size, size)


def tomosynthesis(sino, size):
    """Unfiltered shift-and-add backprojection, clipped to >= 0 for display."""
    img = radon_adjoint(sino, size) / sino.geometry.n_angles
    return np.maximum(img, 0.0)


def filtered_backprojection(sino, size):
    """Plain ramp-filtered backprojection; demonstration flag only, not the
    reconstruction path."""
    n_det = sino.geometry.detector_count
    n_fft = 2 * int(2 ** np.ceil(np.log2(n_det)))
    freqs = np.fft.rfftfreq(n_fft)
    spectrum = np.fft.rfft(sino.values, n=n_fft, axis=1) * np.abs(freqs)[None, :]
    filtered = np.fft.irfft(spectrum, n=n_fft, axis=1)[:, :n_det]
    span = np.deg2rad(sino.geometry.angles[-1] - sino.geometry.angles[0])
    weight = span / max(sino.geometry.n_angles - 1, 1)
    img = radon_adjoint(Sinogram(sino.geometry, filtered), size) * weight
    return img


def add_noise(sino, level, seed):
    """Additive Gaussian noise with sigma = level * max(|values|).

    The reference magnitude is the sinogram's maximum absolute value (a
    documented convention; relative-to-max is not the only possible
    reading of "percent noise").  Deterministic for a fixed seed.
    """
    if level < 0:
        raise ParameterError("noise level must be >= 0")
    sigma = level * float(np.max(np.abs(sino.values))) if sino.values.size else 0.0
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=sino.values.shape)
    return Sinogram(sino.geometry, sino.values + noise)
