"""Ellipse training phantoms and the three-ball L^p test volume.

All shapes use a pixel-center membership test (no antialiasing) so the
derived ground-truth masks stay exactly binary.  Coordinates are the unit
square/cube [-1, 1]: x maps to columns, y to slice index, z to rows, so
an xz-slice is a (row=z, col=x) image and the central projection
direction (90 degrees) points along z.
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import io
from .errors import ParameterError

CENTER_RANGE = 0.7
AXIS_RANGE = (0.08, 0.45)


@dataclass(frozen=True)
class EllipseSpec:
    """Constant-valued tilted ellipse in unit-square coordinates."""

    center: tuple
    semi_axes: tuple
    tilt: float
    value: float = 1.0

    def __post_init__(self):
        a, b = self.semi_axes
        if a <= 0 or b <= 0:
            raise ParameterError("semi-axes must be positive")
        if not self.fits_inside():
            raise ParameterError("ellipse must lie fully inside the image")

    def bounding_half_extents(self):
        a, b = self.semi_axes
        c, s = np.cos(self.tilt), np.sin(self.tilt)
        ex = np.sqrt((a * c) ** 2 + (b * s) ** 2)
        ey = np.sqrt((a * s) ** 2 + (b * c) ** 2)
        return ex, ey

    def fits_inside(self, margin=0.02):
        ex, ey = self.bounding_half_extents()
        cx, cy = self.center
        return abs(cx) + ex <= 1.0 - margin and abs(cy) + ey <= 1.0 - margin

    def contains(self, x, y):
        """Membership test for unit-square points (arrays ok)."""
        cx, cy = self.center
        a, b = self.semi_axes
        ct, st = np.cos(self.tilt), np.sin(self.tilt)
        u = (x - cx) * ct + (y - cy) * st
        w = -(x - cx) * st + (y - cy) * ct
        return (u / a) ** 2 + (w / b) ** 2 <= 1.0

    def boundary_points(self, n=2048):
        """Dense boundary samples with outward unit normals, unit coords."""
        t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        a, b = self.semi_axes
        ct, st = np.cos(self.tilt), np.sin(self.tilt)
        bx = a * np.cos(t)
        by = b * np.sin(t)
        px = self.center[0] + bx * ct - by * st
        py = self.center[1] + bx * st + by * ct
        # gradient of the implicit form, rotated back to image coords
        gu = np.cos(t) / a
        gw = np.sin(t) / b
        nx = gu * ct - gw * st
        ny = gu * st + gw * ct
        norm = np.hypot(nx, ny)
        return np.stack([px, py], axis=1), np.stack([nx / norm, ny / norm], axis=1)


@dataclass(frozen=True)
class LpBallSpec:
    """Ball {sum |x_i - c_i|^p <= r^p} in unit-cube coordinates."""

    center: tuple
    radius: float
    exponent: float = 1.5
    value: float = 1.0

    def __post_init__(self):
        if self.exponent <= 0:
            raise ParameterError("exponent p must be > 0")
        if self.radius <= 0:
            raise ParameterError("radius must be positive")
        # per-axis extent of an L^p ball is exactly its radius
        if any(abs(c) + self.radius > 1.0 for c in self.center):
            raise ParameterError("ball must lie inside the volume")


def _pixel_centers(size):
    """Unit-interval coordinates of pixel centers along one axis."""
    return (np.arange(size) + 0.5) * 2.0 / size - 1.0


def render_ellipses(specs, size):
    """Sum of member values at pixel centers inside each ellipse."""
    img = np.zeros((size, size))
    coords = _pixel_centers(size)
    x = coords[None, :]
    y = coords[:, None]
    for spec in specs:
        img += spec.value * spec.contains(x, y)
    return img


def render_lp_volume(specs, size):
    """Voxel volume as a stack of xz-slices indexed by y: shape
    (size, size, size) = (y, z, x)."""
    coords = _pixel_centers(size)
    vol = np.zeros((size, size, size))
    for spec in specs:
        cx, cy, cz = spec.center
        p = spec.exponent
        dx = np.abs(coords - cx) ** p
        dy = np.abs(coords - cy) ** p
        dz = np.abs(coords - cz) ** p
        inside = (dy[:, None, None] + dz[None, :, None] + dx[None, None, :]
                  <= spec.radius ** p)
        vol += spec.value * inside
    return vol


def xz_slice(volume, y_index):
    return volume[y_index]


def xy_slice(volume, z_index):
    """Cross-section parallel to the detector at one height."""
    return volume[:, z_index, :]


def three_ball_phantom():
    """The pinned three-ball test configuration: distinct y (slice) centers
    with overlapping xy projections, exercising depth separation."""
    return [
        LpBallSpec(center=(-0.15, -0.45, 0.35), radius=0.30),
        LpBallSpec(center=(0.10, 0.10, -0.30), radius=0.33),
        LpBallSpec(center=(0.05, 0.55, 0.20), radius=0.27),
    ]


def mid_ball_slices(specs, size):
    """Slice index through each ball's center."""
    return [int(np.clip(np.round((s.center[1] + 1.0) * size / 2.0 - 0.5),
                        0, size - 1)) for s in specs]


def sample_ellipse(rng):
    """One random in-bounds ellipse from the documented parameter ranges."""
    while True:
        center = tuple(rng.uniform(-CENTER_RANGE, CENTER_RANGE, 2))
        axes = tuple(rng.uniform(AXIS_RANGE[0], AXIS_RANGE[1], 2))
        tilt = rng.uniform(0.0, np.pi)
        try:
            return EllipseSpec(center=center, semi_axes=axes, tilt=float(tilt))
        except ParameterError:
            continue


def sample_dataset(n, size, seed):
    """Deterministic list of (image, spec) single-ellipse phantoms."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        spec = sample_ellipse(rng)
        out.append((render_ellipses([spec], size), spec))
    return out


def save_dataset(path, dataset, seed):
    """Write phantoms/NNNN.bin plus the specs.json manifest and seed."""
    root = Path(path)
    (root / "phantoms").mkdir(parents=True, exist_ok=True)
    manifest = []
    for i, (img, spec) in enumerate(dataset):
        name = f"{i:04d}.bin"
        io.save_array(root / "phantoms" / name, img)
        entry = asdict(spec)
        entry["file"] = name
        manifest.append(entry)
    (root / "specs.json").write_text(json.dumps(manifest, indent=2))
    (root / "seed.txt").write_text(f"{seed}\n")


def load_dataset(path):
    root = Path(path)
    manifest = json.loads((root / "specs.json").read_text())
    out = []
    for entry in manifest:
        img = io.load_array(root / "phantoms" / entry["file"])
        spec = EllipseSpec(center=tuple(entry["center"]),
                           semi_axes=tuple(entry["semi_axes"]),
                           tilt=entry["tilt"], value=entry["value"])
        out.append((img, spec))
    return out
