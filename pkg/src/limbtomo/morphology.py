"""Binary and flat grayscale morphology plus the oriented structuring
elements used by the wavefront pipeline.

Out-of-bounds policy is zero padding everywhere: the object is treated as
a finite subset of the integer plane, so grayscale operations restricted
to indicator images reproduce the binary ones exactly.
"""

from dataclasses import dataclass

import numpy as np

from .dtcwt import Subband, orientation_delta_deg
from .errors import ParameterError

NEG_INF = -np.inf


@dataclass(frozen=True)
class StructuringElement:
    """Small binary mask probed against an image; the anchor is the origin."""

    mask: np.ndarray
    anchor: tuple

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "anchor", (int(self.anchor[0]), int(self.anchor[1])))
        if mask.ndim != 2 or not mask.any():
            raise ParameterError("structuring element needs at least one true cell")
        ar, ac = self.anchor
        if not (0 <= ar < mask.shape[0] and 0 <= ac < mask.shape[1]):
            raise ParameterError("anchor must lie inside the mask bounds")

    @property
    def offsets(self):
        """(row, col) offsets of true cells relative to the anchor."""
        rr, cc = np.nonzero(self.mask)
        return rr - self.anchor[0], cc - self.anchor[1]

    def reflected(self):
        """Element rotated 180 degrees about its anchor."""
        mask = self.mask[::-1, ::-1]
        ar = mask.shape[0] - 1 - self.anchor[0]
        ac = mask.shape[1] - 1 - self.anchor[1]
        return StructuringElement(mask, (ar, ac))

    def to_ascii(self):
        """Render as '#'/'.' rows with the anchor marked 'o' ('@' if set)."""
        rows = []
        for r in range(self.mask.shape[0]):
            row = ""
            for c in range(self.mask.shape[1]):
                if (r, c) == self.anchor:
                    row += "@" if self.mask[r, c] else "o"
                else:
                    row += "#" if self.mask[r, c] else "."
            rows.append(row)
        return "\n".join(rows)


def _shifted(img, dr, dc, fill):
    """Image translated by (dr, dc), vacated cells set to fill."""
    out = np.full_like(img, fill)
    h, w = img.shape
    rs, re = max(dr, 0), min(h + dr, h)
    cs, ce = max(dc, 0), min(w + dc, w)
    if rs < re and cs < ce:
        out[rs:re, cs:ce] = img[rs - dr:re - dr, cs - dc:ce - dc]
    return out


def _as_binary(d):
    arr = np.asarray(d)
    if not np.isin(arr, (0, 1, True, False)).all():
        raise ParameterError("binary image must contain only {0,1}")
    return arr.astype(bool)


def dilate_binary(d, s):
    """Union of translates of the object by every element cell."""
    d = _as_binary(d)
    out = np.zeros_like(d)
    for dr, dc in zip(*s.offsets):
        out |= _shifted(d, dr, dc, False)
    return out.astype(np.uint8)


def erode_binary(d, s):
    """Intersection of translates; the element must fit inside the object."""
    d = _as_binary(d)
    out = np.ones_like(d)
    for dr, dc in zip(*s.offsets):
        out &= _shifted(d, -dr, -dc, False)
    return out.astype(np.uint8)


def open_binary(d, s):
    return dilate_binary(erode_binary(d, s), s)


def close_binary(d, s):
    return erode_binary(dilate_binary(d, s), s)


def dilate_gray(d, s):
    """Flat grayscale dilation (moving maximum over the element support).

    The image is 0 outside its bounds, matching the binary zero-padding
    policy so that indicator inputs reproduce binary morphology exactly."""
    d = np.asarray(d, dtype=float)
    out = np.full_like(d, NEG_INF)
    for dr, dc in zip(*s.offsets):
        np.maximum(out, _shifted(d, dr, dc, 0.0), out)
    return out


def erode_gray(d, s):
    """Flat grayscale erosion (moving minimum), image 0 outside bounds."""
    d = np.asarray(d, dtype=float)
    out = np.full_like(d, np.inf)
    for dr, dc in zip(*s.offsets):
        np.minimum(out, _shifted(d, -dr, -dc, 0.0), out)
    return out


def open_gray(d, s):
    return dilate_gray(erode_gray(d, s), s)


def close_gray(d, s):
    return erode_gray(dilate_gray(d, s), s)


def cross_element():
    mask = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    return StructuringElement(mask, (1, 1))


def disk_element(radius):
    """Euclidean disk mask; radius 0 is the single anchor pixel."""
    if radius < 0:
        raise ParameterError("radius must be >= 0")
    r = int(radius)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return StructuringElement(yy * yy + xx * xx <= radius * radius, (r, r))


def skeleton(d, s=None):
    """Morphological skeleton: union over k of the k-fold erosion minus its
    opening, up to the last k before the erosion empties the object."""
    d = _as_binary(d).astype(np.uint8)
    s = s or cross_element()
    out = np.zeros_like(d)
    eroded = d
    while eroded.any():
        out |= eroded & ~open_binary(eroded, s)
        eroded = erode_binary(eroded, s)
    return out


def _bresenham_cells(p0, p1):
    """Integer cells on the segment from p0 to p1 (inclusive)."""
    r0, c0 = p0
    r1, c1 = p1
    cells = []
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r1 >= r0 else -1
    sc = 1 if c1 >= c0 else -1
    if dc >= dr:
        err = dc // 2
        r = r0
        for c in range(c0, c1 + sc, sc):
            cells.append((r, c))
            err -= dr
            if err < 0:
                r += sr
                err += dc
    else:
        err = dr // 2
        c = c0
        for r in range(r0, r1 + sr, sr):
            cells.append((r, c))
            err -= dc
            if err < 0:
                c += sc
                err += dr
    return cells


def _round_toward_zero_ties(v):
    """Round half-integers toward zero, everything else to nearest."""
    out = np.round(v)
    ties = np.isclose(np.abs(v - np.trunc(v)), 0.5)
    out[ties] = np.trunc(v[ties])
    return out.astype(int)


def _element_from_cells(cells):
    cells = np.asarray(sorted(set(map(tuple, cells))))
    rmin, cmin = cells.min(axis=0)
    rmax, cmax = cells.max(axis=0)
    mask = np.zeros((rmax - rmin + 1, cmax - cmin + 1), dtype=bool)
    mask[cells[:, 0] - rmin, cells[:, 1] - cmin] = True
    return StructuringElement(mask, (-rmin, -cmin))


def line_element(nu, length=7):
    """Straight segment through the anchor at the subband's nominal
    orientation, one cell per step of the dominant axis, ties broken
    toward the anchor row/column."""
    if length < 3 or length % 2 == 0:
        raise ParameterError("line element length must be odd and >= 3")
    theta = np.deg2rad(Subband(nu).orientation_deg)
    half = length // 2
    steps = np.arange(-half, half + 1)
    if abs(np.tan(theta)) <= 1.0:
        cols = steps
        rows = _round_toward_zero_ties(np.tan(theta) * steps)
    else:
        rows = steps
        cols = _round_toward_zero_ties(steps / np.tan(theta))
    return _element_from_cells(list(zip(rows, cols)))


# The four subband transitions the microlocal prior dilates along:
# each visible subband feeds its angular neighbor toward +/-15 degrees.
DIRECTIONAL_TRANSITIONS = (
    (Subband.HL_BAR, Subband.HH_BAR),
    (Subband.HH_BAR, Subband.LH_BAR),
    (Subband.HL, Subband.HH),
    (Subband.HH, Subband.LH),
)


def directional_element(nu_from, nu_to, radius=9, curvature_samples=5):
    """Union of parabolic arcs tangent to the source subband's orientation
    at the anchor, curving toward the target subband's orientation.

    Each arc is y = a*sign(x)*x^2 on x in [-1, 1] (scaled by the radius),
    rasterized by joining consecutive integer-stepped arc points with
    segments; curvature values a sample [0, 1] uniformly."""
    nu_from, nu_to = Subband(nu_from), Subband(nu_to)
    if (nu_from, nu_to) not in DIRECTIONAL_TRANSITIONS:
        raise ParameterError(
            f"unsupported transition {nu_from.name} -> {nu_to.name}")
    if radius < 3:
        raise ParameterError("radius must be >= 3")
    if curvature_samples < 1:
        raise ParameterError("curvature_samples must be >= 1")

    theta_f = np.deg2rad(nu_from.orientation_deg)
    # Tangent u and normal w in (row, col); curving sign chosen so the arc
    # bends from the source orientation toward the target orientation.
    u = np.array([np.sin(theta_f), np.cos(theta_f)])
    w = np.array([np.cos(theta_f), -np.sin(theta_f)])
    sigma = np.sign(orientation_delta_deg(nu_from, nu_to))

    if curvature_samples == 1:
        curvatures = [0.0]
    else:
        curvatures = np.linspace(0.0, 1.0, curvature_samples)
    cells = []
    ks = np.arange(-radius, radius + 1)
    for a in curvatures:
        x = ks.astype(float)
        y = sigma * a * np.sign(x) * x * x / radius
        pts = np.round(x[:, None] * u[None, :] + y[:, None] * w[None, :]).astype(int)
        for p0, p1 in zip(pts[:-1], pts[1:]):
            cells.extend(_bresenham_cells(tuple(p0), tuple(p1)))
        cells.append(tuple(pts[-1]))
    return _element_from_cells(cells)
