"""Dual-tree complex wavelet transform with six oriented subbands per scale.

Level 1 applies an odd-length near-symmetric biorthogonal pair without
decimation; the two trees live in the even/odd sample phases.  Levels 2+
apply the quarter-shift orthonormal pair to the interleaved two-tree
composite, so the symmetric extension of the composite automatically
supplies each tree's extension from the time-reversed opposite tree.
Complex subbands come from the unitary quad-to-complex pairing of the
four (row-tree, column-tree) phase combinations.

Alongside the inverse transform (synthesis), the exact adjoint of the
analysis map is provided; the solver needs a true transpose, not an
approximate inverse.
"""

import enum
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, ParameterError


class Subband(enum.IntEnum):
    """Index of the six oriented subbands, with their nominal edge
    orientations in degrees (angles clockwise from the column axis,
    row index pointing down)."""

    LH_BAR = 0   # -15 deg
    HH_BAR = 1   # -45 deg
    HL_BAR = 2   # -75 deg
    HL = 3       # +75 deg
    HH = 4       # +45 deg
    LH = 5       # +15 deg

    @property
    def orientation_deg(self):
        return (-15.0, -45.0, -75.0, 75.0, 45.0, 15.0)[self.value]

    @property
    def mirror(self):
        """Partner subband at the opposite orientation sign."""
        pairs = {0: 5, 1: 4, 2: 3, 3: 2, 4: 1, 5: 0}
        return Subband(pairs[self.value])

    @property
    def neighbors(self):
        """The two subbands 30 degrees away on the orientation circle
        (mod 180)."""
        order = sorted(Subband, key=lambda s: s.orientation_deg)
        i = order.index(self)
        return (order[i - 1], order[(i + 1) % 6])


SUBBAND_NAMES = tuple(s.name for s in Subband)


def orientation_delta_deg(nu_from, nu_to):
    """Signed rotation (degrees, in (-90, 90]) from one subband's nominal
    orientation to another's, on the mod-180 orientation circle."""
    delta = Subband(nu_to).orientation_deg - Subband(nu_from).orientation_deg
    while delta > 90:
        delta -= 180
    while delta <= -90:
        delta += 180
    return delta

STACK_TAGS = ("magnitude", "cleaned", "binary-mask", "dilated-guess", "prediction")
_BINARY_TAGS = ("binary-mask", "dilated-guess", "prediction")


@dataclass
class SubbandStack:
    """Six same-sized real grids indexed by :class:`Subband` on axis 2."""

    data: np.ndarray
    tag: str

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 3 or self.data.shape[2] != 6:
            raise DimensionError(f"subband stack must be H x W x 6, got {self.data.shape}")
        if self.tag not in STACK_TAGS:
            raise ParameterError(f"unknown stack tag {self.tag!r}")
        if self.tag in _BINARY_TAGS and not np.isin(self.data, (0.0, 1.0)).all():
            raise ParameterError(f"stack tagged {self.tag!r} must be binary")

    def band(self, nu):
        return self.data[:, :, Subband(nu).value]


# ---------------------------------------------------------------------------
# Filter tables
# ---------------------------------------------------------------------------

# Near-symmetric (13,19)-tap biorthogonal pair for level 1, as published
# in the standard tables for this transform family.
_NEAR_SYM_LO = np.array([
    -0.0017578, 0.0, 0.0222656, -0.046875, -0.0482422, 0.296875, 0.5554688,
    0.296875, -0.0482422, -0.046875, 0.0222656, 0.0, -0.0017578])
_NEAR_SYM_HI = np.array([
    -0.0000706, 0.0, 0.0013419, -0.0018834, -0.0071568, 0.0238560, 0.0556431,
    -0.0516881, -0.2997576, 0.5594308, -0.2997576, -0.0516881, 0.0556431,
    0.0238560, -0.0071568, -0.0018834, 0.0013419, 0.0, -0.0000706])

# 14-tap quarter-shift orthonormal lowpass (levels >= 2); the tree pair is
# this filter and its time reverse.
_QSHIFT_LO = np.array([
    0.0032531427636532, -0.0038832119991585, 0.0346603468448535,
    -0.0388728012688278, -0.1172038876991153, 0.2752953846688820,
    0.7561456438925225, 0.5688104207121227, 0.0118660920337970,
    -0.1067118046866654, 0.0238253847949203, 0.0170252238815540,
    -0.0054394759372741, -0.0045568956284755])


def _alternate_negate(h, start):
    out = h.copy()
    out[start::2] = -out[start::2]
    return out


@dataclass(frozen=True)
class FilterBank:
    """First-level biorthogonal pair plus the quarter-shift pair for
    deeper levels, with the matching synthesis filters."""

    first_lo: np.ndarray
    first_hi: np.ndarray
    first_lo_synth: np.ndarray
    first_hi_synth: np.ndarray
    qshift_lo_even: np.ndarray   # lowpass applied to the even (tree a) lane
    qshift_lo_odd: np.ndarray
    qshift_hi_even: np.ndarray
    qshift_hi_odd: np.ndarray


def default_filter_bank():
    lo, hi = _NEAR_SYM_LO, _NEAR_SYM_HI
    # Synthesis pair for the undecimated first level: modulated partners,
    # chosen so lowpass*lowpass_synth + highpass*highpass_synth = identity.
    n_hi = np.arange(len(hi))
    n_lo = np.arange(len(lo))
    first_lo_synth = -hi * ((-1.0) ** n_hi)
    first_hi_synth = lo * ((-1.0) ** n_lo)

    hl = _QSHIFT_LO
    hi_odd_start = (len(hl) // 2 + 1) % 2
    q_hi_a = _alternate_negate(hl, hi_odd_start)
    return FilterBank(
        first_lo=lo,
        first_hi=hi,
        first_lo_synth=first_lo_synth,
        first_hi_synth=first_hi_synth,
        qshift_lo_even=hl[::-1].copy(),
        qshift_lo_odd=hl.copy(),
        qshift_hi_even=q_hi_a,
        qshift_hi_odd=q_hi_a[::-1].copy(),
    )


# ---------------------------------------------------------------------------
# 1D building blocks (always along axis 0; transpose for the other axis)
# ---------------------------------------------------------------------------

def _reflect_idx(n, pre, post):
    """Symmetric (edge-repeating) extension indices for range(-pre, n+post)."""
    idx = np.arange(-pre, n + post)
    idx = np.mod(idx, 2 * n)
    return np.where(idx >= n, 2 * n - 1 - idx, idx)


def _colfilter(x, h):
    """Centered convolution along axis 0 with symmetric extension; output
    height equals input height (h must have odd length)."""
    m = len(h) // 2
    xe = x[_reflect_idx(x.shape[0], m, m)]
    win = sliding_window_view(xe, len(h), axis=0)
    return win @ h[::-1]


def _colfilter_adj(y, h, n):
    """Exact transpose of :func:`_colfilter` back to height ``n``."""
    m = len(h) // 2
    g = h[::-1]
    pad = np.zeros((len(h) - 1,) + y.shape[1:], dtype=y.dtype)
    ypad = np.concatenate([pad, y, pad], axis=0)
    win = sliding_window_view(ypad, len(h), axis=0)
    full = win @ g[::-1]
    out = np.zeros((n,) + y.shape[1:], dtype=y.dtype)
    np.add.at(out, _reflect_idx(n, m, m), full)
    return out


def _coldfilt(x, h_even, h_odd):
    """Quarter-shift analysis along axis 0 of a two-tree composite;
    decimates by two.  Rows must be a multiple of 4."""
    r = x.shape[0]
    if r % 4:
        raise DimensionError(f"composite height {r} not a multiple of 4")
    L = len(h_even)
    xe = x[_reflect_idx(r, L, L)]
    lane_a, lane_b = xe[0::2], xe[1::2]
    ya = (sliding_window_view(lane_a, L, axis=0) @ h_even[::-1])[1::2]
    yb = (sliding_window_view(lane_b, L, axis=0) @ h_odd[::-1])[1::2]
    out = np.empty((r // 2,) + x.shape[1:], dtype=ya.dtype)
    out[0::2], out[1::2] = ya, yb
    return out


def _coldfilt_adj(y, h_even, h_odd, r):
    """Exact transpose of :func:`_coldfilt` back to composite height ``r``."""
    L = len(h_even)
    n_full = (r + 2 * L) // 2 - L + 1  # each lane's pre-decimation output length
    acc = np.zeros((r + 2 * L,) + y.shape[1:], dtype=y.dtype)
    for lane, h in ((0, h_even), (1, h_odd)):
        yl = y[lane::2]
        yfull = np.zeros((n_full,) + y.shape[1:], dtype=y.dtype)
        yfull[1::2] = yl
        g = h[::-1]
        pad = np.zeros((L - 1,) + y.shape[1:], dtype=y.dtype)
        ypad = np.concatenate([pad, yfull, pad], axis=0)
        acc[lane::2] = sliding_window_view(ypad, L, axis=0) @ g[::-1]
    out = np.zeros((r,) + y.shape[1:], dtype=y.dtype)
    np.add.at(out, _reflect_idx(r, L, L), acc)
    return out


def _colifilt(y, h_for_even, h_for_odd):
    """Quarter-shift synthesis along axis 0: upsample the composite by two.

    Each lane is zero-interleaved, extended across the trees, and filtered;
    the filters are the opposite tree's analysis filters (orthonormal pair,
    so synthesis equals the time-reversed analysis)."""
    q = y.shape[0]
    L = len(h_for_even)
    pre_t, post_t = (L - 1) // 2, L // 2
    ext_pre, ext_post = (pre_t + 1) // 2, post_t // 2
    ye = y[_reflect_idx(q, 2 * ext_pre, 2 * ext_post)]
    out = np.empty((2 * q,) + y.shape[1:], dtype=y.dtype)
    for lane, h in ((0, h_for_even), (1, h_for_odd)):
        lane_ext = ye[lane::2]                      # per-tree, n + ext_pre + ext_post
        n_exp = 2 * (q // 2) + pre_t + post_t
        exp = np.zeros((n_exp,) + y.shape[1:], dtype=y.dtype)
        exp[(pre_t + 1) % 2::2] = lane_ext
        out[lane::2] = sliding_window_view(exp, L, axis=0) @ h[::-1]
    return out


def _rowfilter(x, h):
    return _colfilter(x.T, h).T


def _q2c(band):
    a = band[0::2, 0::2]
    b = band[0::2, 1::2]
    c = band[1::2, 0::2]
    d = band[1::2, 1::2]
    s = np.sqrt(0.5)
    z1 = ((a - d) + 1j * (b + c)) * s
    z2 = ((a + d) + 1j * (b - c)) * s
    return z1, z2


def _c2q(z1, z2):
    s = np.sqrt(0.5)
    out = np.empty((2 * z1.shape[0], 2 * z1.shape[1]))
    out[0::2, 0::2] = (z1.real + z2.real) * s
    out[0::2, 1::2] = (z1.imag + z2.imag) * s
    out[1::2, 0::2] = (z1.imag - z2.imag) * s
    out[1::2, 1::2] = (z2.real - z1.real) * s
    return out


# Placement of the quad-to-complex outputs into the Subband order: for each
# band pair from _q2c, (subband of z1, subband of z2).  z1 carries the
# negative nominal orientation; pinned by the orientation-selectivity tests.
_PAIRING = {
    "h": (Subband.LH_BAR, Subband.LH),   # lowpass cols, highpass rows: +/-15
    "v": (Subband.HL_BAR, Subband.HL),   # highpass cols: +/-75
    "d": (Subband.HH_BAR, Subband.HH),   # highpass both: +/-45
}


@dataclass
class CoeffPyramid:
    """Complex detail grids per level (finest first) plus the interleaved
    two-tree lowpass composite.  With J = levels, details[k] holds scale
    j = J - k; the finest detail grid has half the image side."""

    details: list = field(default_factory=list)
    approx: np.ndarray = None
    levels: int = 0

    @property
    def finest(self):
        return self.details[0]


def _check_analysis_args(side, levels):
    if levels < 1:
        raise ParameterError("levels must be >= 1")
    if side % (1 << levels):
        raise DimensionError(f"image side {side} not divisible by 2^{levels}")
    if (side >> (levels - 1)) < 4:
        raise DimensionError(f"side {side} too small for {levels} levels")


def default_levels(side):
    """Full pyramid depth for a power-of-two side (6 levels at 128)."""
    return max(int(np.log2(side)) - 1, 1)


def dtcwt_analysis(img, levels=None, filters=None):
    """Forward transform: six complex subbands per level plus lowpass."""
    x = np.asarray(img, dtype=float)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise DimensionError(f"image must be square 2D, got {x.shape}")
    side = x.shape[0]
    if side & (side - 1):
        raise DimensionError(f"image side {side} is not a power of two")
    if levels is None:
        levels = default_levels(side)
    _check_analysis_args(side, levels)
    fb = filters or default_filter_bank()

    details = []
    lo0 = _colfilter(x, fb.first_lo)
    hi0 = _colfilter(x, fb.first_hi)
    lolo = _rowfilter(lo0, fb.first_lo)
    band_v = _rowfilter(lo0, fb.first_hi)
    band_h = _rowfilter(hi0, fb.first_lo)
    band_d = _rowfilter(hi0, fb.first_hi)
    details.append(_place_bands(band_h, band_v, band_d))

    for _ in range(1, levels):
        lo0 = _coldfilt(lolo, fb.qshift_lo_even, fb.qshift_lo_odd)
        hi0 = _coldfilt(lolo, fb.qshift_hi_even, fb.qshift_hi_odd)
        lolo = _coldfilt(lo0.T, fb.qshift_lo_even, fb.qshift_lo_odd).T
        band_v = _coldfilt(lo0.T, fb.qshift_hi_even, fb.qshift_hi_odd).T
        band_h = _coldfilt(hi0.T, fb.qshift_lo_even, fb.qshift_lo_odd).T
        band_d = _coldfilt(hi0.T, fb.qshift_hi_even, fb.qshift_hi_odd).T
        details.append(_place_bands(band_h, band_v, band_d))

    return CoeffPyramid(details=details, approx=lolo, levels=levels)


def _place_bands(band_h, band_v, band_d):
    out = np.empty((band_h.shape[0] // 2, band_h.shape[1] // 2, 6), dtype=complex)
    for key, band in (("h", band_h), ("v", band_v), ("d", band_d)):
        z1, z2 = _q2c(band)
        s1, s2 = _PAIRING[key]
        out[:, :, s1.value] = z1
        out[:, :, s2.value] = z2
    return out


def _unplace_bands(detail):
    bands = {}
    for key in ("h", "v", "d"):
        s1, s2 = _PAIRING[key]
        bands[key] = _c2q(detail[:, :, s1.value], detail[:, :, s2.value])
    return bands["h"], bands["v"], bands["d"]


def dtcwt_synthesis(pyr, filters=None):
    """Inverse transform of :func:`dtcwt_analysis`."""
    fb = filters or default_filter_bank()
    lolo = pyr.approx
    for detail in pyr.details[:0:-1]:
        band_h, band_v, band_d = _unplace_bands(detail)
        if band_h.shape[0] != lolo.shape[0]:
            raise DimensionError("pyramid level shapes are inconsistent")
        lo0 = (_colifilt(lolo.T, fb.qshift_lo_odd, fb.qshift_lo_even).T
               + _colifilt(band_v.T, fb.qshift_hi_odd, fb.qshift_hi_even).T)
        hi0 = (_colifilt(band_h.T, fb.qshift_lo_odd, fb.qshift_lo_even).T
               + _colifilt(band_d.T, fb.qshift_hi_odd, fb.qshift_hi_even).T)
        lolo = (_colifilt(lo0, fb.qshift_lo_odd, fb.qshift_lo_even)
                + _colifilt(hi0, fb.qshift_hi_odd, fb.qshift_hi_even))
    band_h, band_v, band_d = _unplace_bands(pyr.details[0])
    lo0 = _rowfilter(lolo, fb.first_lo_synth) + _rowfilter(band_v, fb.first_hi_synth)
    hi0 = _rowfilter(band_h, fb.first_lo_synth) + _rowfilter(band_d, fb.first_hi_synth)
    return _colfilter(lo0, fb.first_lo_synth) + _colfilter(hi0, fb.first_hi_synth)


def dtcwt_adjoint(pyr, filters=None):
    """Exact transpose of the analysis map (real inner products, complex
    coefficients read as real pairs).  A pyramid with ``approx=None`` is
    treated as zero lowpass, which is how the solver applies W^T to
    detail-only coefficient vectors."""
    fb = filters or default_filter_bank()
    levels = pyr.levels
    finest_side = pyr.details[0].shape[0] * 2

    if pyr.approx is not None:
        lolo_bar = np.asarray(pyr.approx, dtype=float)
    else:
        side = finest_side >> (levels - 1)
        lolo_bar = np.zeros((side, side))

    for detail in pyr.details[:0:-1]:
        band_h, band_v, band_d = _unplace_bands(detail)
        r = band_h.shape[0] * 2
        lo0_bar = (_coldfilt_adj(lolo_bar.T, fb.qshift_lo_even, fb.qshift_lo_odd, r).T
                   + _coldfilt_adj(band_v.T, fb.qshift_hi_even, fb.qshift_hi_odd, r).T)
        hi0_bar = (_coldfilt_adj(band_h.T, fb.qshift_lo_even, fb.qshift_lo_odd, r).T
                   + _coldfilt_adj(band_d.T, fb.qshift_hi_even, fb.qshift_hi_odd, r).T)
        lolo_bar = (_coldfilt_adj(lo0_bar, fb.qshift_lo_even, fb.qshift_lo_odd, r)
                    + _coldfilt_adj(hi0_bar, fb.qshift_hi_even, fb.qshift_hi_odd, r))

    band_h, band_v, band_d = _unplace_bands(pyr.details[0])
    n = finest_side
    lo0_bar = (_colfilter_adj(lolo_bar.T, fb.first_lo, n).T
               + _colfilter_adj(band_v.T, fb.first_hi, n).T)
    hi0_bar = (_colfilter_adj(band_h.T, fb.first_lo, n).T
               + _colfilter_adj(band_d.T, fb.first_hi, n).T)
    return (_colfilter_adj(lo0_bar, fb.first_lo, n)
            + _colfilter_adj(hi0_bar, fb.first_hi, n))


def finest_magnitudes(pyr):
    """Absolute values of the finest-scale coefficients as a stack."""
    if not pyr.details:
        raise ParameterError("pyramid has no detail levels")
    return SubbandStack(np.abs(pyr.finest), tag="magnitude")


# Detail-coefficient flattening used by the solver's W operator.

def details_to_vec(details):
    return np.concatenate([d.ravel() for d in details])


def vec_to_details(vec, shapes):
    out, pos = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        out.append(vec[pos:pos + size].reshape(shape))
        pos += size
    return out
