"""The nine-step slice workflow (reconstruct, transform, clean, binarize,
dilate, complete, combine, skeletonize, overlay) and the dataset builders
for the two networks.

All mask processing runs on the finest coefficient grid (half the image
side); upsampling to image resolution happens only when the singular
support is assembled.
"""

import concurrent.futures
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dtcwt, geometry, io, morphology, neural, solver
from .dtcwt import Subband, SubbandStack
from .errors import ConfigurationError, ParameterError


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a slice run needs; serializable for reports."""

    size: int = 128
    n_angles: int = 50
    angle_start: float = 70.0
    angle_stop: float = 110.0
    detector_spacing: float = 1.0
    noise_level: float = 0.05
    mu: float = None                 # None: data-scaled default
    tau: object = "auto"
    lam: object = "auto"
    iterations: int = 200
    wavelet_levels: int = None
    line_length: int = 7
    directional_radius: int = 9
    curvature_samples: int = 5
    gt_threshold_fraction: float = 0.1
    binarization_threshold: float = 0.5
    closing_radius: int = 3
    desk_scale_networks: bool = False
    weights_mask: str = None         # path to the binarization network
    weights_completion: str = None   # path to the completion network

    def geometry(self):
        return geometry.limited_angle_geometry(
            self.n_angles, self.angle_start, self.angle_stop,
            detector_count=self.size, detector_spacing=self.detector_spacing)

    @property
    def active_subbands(self):
        return visible_subbands(self.geometry())

    def validate(self):
        active = self.active_subbands
        if set(active) != {Subband.HL_BAR, Subband.HL}:
            names = sorted(s.name for s in active)
            raise ConfigurationError(
                "geometry's visible wedge selects subbands "
                f"{names}; the directional prior supports only HL_BAR/HL "
                "(a vertical central direction)")
        if self.line_length < 3 or self.line_length % 2 == 0:
            raise ConfigurationError("line_length must be odd and >= 3")
        return self

    def to_json(self):
        doc = {k: getattr(self, k) for k in self.__dataclass_fields__}
        return doc

    @staticmethod
    def from_json(doc):
        known = set(PipelineConfig.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown pipeline config keys: {sorted(unknown)}")
        return PipelineConfig(**doc).validate()


def desk_config(**overrides):
    """Desk-scale preset: 64-cube problems, halved network widths, element
    sizes rescaled to the 32x32 coefficient grid."""
    base = dict(size=64, iterations=150, line_length=5, directional_radius=5,
                closing_radius=3, desk_scale_networks=True)
    base.update(overrides)
    return PipelineConfig(**base).validate()


def visible_subbands(geom):
    """Subbands whose nominal edge orientation lies in the visible wedge
    (edge tangent within the measured angular range, mod 180)."""
    theta0 = 0.5 * (geom.angles[0] + geom.angles[-1])
    delta = 0.5 * (geom.angles[-1] - geom.angles[0])
    active = []
    for nu in Subband:
        sep = abs((nu.orientation_deg - theta0 + 90.0) % 180.0 - 90.0)
        if sep <= delta:
            active.append(nu)
    return tuple(active)


def _line_elements(cfg):
    return {nu: morphology.line_element(nu, cfg.line_length) for nu in Subband}


def clean_coefficients(mags, cfg):
    """Zero the invisible subbands and open the visible ones with their
    oriented line elements."""
    if mags.tag != "magnitude":
        raise ParameterError(f"expected a magnitude stack, got {mags.tag!r}")
    elements = _line_elements(cfg)
    out = np.zeros_like(mags.data)
    for nu in cfg.active_subbands:
        out[:, :, nu.value] = morphology.open_gray(mags.band(nu), elements[nu])
    return SubbandStack(out, tag="cleaned")


def _mask_spec(cfg):
    return neural.mask_net_spec(cfg.desk_scale_networks)


def _completion_spec(cfg):
    return neural.completion_net_spec(cfg.desk_scale_networks)


def extract_visible_wavefront(cleaned, mask_params, cfg):
    """Binarization network + thresholding; invisible subbands forced to
    zero after binarization."""
    probs = neural.forward(mask_params, _mask_spec(cfg), cleaned.data)
    mask = neural.binarize(probs, cfg.binarization_threshold)
    for nu in Subband:
        if nu not in cfg.active_subbands:
            mask[:, :, nu.value] = 0.0
    return SubbandStack(mask, tag="binary-mask")


# Dilation chains of the microlocal prior: the visible +/-75 subbands feed
# their 45-degree neighbors, whose dilations feed the 15-degree ones.
_CHAINS = (
    (Subband.HL_BAR, Subband.HH_BAR, Subband.LH_BAR),
    (Subband.HL, Subband.HH, Subband.LH),
)


def dilate_prior(mask, cfg):
    """Directional dilation guess: visible subbands pass through unchanged,
    each invisible subband is the dilation of its already-filled neighbor
    with the transition's parabolic element."""
    if mask.tag != "binary-mask":
        raise ParameterError(f"expected a binary-mask stack, got {mask.tag!r}")
    out = np.zeros_like(mask.data)
    for chain in _CHAINS:
        src = mask.data[:, :, chain[0].value].astype(np.uint8)
        out[:, :, chain[0].value] = src
        current = src
        for nu_from, nu_to in zip(chain, chain[1:]):
            elem = morphology.directional_element(
                nu_from, nu_to, cfg.directional_radius, cfg.curvature_samples)
            current = morphology.dilate_binary(current, elem)
            out[:, :, nu_to.value] = current
    return SubbandStack(out, tag="dilated-guess")


def complete_wavefront(guess, completion_params, cfg):
    """Completion network + thresholding over all six subbands."""
    if guess.tag != "dilated-guess":
        raise ParameterError(f"expected a dilated-guess stack, got {guess.tag!r}")
    probs = neural.forward(completion_params, _completion_spec(cfg), guess.data)
    return SubbandStack(neural.binarize(probs, cfg.binarization_threshold),
                        tag="prediction")


def singular_support(pred):
    """Pixelwise max across the six subbands, upsampled 2x nearest-neighbor
    to image resolution."""
    combined = pred.data.max(axis=2)
    return np.repeat(np.repeat(combined, 2, axis=0), 2, axis=1).astype(np.uint8)


@dataclass
class BoundaryEstimate:
    singular_support: np.ndarray
    skeleton: np.ndarray
    overlay: np.ndarray

    def __post_init__(self):
        if ((self.skeleton.astype(bool) & ~self.singular_support.astype(bool)).any()):
            raise ParameterError("skeleton must be contained in the singular support")


def render_overlay(reco, skeleton):
    """Grayscale reconstruction with the boundary estimate in pure red."""
    arr = np.asarray(reco, dtype=float)
    lo, hi = float(arr.min()), float(arr.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    gray = np.round((arr - lo) * scale).astype(np.uint8)
    rgb = np.stack([gray, gray, gray], axis=2)
    on = skeleton.astype(bool)
    rgb[on] = (255, 0, 0)
    return rgb


def boundary_estimate(ss, reco=None):
    """Skeleton of the singular support plus the display overlay."""
    skel = morphology.skeleton(ss)
    base = reco if reco is not None else np.zeros_like(ss, dtype=float)
    return BoundaryEstimate(singular_support=ss.astype(np.uint8),
                            skeleton=skel.astype(np.uint8),
                            overlay=render_overlay(base, skel))


@dataclass
class SliceResult:
    reconstruction: np.ndarray
    boundary: BoundaryEstimate
    stacks: dict                      # step name -> SubbandStack
    objective_trace: list = field(default_factory=list)


def load_weights(cfg):
    """Both parameter sets, validated against the configured presets."""
    out = []
    for role, path, spec in (("mask", cfg.weights_mask, _mask_spec(cfg)),
                             ("completion", cfg.weights_completion,
                              _completion_spec(cfg))):
        if path is None or not Path(path).exists():
            raise ConfigurationError(
                f"missing {role}-network weights file: {path!r}")
        params, stored_spec = neural.load_params(path)
        if stored_spec != spec:
            raise ConfigurationError(
                f"{path}: weights were trained for spec {stored_spec}, "
                f"config expects {spec}")
        out.append(params)
    return tuple(out)


def reconstruct_slice(sino, cfg):
    params = solver.make_params(
        cfg.geometry(), cfg.size, mu=cfg.mu, tau=cfg.tau, lam=cfg.lam,
        iterations=cfg.iterations, wavelet_levels=cfg.wavelet_levels, sino=sino)
    return solver.pdfp_solve(sino, cfg.geometry(), params, size=cfg.size)


def run_slice(sino, cfg, weights=None):
    """Full per-slice workflow; returns the reconstruction and boundary
    estimate plus every intermediate stack."""
    mask_params, completion_params = weights or load_weights(cfg)
    reco, state = reconstruct_slice(sino, cfg)
    pyr = dtcwt.dtcwt_analysis(reco, cfg.wavelet_levels
                               or dtcwt.default_levels(cfg.size))
    mags = dtcwt.finest_magnitudes(pyr)
    cleaned = clean_coefficients(mags, cfg)
    visible = extract_visible_wavefront(cleaned, mask_params, cfg)
    guess = dilate_prior(visible, cfg)
    pred = complete_wavefront(guess, completion_params, cfg)
    ss = singular_support(pred)
    boundary = boundary_estimate(ss, reco)
    stacks = {"magnitude": mags, "cleaned": cleaned, "visible": visible,
              "guess": guess, "prediction": pred}
    return SliceResult(reconstruction=reco, boundary=boundary, stacks=stacks,
                       objective_trace=state.objective_trace)


def _slice_task(args):
    values, cfg_doc = args
    import torch
    torch.set_num_threads(1)
    cfg = PipelineConfig.from_json(cfg_doc)
    sino = geometry.Sinogram(cfg.geometry(), values)
    return run_slice(sino, cfg)


def run_volume(sinos, cfg, jobs=1):
    """Independent per-slice runs, reassembled in slice order; results do
    not depend on the worker count."""
    tasks = [(s.values, cfg.to_json()) for s in sinos]
    if jobs <= 1:
        weights = load_weights(cfg)
        return [run_slice(geometry.Sinogram(cfg.geometry(), v), cfg, weights)
                for v, _ in tasks]
    load_weights(cfg)  # fail fast on missing files before spawning workers
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_slice_task, tasks, chunksize=1))


def write_slice_outputs(out_dir, result, slice_index=None):
    """Per-slice artifact layout: reco.bin, boundary.png, masks/*, metrics."""
    root = Path(out_dir)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    io.save_array(root / "reco.bin", result.reconstruction)
    io.save_png_rgb(root / "boundary.png", result.boundary.overlay)
    io.save_pgm(root / "reco.pgm", result.reconstruction)
    levels = int(np.log2(result.reconstruction.shape[0]))
    for name, stack in result.stacks.items():
        io.save_stack(root / "masks" / name, stack.data, stack.tag,
                      scale=levels - 1, subband_names=dtcwt.SUBBAND_NAMES)
    io.save_array(root / "masks" / "support.bin",
                  result.boundary.singular_support.astype(float))
    io.save_array(root / "masks" / "skeleton.bin",
                  result.boundary.skeleton.astype(float))
    metrics = {
        "slice": slice_index,
        "final_objective": result.objective_trace[-1][2] if result.objective_trace else None,
        "support_pixels": int(result.boundary.singular_support.sum()),
        "skeleton_pixels": int(result.boundary.skeleton.sum()),
    }
    io.write_json(root / "metrics.json", metrics)


# ---------------------------------------------------------------------------
# Training datasets
# ---------------------------------------------------------------------------

def ground_truth_stack(img, cfg, bands="active"):
    """Binary ground-truth wavefront masks of a clean phantom: magnitudes of
    the finest coefficients, opened per subband, thresholded at a fixed
    fraction of the stack's maximum opened magnitude."""
    pyr = dtcwt.dtcwt_analysis(img, cfg.wavelet_levels
                               or dtcwt.default_levels(cfg.size))
    mags = dtcwt.finest_magnitudes(pyr)
    elements = _line_elements(cfg)
    use = cfg.active_subbands if bands == "active" else tuple(Subband)
    opened = np.zeros_like(mags.data)
    for nu in use:
        opened[:, :, nu.value] = morphology.open_gray(mags.band(nu), elements[nu])
    eps = cfg.gt_threshold_fraction * float(opened.max())
    binary = (opened >= eps).astype(float) if eps > 0 else np.zeros_like(opened)
    return SubbandStack(binary, tag="binary-mask")


def noisy_reconstruction(img, cfg, noise_seed):
    sino = geometry.radon_forward(img, cfg.geometry())
    noisy = geometry.add_noise(sino, cfg.noise_level, noise_seed)
    reco, _ = reconstruct_slice(noisy, cfg)
    return reco


def _n1_sample(args):
    img, cfg_doc, noise_seed = args
    cfg = PipelineConfig.from_json(cfg_doc)
    reco = noisy_reconstruction(img, cfg, noise_seed)
    pyr = dtcwt.dtcwt_analysis(reco, cfg.wavelet_levels
                               or dtcwt.default_levels(cfg.size))
    cleaned = clean_coefficients(dtcwt.finest_magnitudes(pyr), cfg)
    truth = ground_truth_stack(img, cfg, bands="active")
    return cleaned.data, truth.data


def build_n1_dataset(phantoms, cfg, seed=0, jobs=1):
    """Binarization-network data: inputs are cleaned coefficient stacks of
    noisy reconstructions, truths are thresholded-opened stacks of the
    clean phantoms (visible subbands only)."""
    tasks = [(img, cfg.to_json(), seed + i) for i, (img, _) in enumerate(phantoms)]
    if jobs <= 1:
        pairs = [_n1_sample(t) for t in tasks]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            pairs = list(pool.map(_n1_sample, tasks, chunksize=4))
    inputs = np.stack([p[0] for p in pairs])
    truths = np.stack([p[1] for p in pairs])
    return inputs, truths


def build_n2_dataset(phantoms, cfg):
    """Completion-network data: inputs are the dilated ground-truth visible
    masks, truths the thresholded-opened stacks over all six subbands."""
    inputs, truths = [], []
    for img, _ in phantoms:
        visible_truth = ground_truth_stack(img, cfg, bands="active")
        inputs.append(dilate_prior(visible_truth, cfg).data)
        truths.append(ground_truth_stack(img, cfg, bands="all").data)
    return np.stack(inputs), np.stack(truths)
