"""Primal-dual fixed-point solver for the nonnegativity-constrained,
complex-wavelet-sparse least-squares reconstruction.

Minimizes 0.5*||A f - m||^2 + mu*||W f||_1 over f >= 0, where A is the
ray-driven projector and W maps an image to its complex detail
coefficients (all scales, lowpass excluded from the penalty).  W^T is the
exact adjoint of the analysis map, not the synthesis inverse.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import dtcwt, geometry
from .errors import ConfigurationError, ParameterError


@dataclass
class SolverParams:
    """Step sizes and weights; `validate` enforces the convergence bounds
    0 < tau < 2/tau_lip and 0 < lambda < 1/lambda_max(W W^T)."""

    mu: float
    tau: float
    lam: float
    iterations: int = 200
    wavelet_levels: int = None

    def validate(self, tau_lip, lam_max):
        if self.mu < 0:
            raise ConfigurationError("mu must be >= 0")
        if self.iterations < 1:
            raise ConfigurationError("iterations must be >= 1")
        if not (0 < self.tau < 2.0 / tau_lip):
            raise ConfigurationError(
                f"tau={self.tau:.4g} outside (0, 2/tau_lip={2.0 / tau_lip:.4g})")
        if not (0 < self.lam < 1.0 / lam_max):
            raise ConfigurationError(
                f"lambda={self.lam:.4g} outside (0, 1/lambda_max={1.0 / lam_max:.4g})")


@dataclass
class SolverState:
    """Final iterates plus the per-iteration objective decomposition."""

    f: np.ndarray
    v: np.ndarray
    y: np.ndarray
    objective_trace: list = field(default_factory=list)  # (data, reg, total)

    @property
    def objectives(self):
        return np.array([row[2] for row in self.objective_trace])


def soft_threshold_complex(c, mu):
    """Radial shrinkage: magnitudes shrink by mu toward zero, phase kept.

    This is the proximal map of mu*|.| on the complex plane.  (The common
    shorthand (|c|-mu)e^{i arg c} without the clamp at zero is not a
    proximal map; the clamped, radial form is used throughout.)"""
    if mu < 0:
        raise ParameterError("threshold must be >= 0")
    c = np.asarray(c)
    mag = np.abs(c)
    scale = np.zeros_like(mag)
    np.divide(np.maximum(mag - mu, 0.0), mag, out=scale, where=mag > 0)
    return c * scale


def project_nonnegative(f):
    """Euclidean projection onto the nonnegative orthant (componentwise
    clamp of negative entries to zero)."""
    return np.maximum(np.asarray(f, dtype=float), 0.0)


def power_iteration(op, x0, iterations=50, tol=1e-6):
    """Largest eigenvalue of a symmetric PSD operator given as a callable."""
    x = np.asarray(x0, dtype=x0.dtype)
    norm = np.linalg.norm(x)
    if norm == 0:
        raise ParameterError("power iteration needs a nonzero start vector")
    x = x / norm
    lam = 0.0
    for _ in range(iterations):
        y = op(x)
        new_lam = float(np.real(np.vdot(x.ravel(), y.ravel())))
        ynorm = np.linalg.norm(y)
        if ynorm == 0:
            return 0.0
        x = y / ynorm
        if lam > 0 and abs(new_lam - lam) < tol * lam:
            return new_lam
        lam = new_lam
    return lam


class _WaveletOperator:
    """W and its exact adjoint on flattened detail coefficients."""

    def __init__(self, size, levels=None, filters=None):
        self.size = size
        self.levels = levels or dtcwt.default_levels(size)
        self.filters = filters or dtcwt.default_filter_bank()
        probe = dtcwt.dtcwt_analysis(np.zeros((size, size)), self.levels, self.filters)
        self.shapes = [d.shape for d in probe.details]

    def forward(self, img):
        pyr = dtcwt.dtcwt_analysis(img, self.levels, self.filters)
        return dtcwt.details_to_vec(pyr.details)

    def adjoint(self, vec):
        details = dtcwt.vec_to_details(vec, self.shapes)
        pyr = dtcwt.CoeffPyramid(details=details, approx=None, levels=self.levels)
        return dtcwt.dtcwt_adjoint(pyr, self.filters)


_NORM_CACHE = {}


def estimate_operator_norms(geom, size, levels=None, iterations=50, tol=1e-6, seed=0):
    """Power-iteration estimates of the Lipschitz constant of the data term
    (largest eigenvalue of A^T A) and of lambda_max(W W^T).  Cached per
    geometry/size/levels; the estimates are deterministic anyway."""
    key = (geom.angles, geom.detector_count, geom.detector_spacing,
           int(size), levels, iterations, tol, seed)
    if key in _NORM_CACHE:
        return _NORM_CACHE[key]
    rng = np.random.default_rng(seed)
    mat = geometry.system_matrix(geom, size)
    x0 = rng.standard_normal((size * size,))
    tau_lip = power_iteration(lambda x: mat.T @ (mat @ x), x0, iterations, tol)

    wop = _WaveletOperator(size, levels)
    v0 = wop.forward(rng.standard_normal((size, size)))
    lam_max = power_iteration(lambda v: wop.forward(wop.adjoint(v)), v0,
                              iterations, tol)
    out = (float(tau_lip), float(lam_max))
    _NORM_CACHE[key] = out
    return out


def default_mu(sino, size):
    """Regularization default: 1e-3 times the sup-norm of the backprojected
    data, so the weight tracks the problem's scaling."""
    back = geometry.radon_adjoint(sino, size)
    return 1e-3 * float(np.max(np.abs(back)))


def make_params(geom, size, mu=None, tau="auto", lam="auto", iterations=200,
                wavelet_levels=None, sino=None):
    """Resolve 'auto' steps from operator norms and validate the bounds."""
    tau_lip, lam_max = estimate_operator_norms(geom, size, wavelet_levels)
    tau_v = 1.9 / tau_lip if tau == "auto" else float(tau)
    lam_v = 0.9 / lam_max if lam == "auto" else float(lam)
    if mu is None:
        if sino is None:
            raise ConfigurationError("mu=None needs a sinogram to derive the default")
        mu = default_mu(sino, size)
    params = SolverParams(mu=float(mu), tau=tau_v, lam=lam_v,
                          iterations=int(iterations), wavelet_levels=wavelet_levels)
    params.validate(tau_lip, lam_max)
    return params


def pdfp_solve(sino, geom, params, seed_image=None, size=None):
    """Run the three-step primal-dual fixed-point iteration.

    Per iteration: a gradient step on the data term projected to the
    nonnegative orthant, a dual update through the shrinkage residual
    (I - T_{mu*tau/lambda}), and the primal update with the new dual.
    Returns the final nonnegative image and the solver state with the
    objective trace."""
    if size is None:
        size = seed_image.shape[0] if seed_image is not None else geom.detector_count
    mat = geometry.system_matrix(geom, size)
    wop = _WaveletOperator(size, params.wavelet_levels)

    m = sino.values.ravel()
    f = (np.zeros(size * size) if seed_image is None
         else project_nonnegative(seed_image).ravel().astype(float))
    v = np.zeros(sum(int(np.prod(s)) for s in wop.shapes), dtype=complex)
    thresh = params.mu * params.tau / params.lam
    trace = []
    y = f
    for _ in range(params.iterations):
        residual = mat @ f - m
        grad = mat.T @ residual
        wf = wop.forward(f.reshape(size, size))
        data_term = 0.5 * float(residual @ residual)
        reg_term = params.mu * float(np.abs(wf).sum())
        trace.append((data_term, reg_term, data_term + reg_term))

        base = f - params.tau * grad
        y = project_nonnegative(base - params.lam * wop.adjoint(v).ravel())
        wy_v = wop.forward(y.reshape(size, size)) + v
        v = wy_v - soft_threshold_complex(wy_v, thresh)
        f = project_nonnegative(base - params.lam * wop.adjoint(v).ravel())

    residual = mat @ f - m
    wf = wop.forward(f.reshape(size, size))
    data_term = 0.5 * float(residual @ residual)
    reg_term = params.mu * float(np.abs(wf).sum())
    trace.append((data_term, reg_term, data_term + reg_term))

    state = SolverState(f=f.reshape(size, size), v=v,
                        y=y.reshape(size, size), objective_trace=trace)
    return state.f, state


def trace_to_csv(state, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "data_term", "reg_term", "objective"])
        for k, (data, reg, total) in enumerate(state.objective_trace):
            writer.writerow([k, repr(data), repr(reg), repr(total)])


def solver_config_from_json(doc):
    """Parse the {mu, tau, lambda, iterations} JSON document."""
    known = {"mu", "tau", "lambda", "iterations", "wavelet_levels"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigurationError(f"unknown solver config keys: {sorted(unknown)}")
    out = {
        "mu": doc.get("mu"),
        "tau": doc.get("tau", "auto"),
        "lam": doc.get("lambda", "auto"),
        "iterations": int(doc.get("iterations", 200)),
        "wavelet_levels": doc.get("wavelet_levels"),
    }
    for key in ("tau", "lam"):
        if out[key] != "auto" and not isinstance(out[key], (int, float)):
            raise ConfigurationError(f"{key} must be a number or 'auto'")
    return out
