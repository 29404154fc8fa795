"""Dice overlap metrics, boundary-to-segmentation conversion, and report
generation.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import io, morphology
from .errors import DimensionError


def dsc(x, y):
    """Dice similarity coefficient 2|X n Y| / (|X| + |Y|); two empty masks
    agree perfectly (1.0) by convention."""
    x = np.asarray(x).astype(bool)
    y = np.asarray(y).astype(bool)
    if x.shape != y.shape:
        raise DimensionError(f"mask shapes differ: {x.shape} vs {y.shape}")
    total = int(x.sum()) + int(y.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((x & y).sum()) / total


def segment_from_boundary(boundary, closing_radius=3):
    """Region enclosed by a boundary estimate: close the skeleton with a
    disk, then fill the holes (complement of the border-reachable
    background)."""
    skel = np.asarray(boundary.skeleton if hasattr(boundary, "skeleton")
                      else boundary).astype(np.uint8)
    closed = morphology.close_binary(skel, morphology.disk_element(closing_radius))
    return ndimage.binary_fill_holes(closed).astype(np.uint8)


@dataclass
class MetricsReport:
    """Per-slice dice scores with the provenance needed to reproduce them."""

    slice_dsc: dict
    mean_dsc: float
    config: dict = field(default_factory=dict)
    input_hashes: dict = field(default_factory=dict)
    subband_dice: dict = field(default_factory=dict)
    solver_final_objectives: dict = field(default_factory=dict)
    runtime_seconds: float = None

    def to_json(self):
        return {
            "slice_dsc": {str(k): v for k, v in self.slice_dsc.items()},
            "mean_dsc": self.mean_dsc,
            "config": self.config,
            "input_hashes": self.input_hashes,
            "subband_dice": {str(k): v for k, v in self.subband_dice.items()},
            "solver_final_objectives": {str(k): v for k, v
                                        in self.solver_final_objectives.items()},
            "runtime_seconds": self.runtime_seconds,
        }

    def to_markdown(self):
        lines = ["| xz-slice (y) | DSC |", "| --- | --- |"]
        for k in sorted(self.slice_dsc, key=int):
            lines.append(f"| {k} | {self.slice_dsc[k]:.5f} |")
        lines.append(f"| mean | {self.mean_dsc:.5f} |")
        return "\n".join(lines) + "\n"


def evaluate_slices(results, truth_slices, slice_indices, closing_radius=3,
                    config=None, input_hashes=None):
    """Dice of boundary-derived segmentations against ground-truth slices."""
    scores, objectives = {}, {}
    for idx, result, truth in zip(slice_indices, results, truth_slices):
        seg = segment_from_boundary(result.boundary, closing_radius)
        scores[int(idx)] = dsc(seg, np.asarray(truth) > 0)
        if result.objective_trace:
            objectives[int(idx)] = result.objective_trace[-1][2]
    mean = float(np.mean(list(scores.values()))) if scores else 0.0
    return MetricsReport(slice_dsc=scores, mean_dsc=mean,
                         config=config or {}, input_hashes=input_hashes or {},
                         solver_final_objectives=objectives)


def write_report(report, out_dir, stem="report"):
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    io.write_json(root / f"{stem}.json", report.to_json())
    (root / f"{stem}.md").write_text(report.to_markdown())
    return root / f"{stem}.json"
