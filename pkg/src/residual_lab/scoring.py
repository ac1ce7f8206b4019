"""Residual anomaly maps and exact pixel-wise average precision.

AP processes equal scores as one group (order-independent tie handling):
sorting pixels by descending score, AP = sum over groups of
(recall_gain * precision_at_group_end).  This matches area under the
precision-recall curve with no interpolation.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .grid import BinaryMask, Grid


class NoPositivesError(ValueError):
    """Ground truth contains no positive pixel inside the evaluation region."""


def residual_map(x: Grid, x_hat: Grid) -> Grid:
    """Per-pixel absolute difference |x - x_hat| as the anomaly score map."""
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    return Grid(np.abs(x.pixels - x_hat.pixels))


def average_precision(
    scores: Grid,
    truth: BinaryMask,
    eval_mask: BinaryMask | None = None,
) -> float:
    """Exact AP of per-pixel scores against a binary truth mask.

    Ties are collapsed into score groups, so the result does not depend on
    pixel order.  With all scores equal, AP equals the positive prevalence.
    """
    if scores.shape != truth.shape:
        raise ValueError(f"shape mismatch: scores {scores.shape} vs truth {truth.shape}")
    s = scores.pixels.ravel()
    y = truth.values.ravel()
    if eval_mask is not None:
        if eval_mask.shape != scores.shape:
            raise ValueError(
                f"shape mismatch: scores {scores.shape} vs eval mask {eval_mask.shape}"
            )
        sel = eval_mask.values.ravel()
        s = s[sel]
        y = y[sel]
    n_pos = int(np.count_nonzero(y))
    if n_pos == 0:
        raise NoPositivesError("no positive pixels in the evaluation region")

    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    # Last index of each equal-score group.
    boundary = np.nonzero(np.diff(s_sorted))[0]
    group_end = np.concatenate([boundary, [s.size - 1]])
    tp = np.cumsum(y_sorted, dtype=np.float64)[group_end]
    total = (group_end + 1).astype(np.float64)
    recall = tp / n_pos
    precision = tp / total
    recall_gain = np.diff(np.concatenate([[0.0], recall]))
    return float(np.sum(recall_gain * precision))


@dataclass
class ApResult:
    """Per-image AP values and their macro mean."""

    per_image: list[tuple[str, float]] = field(default_factory=list)
    mean: float = 0.0

    @property
    def count(self) -> int:
        return len(self.per_image)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["image_id", "ap"])
        for image_id, ap in self.per_image:
            writer.writerow([image_id, format(ap, ".10g")])
        writer.writerow(["__mean__", format(self.mean, ".10g")])
        return buf.getvalue()


def dataset_ap(
    pairs: list[tuple[str, Grid, BinaryMask]],
    eval_masks: list[BinaryMask | None] | None = None,
) -> ApResult:
    """Macro-average AP over (image_id, score map, truth) triples."""
    per_image = []
    for i, (image_id, scores, truth) in enumerate(pairs):
        mask = eval_masks[i] if eval_masks is not None else None
        try:
            per_image.append((image_id, average_precision(scores, truth, mask)))
        except ValueError as exc:
            raise type(exc)(f"image {image_id!r}: {exc}") from exc
    return ApResult(per_image=per_image, mean=float(np.mean([v for _, v in per_image])))


@dataclass
class CurveMatch:
    """L1 distances between a model's AP curve and each blur-strength curve."""

    sigmas: list[float]
    distances: list[float]
    best_sigma: float
    best_distance: float


def best_matching_sigma(
    model_curve: dict[float, float],
    blur_curves: dict[float, dict[float, float]],
) -> CurveMatch:
    """Blur strength whose AP-vs-intensity curve is L1-closest to the model's.

    All curves must share the model curve's intensity grid; ties resolve to
    the smaller sigma.
    """
    if not model_curve:
        raise ValueError("model curve is empty")
    if not blur_curves:
        raise ValueError("no blur curves given")
    grid = sorted(model_curve)
    sigmas = sorted(blur_curves)
    distances = []
    for sigma in sigmas:
        curve = blur_curves[sigma]
        if sorted(curve) != grid:
            raise ValueError(
                f"intensity grid mismatch for sigma={sigma:g}: "
                f"{sorted(curve)} vs {grid}"
            )
        distances.append(float(sum(abs(model_curve[i] - curve[i]) for i in grid)))
    best_idx = int(np.argmin(distances))  # argmin returns the first (smallest sigma) on ties
    return CurveMatch(
        sigmas=sigmas,
        distances=distances,
        best_sigma=sigmas[best_idx],
        best_distance=distances[best_idx],
    )
