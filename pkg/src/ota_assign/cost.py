"""Assignment cost matrix: one row per ground truth plus a background row."""
from dataclasses import asdict, dataclass, fields

import numpy as np

from .geometry import BoxList, UnitsMismatch, giou, l1_box_distance, pairwise_giou, pairwise_l1

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class CostWeights:
    """Weights of the positive (GT) and negative (background) costs.

    ``alpha`` scales the whole regression term against classification.
    """

    alpha: float = 1.0
    lambda_cls: float = 2.0
    lambda_l1: float = 5.0
    lambda_giou: float = 2.0
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"cost.{f.name} must be non-negative")
        if not 0.0 < self.focal_alpha < 1.0:
            raise ValueError("cost.focal_alpha must lie in (0, 1)")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class CostMatrix:
    values: np.ndarray  # (m + 1, n), last row = background

    @property
    def m(self):
        return self.values.shape[0] - 1

    @property
    def n(self):
        return self.values.shape[1]

    @property
    def positive(self):
        return self.values[:-1]

    @property
    def background(self):
        return self.values[-1]


def _focal_positive(p, w):
    p = np.clip(p, LOG_FLOOR, 1.0)
    return w.focal_alpha * (1.0 - p) ** w.focal_gamma * -np.log(p)


def _focal_negative(p, w):
    p = np.clip(p, 0.0, 1.0)
    return (1.0 - w.focal_alpha) * p**w.focal_gamma * -np.log(np.clip(1.0 - p, LOG_FLOOR, 1.0))


def classification_cost(gt_label, pred_scores, w=CostWeights()):
    """Focal cost of predicting ``gt_label`` with the given per-class scores."""
    scores = np.asarray(pred_scores, dtype=np.float64).reshape(-1)
    if not 0 <= int(gt_label) < scores.shape[0]:
        raise IndexError(f"label {gt_label} out of range for {scores.shape[0]} classes")
    return float(_focal_positive(scores[int(gt_label)], w))


def background_cost(pred_scores, w=CostWeights()):
    """Cost of calling a prediction background, driven by its best foreground score."""
    scores = np.asarray(pred_scores, dtype=np.float64)
    return _focal_negative(scores.max(axis=-1), w)


def regression_cost(gt_box, pred_box, w=CostWeights(), units_gt="normalized", units_pred="normalized"):
    if units_gt != units_pred:
        raise UnitsMismatch(f"cannot compare {units_gt} and {units_pred} boxes")
    return w.lambda_l1 * l1_box_distance(gt_box, pred_box) + w.lambda_giou * (1.0 - giou(gt_box, pred_box))


def _check_scores(scores, n):
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] != n:
        raise ValueError(f"scores must have shape (n={n}, K), got {scores.shape}")
    if not np.all((scores >= 0.0) & (scores <= 1.0)):
        raise ValueError("class scores must lie in [0, 1]")
    return scores


def build_cost_matrix(gt_boxes: BoxList, gt_labels, pred_boxes: BoxList, pred_scores, w=CostWeights()):
    """Return the ``(m + 1, n)`` cost matrix.

    Row ``i < m``: ``lambda_cls * L_cls + alpha * (lambda_l1 * L1 + lambda_giou * (1 - GIoU))``.
    Row ``m``: ``lambda_cls`` times the focal negative term of each prediction's max score.
    """
    n = len(pred_boxes)
    if n == 0:
        raise ValueError("at least one prediction is required")
    if gt_boxes.units != pred_boxes.units:
        raise UnitsMismatch(f"GT boxes are {gt_boxes.units}, predictions are {pred_boxes.units}")
    scores = _check_scores(pred_scores, n)
    labels = np.asarray(gt_labels, dtype=np.intp).reshape(-1)
    m = len(gt_boxes)
    if labels.shape[0] != m:
        raise ValueError(f"{m} GT boxes but {labels.shape[0]} labels")
    k = scores.shape[1]
    if m and (labels.min() < 0 or labels.max() >= k):
        raise IndexError(f"GT label out of range for {k} classes")

    values = np.empty((m + 1, n), dtype=np.float64)
    if m:
        cls = _focal_positive(scores[:, labels].T, w)
        reg = w.lambda_l1 * pairwise_l1(gt_boxes.xyxy, pred_boxes.xyxy) + w.lambda_giou * (
            1.0 - pairwise_giou(gt_boxes.xyxy, pred_boxes.xyxy)
        )
        values[:m] = w.lambda_cls * cls + w.alpha * reg
    values[m] = w.lambda_cls * _focal_negative(scores.max(axis=1), w)
    if not np.all(np.isfinite(values)):
        raise FloatingPointError("non-finite entry in cost matrix")
    return CostMatrix(values)
