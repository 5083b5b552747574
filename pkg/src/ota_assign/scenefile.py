"""Scene files: ground truths and predictions in one JSON document.

Schema::

    {"image_size": [W, H],
     "gts":   [{"box": [x1, y1, x2, y2], "label": int}, ...],
     "preds": [{"box": [x1, y1, x2, y2], "scores": [K floats]}, ...]}

Boxes are absolute pixel coordinates; they are divided by ``image_size``
before costs are computed.
"""
import json
import math
from dataclasses import dataclass

import numpy as np

from .geometry import BoxList


class SceneFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SceneFile:
    image_size: tuple
    gt_boxes: BoxList
    gt_labels: np.ndarray
    pred_boxes: BoxList
    pred_scores: np.ndarray

    def normalized(self):
        """GT boxes, labels, prediction boxes and scores ready for the assigners."""
        return (
            self.gt_boxes.normalized(self.image_size),
            self.gt_labels,
            self.pred_boxes.normalized(self.image_size),
            self.pred_scores,
        )

    def to_json(self):
        return {
            "image_size": list(self.image_size),
            "gts": [
                {"box": b, "label": int(l)}
                for b, l in zip(self.gt_boxes.xyxy.tolist(), self.gt_labels)
            ],
            "preds": [
                {"box": b, "scores": s}
                for b, s in zip(self.pred_boxes.xyxy.tolist(), self.pred_scores.tolist())
            ],
        }


def _number(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise SceneFormatError(f"{where}: expected a finite number, got {v!r}")
    return float(v)


def _box(v, where):
    if not isinstance(v, list) or len(v) != 4:
        raise SceneFormatError(f"{where}: expected [x1, y1, x2, y2]")
    b = [_number(x, f"{where}[{i}]") for i, x in enumerate(v)]
    if b[0] > b[2] or b[1] > b[3]:
        raise SceneFormatError(f"{where}: need x1<=x2 and y1<=y2, got {b}")
    return b


def parse_scene(doc):
    if not isinstance(doc, dict):
        raise SceneFormatError("scene: expected a JSON object")
    for key in ("image_size", "gts", "preds"):
        if key not in doc:
            raise SceneFormatError(f"{key}: missing")
    size = doc["image_size"]
    if not isinstance(size, list) or len(size) != 2:
        raise SceneFormatError("image_size: expected [W, H]")
    w, h = (_number(v, f"image_size[{i}]") for i, v in enumerate(size))
    if w <= 0 or h <= 0:
        raise SceneFormatError("image_size: W and H must be positive")
    if not isinstance(doc["gts"], list):
        raise SceneFormatError("gts: expected a list")
    if not isinstance(doc["preds"], list) or not doc["preds"]:
        raise SceneFormatError("preds: expected a non-empty list")

    gt_boxes, gt_labels = [], []
    for i, g in enumerate(doc["gts"]):
        if not isinstance(g, dict):
            raise SceneFormatError(f"gts[{i}]: expected an object")
        gt_boxes.append(_box(g.get("box"), f"gts[{i}].box"))
        label = g.get("label")
        if isinstance(label, bool) or not isinstance(label, int) or label < 0:
            raise SceneFormatError(f"gts[{i}].label: expected a non-negative integer, got {label!r}")
        gt_labels.append(label)

    pred_boxes, scores = [], []
    k = None
    for j, p in enumerate(doc["preds"]):
        if not isinstance(p, dict):
            raise SceneFormatError(f"preds[{j}]: expected an object")
        pred_boxes.append(_box(p.get("box"), f"preds[{j}].box"))
        s = p.get("scores")
        if not isinstance(s, list) or not s:
            raise SceneFormatError(f"preds[{j}].scores: expected a non-empty list")
        s = [_number(x, f"preds[{j}].scores[{c}]") for c, x in enumerate(s)]
        if any(x < 0 or x > 1 for x in s):
            raise SceneFormatError(f"preds[{j}].scores: values must lie in [0, 1]")
        if k is None:
            k = len(s)
        elif len(s) != k:
            raise SceneFormatError(f"preds[{j}].scores: expected {k} classes, got {len(s)}")
        scores.append(s)
    for i, label in enumerate(gt_labels):
        if label >= k:
            raise SceneFormatError(f"gts[{i}].label: {label} out of range for {k} classes")

    return SceneFile(
        (w, h),
        BoxList(gt_boxes, "absolute"),
        np.asarray(gt_labels, dtype=np.intp),
        BoxList(pred_boxes, "absolute"),
        np.asarray(scores, dtype=np.float64),
    )


def load_scene(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SceneFormatError(f"scene: invalid JSON ({exc})") from exc
    return parse_scene(doc)
