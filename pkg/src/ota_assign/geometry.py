"""Axis-aligned boxes, overlap metrics and non-maximum suppression.

Boxes are stored as ``xyxy``; ``cxcywh`` is available through conversions.
"""
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _backend

UNITS = ("normalized", "absolute")
_UNION_FLOOR = 1e-12


class UnitsMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 <= self.x2 and self.y1 <= self.y2):
            raise ValueError(f"invalid box {self.as_tuple()}: need x1<=x2 and y1<=y2")

    @classmethod
    def from_cxcywh(cls, cx, cy, w, h):
        return cls(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)

    def as_tuple(self):
        return (self.x1, self.y1, self.x2, self.y2)

    def to_cxcywh(self):
        return (
            0.5 * (self.x1 + self.x2),
            0.5 * (self.y1 + self.y2),
            self.x2 - self.x1,
            self.y2 - self.y1,
        )

    @property
    def area(self):
        return (self.x2 - self.x1) * (self.y2 - self.y1)


class BoxList:
    """An ordered set of xyxy boxes tagged with their units."""

    def __init__(self, boxes, units="normalized"):
        if units not in UNITS:
            raise ValueError(f"units must be one of {UNITS}, got {units!r}")
        arr = np.array(boxes, dtype=np.float64).reshape(-1, 4)
        if arr.size and not (
            np.all(arr[:, 0] <= arr[:, 2]) and np.all(arr[:, 1] <= arr[:, 3])
        ):
            raise ValueError("every box needs x1<=x2 and y1<=y2")
        if not np.all(np.isfinite(arr)):
            raise ValueError("box coordinates must be finite")
        arr.setflags(write=False)
        self._xyxy = arr
        self.units = units

    @classmethod
    def from_cxcywh(cls, boxes, units="normalized"):
        return cls(cxcywh_to_xyxy(boxes), units)

    @property
    def xyxy(self):
        return self._xyxy

    def cxcywh(self):
        return xyxy_to_cxcywh(self._xyxy)

    def __len__(self):
        return self._xyxy.shape[0]

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return Box(*(float(v) for v in self._xyxy[idx]))
        return BoxList(self._xyxy[idx], self.units)

    def __eq__(self, other):
        return (
            isinstance(other, BoxList)
            and self.units == other.units
            and np.array_equal(self._xyxy, other._xyxy)
        )

    def __repr__(self):
        return f"BoxList(n={len(self)}, units={self.units!r})"

    def normalized(self, image_size):
        """Divide absolute pixel coordinates by ``(W, H)``."""
        if self.units == "normalized":
            return self
        w, h = image_size
        return BoxList(self._xyxy / np.array([w, h, w, h], dtype=np.float64), "normalized")

    def to_json(self):
        return {"boxes": self._xyxy.tolist(), "units": self.units}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["boxes"], obj.get("units", "normalized"))


def xyxy_to_cxcywh(boxes):
    b = np.asarray(boxes, dtype=np.float64)
    return np.stack(
        [
            0.5 * (b[..., 0] + b[..., 2]),
            0.5 * (b[..., 1] + b[..., 3]),
            b[..., 2] - b[..., 0],
            b[..., 3] - b[..., 1],
        ],
        axis=-1,
    )


def cxcywh_to_xyxy(boxes):
    b = np.asarray(boxes, dtype=np.float64)
    hw, hh = 0.5 * b[..., 2], 0.5 * b[..., 3]
    return np.stack(
        [b[..., 0] - hw, b[..., 1] - hh, b[..., 0] + hw, b[..., 1] + hh], axis=-1
    )


def _coords(box):
    if isinstance(box, Box):
        return box.as_tuple()
    return tuple(float(v) for v in box)


def iou(a, b):
    """Intersection over union of two boxes; 0 when the union is empty."""
    ax1, ay1, ax2, ay2 = _coords(a)
    bx1, by1, bx2, by2 = _coords(b)
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def giou(a, b):
    """Generalized IoU: ``iou - (hull - union) / hull``."""
    ax1, ay1, ax2, ay2 = _coords(a)
    bx1, by1, bx2, by2 = _coords(b)
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = max((ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter, _UNION_FLOOR)
    hull = max((max(ax2, bx2) - min(ax1, bx1)) * (max(ay2, by2) - min(ay1, by1)), _UNION_FLOOR)
    return iou(a, b) - (hull - union) / hull


def l1_box_distance(a, b, units_a="normalized", units_b="normalized"):
    """Sum of absolute differences of the cxcywh parameterizations."""
    if units_a != units_b:
        raise UnitsMismatch(f"cannot compare {units_a} and {units_b} boxes")
    ca = xyxy_to_cxcywh(np.asarray(_coords(a)))
    cb = xyxy_to_cxcywh(np.asarray(_coords(b)))
    return float(np.abs(ca - cb).sum())


def pairwise_iou(a, b):
    """``(len(a), len(b))`` IoU matrix; accepts BoxLists or xyxy arrays."""
    a = a.xyxy if isinstance(a, BoxList) else a
    b = b.xyxy if isinstance(b, BoxList) else b
    return _backend.pairwise_iou(a, b)


def pairwise_giou(a, b):
    a = np.asarray(a.xyxy if isinstance(a, BoxList) else a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b.xyxy if isinstance(b, BoxList) else b, dtype=np.float64).reshape(-1, 4)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    wh = np.clip(
        np.minimum(a[:, None, 2:], b[None, :, 2:]) - np.maximum(a[:, None, :2], b[None, :, :2]),
        0.0,
        None,
    )
    inter = wh[..., 0] * wh[..., 1]
    raw_union = area_a[:, None] + area_b[None, :] - inter
    iou_m = np.zeros_like(inter)
    np.divide(inter, raw_union, out=iou_m, where=(raw_union > 0) & (inter > 0))
    union = np.maximum(raw_union, _UNION_FLOOR)
    hwh = np.maximum(a[:, None, 2:], b[None, :, 2:]) - np.minimum(a[:, None, :2], b[None, :, :2])
    hull = np.maximum(hwh[..., 0] * hwh[..., 1], _UNION_FLOOR)
    return iou_m - (hull - union) / hull


def pairwise_l1(a, b):
    """cxcywh L1 distance matrix."""
    ca = xyxy_to_cxcywh(np.asarray(a, dtype=np.float64).reshape(-1, 4))
    cb = xyxy_to_cxcywh(np.asarray(b, dtype=np.float64).reshape(-1, 4))
    return np.abs(ca[:, None, :] - cb[None, :, :]).sum(axis=-1)


def nms(boxes, scores: Sequence[float], threshold: float = 0.7):
    """Class-agnostic greedy NMS.

    Returns kept indices in descending score order (ties keep input order).
    A box is suppressed when its IoU with a kept, higher-scored box exceeds
    ``threshold``.
    """
    xyxy = boxes.xyxy if isinstance(boxes, BoxList) else np.asarray(boxes, dtype=np.float64)
    xyxy = xyxy.reshape(-1, 4)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if xyxy.shape[0] != scores.shape[0]:
        raise ValueError(f"{xyxy.shape[0]} boxes but {scores.shape[0]} scores")
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    order = np.argsort(-scores, kind="stable")
    return _backend.nms_ordered(xyxy, order, float(threshold))
