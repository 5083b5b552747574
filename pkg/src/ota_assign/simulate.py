"""Synthetic scenes and a T-stage refinement emulator.

Stage ``t`` predictions cluster around each ground truth with coordinate
noise ``sigma_max * (T - t + 1) / T`` (relative to the GT size), so later
stages are more precise. The remaining slots are random distractors.
"""
import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .assignment import BACKGROUND, SolverConfig, assign
from .cost import CostWeights
from .geometry import BoxList, pairwise_iou


@dataclass(frozen=True)
class SimulationConfig:
    m: int = 5
    n: int = 100
    K: int = 10
    seeds: int = 1
    sigma_max: float = 0.2
    per_gt: int = 5
    image_size: tuple = (640, 480)

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("simulate.m must be >= 0")
        if self.K < 1:
            raise ValueError("simulate.K must be >= 1")
        if self.n < 1 or self.n < self.m:
            raise ValueError("simulate.n must be >= max(1, simulate.m)")
        if self.seeds < 1:
            raise ValueError("simulate.seeds must be >= 1")
        if self.sigma_max < 0:
            raise ValueError("simulate.sigma_max must be >= 0")
        if self.per_gt < 1:
            raise ValueError("simulate.per_gt must be >= 1")


@dataclass(frozen=True)
class Scene:
    gt_boxes: BoxList  # absolute pixels
    gt_labels: np.ndarray
    image_size: tuple
    seed: int = 0
    num_classes: int = 10


@dataclass(frozen=True)
class StagePredictions:
    stage: int
    boxes: BoxList
    scores: np.ndarray  # (n, K)
    owner: np.ndarray  # GT that spawned each prediction, -1 for distractors


def generate_scene(seed, m, num_classes=10, image_size=(640, 480)):
    """``m`` boxes with sides between 5% and 40% of the image, placed uniformly."""
    if m < 0:
        raise ValueError("m must be non-negative")
    rng = np.random.default_rng(seed)
    w_img, h_img = image_size
    wh = rng.uniform(0.05, 0.4, size=(m, 2)) * np.array([w_img, h_img])
    x1 = rng.uniform(0.0, w_img - wh[:, 0])
    y1 = rng.uniform(0.0, h_img - wh[:, 1])
    boxes = np.stack([x1, y1, x1 + wh[:, 0], y1 + wh[:, 1]], axis=1)
    labels = rng.integers(0, num_classes, size=m)
    return Scene(BoxList(boxes, "absolute"), labels, tuple(image_size), seed, num_classes)


def stage_sigma(t, T, sigma_max):
    return sigma_max * (T - t + 1) / T


def simulate_stage_predictions(scene: Scene, t, T, n, sigma_max=0.2, per_gt=5):
    """Predictions for stage ``t``: ``per_gt`` noisy copies of each GT plus distractors.

    True-class score is ``exp(-d^2 / (2 sigma_max^2))`` where ``d`` is the
    size-relative cxcywh displacement; the other classes share the rest
    uniformly. Deterministic in ``(scene.seed, t)``.
    """
    if not 1 <= t <= T:
        raise ValueError(f"stage {t} outside 1..{T}")
    m = len(scene.gt_boxes)
    if n < m:
        raise ValueError(f"n={n} is smaller than the {m} ground truths")
    rng = np.random.default_rng([scene.seed, t])
    K = scene.num_classes
    w_img, h_img = scene.image_size
    bounds = np.array([w_img, h_img, w_img, h_img], dtype=np.float64)
    per = min(per_gt, n // m) if m else 0
    sigma = stage_sigma(t, T, sigma_max)

    gt = scene.gt_boxes.xyxy
    size = np.stack([gt[:, 2] - gt[:, 0], gt[:, 3] - gt[:, 1]], axis=1) if m else np.zeros((0, 2))
    scale = np.repeat(np.concatenate([size, size], axis=1), per, axis=0)
    noise = rng.standard_normal((m * per, 4)) * sigma * scale
    cl = np.repeat(gt, per, axis=0) + noise
    cl = np.clip(cl, 0.0, bounds)
    cl = np.concatenate([np.minimum(cl[:, :2], cl[:, 2:]), np.maximum(cl[:, :2], cl[:, 2:])], axis=1)

    owners = np.repeat(np.arange(m), per)
    rel = np.abs(cl - np.repeat(gt, per, axis=0)) / np.maximum(scale, 1e-12)
    disp2 = np.sum(rel**2, axis=1)
    true_p = np.exp(-disp2 / (2.0 * sigma_max**2)) if sigma_max > 0 else np.ones(m * per)
    scores = np.empty((m * per, K))
    scores[:] = ((1.0 - true_p) / max(K - 1, 1))[:, None]
    scores[np.arange(m * per), scene.gt_labels[owners]] = true_p

    n_dist = n - m * per
    wh = rng.uniform(0.02, 0.4, size=(n_dist, 2)) * np.array([w_img, h_img])
    x1 = rng.uniform(0.0, w_img - wh[:, 0])
    y1 = rng.uniform(0.0, h_img - wh[:, 1])
    dist = np.stack([x1, y1, x1 + wh[:, 0], y1 + wh[:, 1]], axis=1)
    dist_scores = rng.uniform(0.0, 0.2, size=(n_dist, K))

    boxes = BoxList(np.concatenate([cl, dist]), "absolute")
    return StagePredictions(
        t,
        boxes,
        np.concatenate([scores, dist_scores]),
        np.concatenate([owners, np.full(n_dist, -1)]).astype(np.intp),
    )


@dataclass
class StageRecord:
    stage: int
    positives_mean: float
    positives_min: int
    positives_max: int
    mean_matched_iou: float
    total_cost: float
    background_fraction: float
    marginal_error: float
    converged: bool
    wall_time: float = field(default=0.0, compare=False)


def _record(t, scene, preds, result, elapsed):
    m = len(scene.gt_boxes)
    labels = result.assignment.labels
    pos = result.assignment.positives_per_gt
    matched = labels != BACKGROUND
    if matched.any():
        ious = pairwise_iou(scene.gt_boxes, preds.boxes)
        miou = float(ious[labels[matched], np.flatnonzero(matched)].mean())
    else:
        miou = 0.0
    return StageRecord(
        stage=t,
        positives_mean=float(pos.mean()) if m else 0.0,
        positives_min=int(pos.min()) if m else 0,
        positives_max=int(pos.max()) if m else 0,
        mean_matched_iou=miou,
        total_cost=result.total_cost,
        background_fraction=float(np.mean(labels == BACKGROUND)),
        marginal_error=result.plan.marginal_error,
        converged=bool(result.plan.converged),
        wall_time=elapsed,
    )


def run_iterative_assignment(scene: Scene, sim=SimulationConfig(), solver=SolverConfig(), w=CostWeights()):
    """Assign every stage ``t = 1..T`` of ``scene``; one record per stage."""
    T = solver.stages
    gts = scene.gt_boxes.normalized(scene.image_size)
    records = []
    for t in range(1, T + 1):
        preds = simulate_stage_predictions(scene, t, T, sim.n, sim.sigma_max, sim.per_gt)
        start = time.perf_counter()
        result = assign(gts, scene.gt_labels, preds.boxes.normalized(scene.image_size),
                        preds.scores, w, t, solver)
        records.append(_record(t, scene, preds, result, time.perf_counter() - start))
    return records


REPORT_COLUMNS = (
    "stage",
    "positives_mean",
    "positives_min",
    "positives_max",
    "mean_matched_iou",
    "total_cost",
    "background_fraction",
    "marginal_error",
    "converged",
)


def aggregate(runs):
    """Merge per-seed stage records (in seed order) into one row per stage."""
    rows = []
    for stage_recs in zip(*runs):
        rows.append(
            StageRecord(
                stage=stage_recs[0].stage,
                positives_mean=float(np.mean([r.positives_mean for r in stage_recs])),
                positives_min=min(r.positives_min for r in stage_recs),
                positives_max=max(r.positives_max for r in stage_recs),
                mean_matched_iou=float(np.mean([r.mean_matched_iou for r in stage_recs])),
                total_cost=float(np.mean([r.total_cost for r in stage_recs])),
                background_fraction=float(np.mean([r.background_fraction for r in stage_recs])),
                marginal_error=max(r.marginal_error for r in stage_recs),
                converged=all(r.converged for r in stage_recs),
                wall_time=float(sum(r.wall_time for r in stage_recs)),
            )
        )
    return rows


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_csv(rows, timings=False):
    cols = REPORT_COLUMNS + (("wall_time",) if timings else ())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for r in rows:
        d = asdict(r)
        writer.writerow([_fmt(d[c]) for c in cols])
    return buf.getvalue()


def report_json(rows, meta=None, timings=False):
    cols = REPORT_COLUMNS + (("wall_time",) if timings else ())
    doc = {
        "columns": list(cols),
        "stages": [{c: asdict(r)[c] for c in cols} for r in rows],
    }
    if meta:
        doc["meta"] = meta
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
