"""Label assignment solvers.

Ground truths and the background act as suppliers of units, predictions as
demanders of exactly one unit each. ``assign_ota`` runs the whole pipeline:
IoU -> dynamic k -> stage-wise unit increase -> supply cap -> cost matrix ->
Sinkhorn -> hardening. ``assign_hungarian`` is the one-to-one baseline.
"""
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _backend
from .cost import CostMatrix, CostWeights, build_cost_matrix
from .geometry import BoxList, pairwise_iou

BACKGROUND = -1
MATCHERS = ("hungarian", "ota")
ORACLE_LIMIT = 2_000_000
_K_GUARD = 1e-9  # absorbs round-off when the top-q IoUs sum to an integer


class EnumerationTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    q: int = 8
    stages: int = 6
    epsilon: float = 0.1
    anneal_halvings: int = 0
    max_iters: int = 500
    tol: float = 1e-6
    matcher: str = "ota"

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("solver.q must be >= 1")
        if self.stages < 1:
            raise ValueError("solver.stages must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("solver.epsilon must be > 0")
        if self.anneal_halvings < 0:
            raise ValueError("solver.anneal_halvings must be >= 0")
        if self.max_iters < 1:
            raise ValueError("solver.max_iters must be >= 1")
        if self.tol <= 0:
            raise ValueError("solver.tol must be > 0")
        if self.matcher not in MATCHERS:
            raise ValueError(f"solver.matcher must be one of {MATCHERS}, got {self.matcher!r}")


@dataclass(frozen=True)
class SupplyPlan:
    gt_units: tuple
    background_units: int
    n: int

    def __post_init__(self):
        if any(s < 1 for s in self.gt_units):
            raise ValueError("every GT must supply at least one unit")
        if self.background_units < 0:
            raise ValueError("background units must be non-negative")
        if sum(self.gt_units) + self.background_units != self.n:
            raise ValueError(
                f"supplies {sum(self.gt_units)} + {self.background_units} != demand {self.n}"
            )

    @property
    def m(self):
        return len(self.gt_units)

    def vector(self):
        """All supplies with the background last."""
        return np.array(list(self.gt_units) + [self.background_units], dtype=np.float64)


@dataclass
class TransportPlan:
    pi: np.ndarray  # (m + 1, n)
    marginal_error: float
    iterations: int = 0
    converged: bool = True

    def cost(self, cost):
        values = cost.values if isinstance(cost, CostMatrix) else np.asarray(cost)
        return float(np.sum(values * self.pi))


@dataclass
class HardAssignment:
    labels: np.ndarray  # (n,), GT index or BACKGROUND
    positives_per_gt: np.ndarray  # (m,)

    @classmethod
    def from_labels(cls, labels, m):
        labels = np.asarray(labels, dtype=np.intp)
        pos = np.bincount(labels[labels >= 0], minlength=m)[:m] if m else np.zeros(0, np.intp)
        return cls(labels, pos.astype(np.intp))

    def one_hot(self, m):
        pi = np.zeros((m + 1, self.labels.shape[0]))
        rows = np.where(self.labels == BACKGROUND, m, self.labels)
        pi[rows, np.arange(self.labels.shape[0])] = 1.0
        return pi

    def to_json_labels(self):
        return ["background" if int(v) == BACKGROUND else int(v) for v in self.labels]


class Matching(NamedTuple):
    pred_for_gt: np.ndarray
    total: float


def _as_values(cost):
    return cost.values if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=np.float64)


def hungarian_match(cost):
    """Optimal one-to-one matching of GT rows to prediction columns.

    ``cost`` is an ``(m, n)`` array of GT rows, or a CostMatrix whose
    background row is then ignored.
    """
    values = cost.positive if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"cost must be 2-D, got shape {values.shape}")
    m, n = values.shape
    if m > n:
        raise ValueError(f"cannot match {m} GTs one-to-one into {n} predictions")
    if not np.all(np.isfinite(values)):
        raise FloatingPointError("non-finite cost entry")
    if m == 0:
        return Matching(np.zeros(0, dtype=np.intp), 0.0)
    cols = _backend.lsap(values)
    return Matching(cols, float(values[np.arange(m), cols].sum()))


def dynamic_k_estimate(iou_row, q=8):
    """Floor of the sum of the ``q`` largest IoUs, at least 1."""
    row = np.asarray(iou_row, dtype=np.float64).reshape(-1)
    if row.size == 0:
        raise ValueError("IoU row is empty")
    if q < 1:
        raise ValueError("q must be >= 1")
    top = np.sort(row)[::-1][:q]
    return max(1, int(math.floor(float(top.sum()) + _K_GUARD)))


def apply_unit_increase(k, t, T):
    """Stage-``t`` units: ``max(1, floor(k - 0.5 * (T - t)))``."""
    if not 1 <= t <= T:
        raise ValueError(f"stage {t} outside 1..{T}")
    # k - (T - t)/2 is a half-integer at worst, so integer floor division is exact
    return max(1, (2 * int(k) - (T - t)) // 2)


def cap_supplies(k_vec, n):
    """Scale GT units down so the background keeps at least 20% of the demand.

    When ``sum(k) > 0.8 n`` every k is multiplied by ``0.8 n / sum(k)``,
    floored and clamped to 1. Clamping can overshoot the budget, in which
    case the largest supplies are decremented one unit at a time.
    """
    k = [int(v) for v in k_vec]
    m = len(k)
    if n < m:
        raise ValueError(f"{n} predictions cannot serve {m} GTs")
    if any(v < 1 for v in k):
        raise ValueError("k values must be positive")
    budget = n - (-(-n // 5))  # n - ceil(0.2 n)
    total = sum(k)
    if total > budget:
        scale = 0.8 * n / total
        k = [max(1, int(math.floor(v * scale))) for v in k]
        while sum(k) > budget:
            big = max(k)
            if big <= 1:
                break
            k[k.index(big)] -= 1
    return SupplyPlan(tuple(k), n - sum(k), n)


def _epsilon_schedule(epsilon, halvings):
    return [epsilon * 2.0**h for h in range(halvings, -1, -1)]


def _semidual(f, cost, a, eps):
    """Column potentials, plan and objective for row potentials ``f`` (unit demands)."""
    z = (f[:, None] - cost) / eps
    zmax = z.max(axis=0)
    g = -eps * (zmax + np.log(np.exp(z - zmax).sum(axis=0)))
    pi = np.exp(z + g / eps)
    return g, pi, float(a @ f + g.sum())


def _newton_polish(cost, a, eps, f, tol, max_steps=200):
    """Levenberg-damped Newton ascent on the semi-dual in the row potentials.

    Used when Sinkhorn stalls on near-degenerate instances; with few rows the
    Hessian solve is tiny and convergence is quadratic from a warm start.
    Rows that carry no mass make the Hessian singular, so the damping ``mu``
    grows (towards plain gradient ascent) whenever a step is rejected.
    """
    r = a.shape[0]
    eye = np.eye(r)
    g, pi, obj = _semidual(f, cost, a, eps)
    mu = 1e-12
    steps = 0
    for steps in range(1, max_steps + 1):
        rows = pi.sum(axis=1)
        grad = a - rows
        if np.max(np.abs(grad)) <= tol:
            break
        hess = (np.diag(rows) - pi @ pi.T) / eps + np.ones((r, r)) / r
        accepted = False
        while mu < 1e12 and not accepted:
            try:
                d = np.linalg.solve(hess + mu * eye, grad)
            except np.linalg.LinAlgError:
                mu = max(mu * 100.0, 1e-6)
                continue
            slope = float(grad @ d)
            step = 1.0
            for _ in range(30):
                f_new = f + step * d
                g_new, pi_new, obj_new = _semidual(f_new, cost, a, eps)
                if obj_new >= obj + 1e-4 * step * slope:
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                mu = max(mu * 100.0, 1e-6)
        if not accepted:
            break
        mu = max(mu * 0.1, 1e-12)
        f, g, pi, obj = f_new, g_new, pi_new, obj_new
    return f, g, steps


def sinkhorn_transport(
    cost, supply: SupplyPlan, epsilon=0.1, max_iters=500, tol=1e-6, anneal_halvings=0, polish=True
):
    """Entropic OT plan between supplies (rows) and unit demands (columns).

    Runs log-domain Sinkhorn at ``epsilon * 2**h`` for ``h = anneal_halvings..0``,
    warm-starting each level from the previous potentials. ``max_iters``
    applies per level. If the row marginals are still off by more than
    ``tol`` at the final level and ``polish`` is set, Newton steps on the
    semi-dual finish the job. ``marginal_error`` is measured on the returned plan.
    """
    values = _as_values(cost)
    if not np.all(np.isfinite(values)):
        raise FloatingPointError("non-finite cost entry")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    a_full = supply.vector()
    if values.shape != (a_full.shape[0], supply.n):
        raise ValueError(f"cost shape {values.shape} does not match supplies ({a_full.shape[0]}, {supply.n})")
    active = a_full > 0
    sub = np.ascontiguousarray(values[active])
    a = a_full[active]
    b = np.ones(supply.n)
    f = np.zeros(a.shape[0])
    g = np.zeros(supply.n)
    iters = 0
    for eps in _epsilon_schedule(epsilon, anneal_halvings):
        row_err, it = _backend.sinkhorn_log(sub, a, b, eps, f, g, max_iters, tol)
        iters += it
    if polish and row_err > tol:
        f, g, steps = _newton_polish(sub, a, epsilon, f, 0.1 * tol)
        iters += steps
    pi = np.zeros_like(values)
    pi[active] = np.exp((f[:, None] + g[None, :] - sub) / epsilon)
    err = max(
        float(np.max(np.abs(pi.sum(axis=1) - a_full))),
        float(np.max(np.abs(pi.sum(axis=0) - 1.0))),
    )
    return TransportPlan(pi, err, iters, err <= tol)


def exact_transport_oracle(cost, supply: SupplyPlan):
    """Minimum-cost integral plan by exhaustive depth-first enumeration.

    Every demander takes exactly one unit from a supplier with capacity left.
    Refuses instances with more than ``ORACLE_LIMIT`` raw assignments.
    """
    values = _as_values(cost)
    r, n = values.shape
    if r**n > ORACLE_LIMIT:
        raise EnumerationTooLarge(
            f"{r}^{n} assignments exceed the enumeration guard of {ORACLE_LIMIT}"
        )
    cap = [int(v) for v in supply.vector()]
    c = values.tolist()
    col_min = values.min(axis=0).tolist()
    suffix = [0.0] * (n + 1)
    for j in range(n - 1, -1, -1):
        suffix[j] = suffix[j + 1] + col_min[j]
    best = [math.inf, None]
    rows = [0] * n

    def dfs(j, acc):
        if acc + suffix[j] >= best[0]:
            return
        if j == n:
            best[0] = acc
            best[1] = list(rows)
            return
        for i in range(r):
            if cap[i]:
                cap[i] -= 1
                rows[j] = i
                dfs(j + 1, acc + c[i][j])
                cap[i] += 1

    dfs(0, 0.0)
    if best[1] is None:
        raise ValueError("no feasible integral plan")
    pi = np.zeros_like(values)
    pi[best[1], np.arange(n)] = 1.0
    return TransportPlan(pi, 0.0, 0, True)


def harden(plan: TransportPlan, supply: SupplyPlan = None):
    """Label each prediction with the supplier holding most of its mass.

    Ties go to the lower row index; the last row is the background.
    """
    pi = plan.pi
    m = pi.shape[0] - 1
    rows = np.argmax(pi, axis=0)
    labels = np.where(rows == m, BACKGROUND, rows).astype(np.intp)
    return HardAssignment.from_labels(labels, m)


@dataclass
class AssignmentResult:
    assignment: HardAssignment
    plan: TransportPlan
    supply: SupplyPlan
    cost: CostMatrix
    iou: np.ndarray
    k_estimate: list = field(default_factory=list)
    k_stage: list = field(default_factory=list)

    @property
    def total_cost(self):
        return self.plan.cost(self.cost)


def _scene_inputs(gt_boxes, gt_labels, pred_boxes, pred_scores, w):
    cost = build_cost_matrix(gt_boxes, gt_labels, pred_boxes, pred_scores, w)
    ious = pairwise_iou(gt_boxes, pred_boxes) if len(gt_boxes) else np.zeros((0, len(pred_boxes)))
    return cost, ious


def assign_ota(
    gt_boxes: BoxList,
    gt_labels,
    pred_boxes: BoxList,
    pred_scores,
    w=CostWeights(),
    t=None,
    config=SolverConfig(),
):
    """Many-to-one assignment at stage ``t`` (defaults to the last stage)."""
    T = config.stages
    t = T if t is None else t
    n = len(pred_boxes)
    m = len(gt_boxes)
    if not 1 <= t <= T:
        raise ValueError(f"stage {t} outside 1..{T}")
    if n < m:
        raise ValueError(f"{n} predictions cannot serve {m} GTs")
    cost, ious = _scene_inputs(gt_boxes, gt_labels, pred_boxes, pred_scores, w)
    k_est = [dynamic_k_estimate(ious[i], config.q) for i in range(m)]
    k_stage = [apply_unit_increase(k, t, T) for k in k_est]
    supply = cap_supplies(k_stage, n)
    plan = sinkhorn_transport(
        cost, supply, config.epsilon, config.max_iters, config.tol, config.anneal_halvings
    )
    return AssignmentResult(harden(plan, supply), plan, supply, cost, ious, k_est, k_stage)


def assign_hungarian(gt_boxes: BoxList, gt_labels, pred_boxes: BoxList, pred_scores, w=CostWeights()):
    """One-to-one baseline; unmatched predictions become background."""
    n = len(pred_boxes)
    m = len(gt_boxes)
    cost, ious = _scene_inputs(gt_boxes, gt_labels, pred_boxes, pred_scores, w)
    match = hungarian_match(cost)
    labels = np.full(n, BACKGROUND, dtype=np.intp)
    labels[match.pred_for_gt] = np.arange(m)
    hard = HardAssignment.from_labels(labels, m)
    plan = TransportPlan(hard.one_hot(m), 0.0, 0, True)
    supply = SupplyPlan((1,) * m, n - m, n)
    return AssignmentResult(hard, plan, supply, cost, ious, [1] * m, [1] * m)


def assign(gt_boxes, gt_labels, pred_boxes, pred_scores, w=CostWeights(), t=None, config=SolverConfig()):
    if config.matcher == "hungarian":
        return assign_hungarian(gt_boxes, gt_labels, pred_boxes, pred_scores, w)
    return assign_ota(gt_boxes, gt_labels, pred_boxes, pred_scores, w, t, config)
