"""Pure-Python / NumPy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` function for function and are used when the
compiled extension is missing or ``OTA_ASSIGN_PURE=1`` is set.
"""
import math

import numpy as np


def pairwise_iou(a, b):
    """IoU matrix between ``a`` (m, 4) and ``b`` (n, 4), both xyxy."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def _iou4(a, b):
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def nms_ordered(boxes, order, threshold):
    """Greedy suppression over ``order`` (indices sorted by descending score)."""
    boxes = np.asarray(boxes, dtype=np.float64).tolist()
    suppressed = [False] * len(boxes)
    keep = []
    for pos, i in enumerate(order):
        i = int(i)
        if suppressed[i]:
            continue
        keep.append(i)
        bi = boxes[i]
        for j in order[pos + 1:]:
            j = int(j)
            if not suppressed[j] and _iou4(bi, boxes[j]) > threshold:
                suppressed[j] = True
    return np.asarray(keep, dtype=np.intp)


def lsap(cost):
    """Minimum-cost injection of rows into columns (rows <= cols).

    Shortest augmenting path with dual potentials, O(m^2 n).
    Returns the column chosen for every row.
    """
    cost = np.asarray(cost, dtype=np.float64)
    m, n = cost.shape
    c = cost.tolist()
    inf = math.inf
    u = [0.0] * (m + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)  # p[j]: row (1-based) owning column j, 0 = free
    way = [0] * (n + 1)
    for i in range(1, m + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = c[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.empty(m, dtype=np.intp)
    for j in range(1, n + 1):
        if p[j]:
            col_of_row[p[j] - 1] = j - 1
    return col_of_row


def _lse(x, axis):
    mx = np.max(x, axis=axis, keepdims=True)
    return np.squeeze(mx, axis) + np.log(np.sum(np.exp(x - mx), axis=axis))


def sinkhorn_log(cost, a, b, eps, f, g, max_iters, tol):
    """Log-domain Sinkhorn updates on potentials ``f`` (rows), ``g`` (cols).

    ``f`` and ``g`` are updated in place (warm start). Columns are exact after
    each sweep, so convergence is measured on the row marginals.
    Returns ``(row_error, iterations)``.
    """
    cost = np.asarray(cost, dtype=np.float64)
    log_a = np.log(a)
    log_b = np.log(b)
    err = math.inf
    it = 0
    while it < max_iters:
        it += 1
        f[:] = eps * log_a - eps * _lse((g[None, :] - cost) / eps, axis=1)
        g[:] = eps * log_b - eps * _lse((f[:, None] - cost) / eps, axis=0)
        rows = np.exp((f[:, None] + g[None, :] - cost) / eps).sum(axis=1)
        err = float(np.max(np.abs(rows - a)))
        if err <= tol:
            break
    return err, it
