# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: pairwise IoU, greedy NMS, rectangular LSAP, log-domain Sinkhorn."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, INFINITY

cnp.import_array()


cdef inline double _iou4(const double[:, ::1] a, Py_ssize_t i,
                         const double[:, ::1] b, Py_ssize_t j) noexcept nogil:
    cdef double iw = min(a[i, 2], b[j, 2]) - max(a[i, 0], b[j, 0])
    cdef double ih = min(a[i, 3], b[j, 3]) - max(a[i, 1], b[j, 1])
    cdef double inter, union
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = ((a[i, 2] - a[i, 0]) * (a[i, 3] - a[i, 1])
             + (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1]) - inter)
    if union <= 0.0:
        return 0.0
    return inter / union


def pairwise_iou(a, b):
    cdef const double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 4)
    cdef const double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 4)
    cdef Py_ssize_t m = av.shape[0], n = bv.shape[0], i, j
    out = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] ov = out
    with nogil:
        for i in range(m):
            for j in range(n):
                ov[i, j] = _iou4(av, i, bv, j)
    return out


def nms_ordered(boxes, order, double threshold):
    cdef const double[:, ::1] bv = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 4)
    cdef cnp.intp_t[::1] ord_ = np.ascontiguousarray(order, dtype=np.intp)
    cdef Py_ssize_t n = ord_.shape[0], pos, q, i, j, nkeep = 0
    supp = np.zeros(bv.shape[0], dtype=np.uint8)
    cdef unsigned char[::1] sv = supp
    keep = np.empty(n, dtype=np.intp)
    cdef cnp.intp_t[::1] kv = keep
    with nogil:
        for pos in range(n):
            i = ord_[pos]
            if sv[i]:
                continue
            kv[nkeep] = i
            nkeep += 1
            for q in range(pos + 1, n):
                j = ord_[q]
                if not sv[j] and _iou4(bv, i, bv, j) > threshold:
                    sv[j] = 1
    return keep[:nkeep].copy()


def lsap(cost):
    cdef const double[:, ::1] c = np.ascontiguousarray(cost, dtype=np.float64)
    cdef Py_ssize_t m = c.shape[0], n = c.shape[1]
    cdef Py_ssize_t i, j, i0, j0, j1
    cdef double delta, cur
    u_ = np.zeros(m + 1); v_ = np.zeros(n + 1); minv_ = np.empty(n + 1)
    p_ = np.zeros(n + 1, dtype=np.intp); way_ = np.zeros(n + 1, dtype=np.intp)
    used_ = np.zeros(n + 1, dtype=np.uint8)
    cdef double[::1] u = u_, v = v_, minv = minv_
    cdef cnp.intp_t[::1] p = p_, way = way_
    cdef unsigned char[::1] used = used_
    with nogil:
        for i in range(1, m + 1):
            p[0] = i
            j0 = 0
            for j in range(n + 1):
                minv[j] = INFINITY
                used[j] = 0
            while True:
                used[j0] = 1
                i0 = p[j0]
                delta = INFINITY
                j1 = 0
                for j in range(1, n + 1):
                    if not used[j]:
                        cur = c[i0 - 1, j - 1] - u[i0] - v[j]
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
    out = np.empty(m, dtype=np.intp)
    for j in range(1, n + 1):
        if p[j]:
            out[p[j] - 1] = j - 1
    return out


cdef inline double _lse_row(const double[:, ::1] m, Py_ssize_t i, const double[::1] shift) noexcept nogil:
    """log sum_j exp(shift[j] - m[i, j])."""
    cdef Py_ssize_t j, n = m.shape[1]
    cdef double mx = -INFINITY, s = 0.0, x
    for j in range(n):
        x = shift[j] - m[i, j]
        if x > mx:
            mx = x
    for j in range(n):
        s += exp(shift[j] - m[i, j] - mx)
    return mx + log(s)


def sinkhorn_log(cost, a, b, double eps, f, g, Py_ssize_t max_iters, double tol):
    cdef double inv = 1.0 / eps
    # scaled copies: rows read cs, columns read its transpose, both contiguous
    cs_ = np.ascontiguousarray(np.asarray(cost, dtype=np.float64) * inv)
    cdef const double[:, ::1] cs = cs_
    cdef const double[:, ::1] ct = np.ascontiguousarray(cs_.T)
    cdef const double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[::1] fv = f, gv = g
    cdef Py_ssize_t r = cs.shape[0], n = cs.shape[1], i, j, it = 0
    cdef double err = INFINITY, x
    la_ = np.log(np.asarray(av)); lb_ = np.log(np.asarray(b, dtype=np.float64))
    fs_ = np.asarray(f) * inv; gs_ = np.asarray(g) * inv; L_ = np.empty(r)
    cdef double[::1] la = la_, lb = lb_, fs = fs_, gs = gs_, L = L_
    with nogil:
        for i in range(r):
            L[i] = _lse_row(cs, i, gs)
        while it < max_iters:
            it += 1
            for i in range(r):
                fs[i] = la[i] - L[i]
            for j in range(n):
                gs[j] = lb[j] - _lse_row(ct, j, fs)
            # the next row update's log-sum-exp also gives this sweep's row sums
            err = 0.0
            for i in range(r):
                L[i] = _lse_row(cs, i, gs)
                x = fabs(exp(fs[i] + L[i]) - av[i])
                if x > err:
                    err = x
            if err <= tol:
                break
        for i in range(r):
            fv[i] = eps * fs[i]
        for j in range(n):
            gv[j] = eps * gs[j]
    return err, it
