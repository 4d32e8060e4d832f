# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled split search and forest traversal.

Both functions mirror ``_kernels_py`` operation for operation so the two
backends grow bit-identical trees: weights are bootstrap counts (exact in
float64), and the Gini score uses the same expression order.
"""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free, qsort

cnp.import_array()


cdef struct Pair:
    double v
    Py_ssize_t i


cdef int _cmp_pair(const void* a, const void* b) noexcept nogil:
    cdef double va = (<Pair*>a).v
    cdef double vb = (<Pair*>b).v
    if va < vb:
        return -1
    if va > vb:
        return 1
    return 0


def best_split(const double[:, ::1] X, const double[::1] y, const double[::1] w,
               const Py_ssize_t[::1] idx, const Py_ssize_t[::1] feat_order,
               Py_ssize_t mtry):
    """Return ``(feature, threshold, score)``; feature is -1 when no split exists."""
    cdef Py_ssize_t m = idx.shape[0]
    cdef Py_ssize_t n_feat = feat_order.shape[0]
    cdef Py_ssize_t best_f = -1
    cdef double best_t = 0.0
    cdef double best_s = -1.0
    cdef Py_ssize_t visited = 0
    cdef Py_ssize_t q, j, f, r
    cdef double tot_w = 0.0, tot_p = 0.0
    cdef double lw, lp, ln, rw, rp, rn, s, a, b, t
    cdef Pair* buf
    if m < 2:
        return -1, 0.0, 0.0
    buf = <Pair*>malloc(m * sizeof(Pair))
    if buf == NULL:
        raise MemoryError()
    with nogil:
        for j in range(m):
            r = idx[j]
            tot_w = tot_w + w[r]
            tot_p = tot_p + y[r] * w[r]
        for q in range(n_feat):
            if visited >= mtry:
                break
            f = feat_order[q]
            for j in range(m):
                buf[j].v = X[idx[j], f]
                buf[j].i = idx[j]
            qsort(buf, m, sizeof(Pair), _cmp_pair)
            if buf[0].v == buf[m - 1].v:
                continue
            visited = visited + 1
            lw = 0.0
            lp = 0.0
            for j in range(m - 1):
                r = buf[j].i
                lw = lw + w[r]
                lp = lp + y[r] * w[r]
                if not (buf[j].v < buf[j + 1].v):
                    continue
                ln = lw - lp
                rw = tot_w - lw
                rp = tot_p - lp
                rn = rw - rp
                s = (lp * lp + ln * ln) / lw + (rp * rp + rn * rn) / rw
                if s > best_s or (s == best_s and f < best_f):
                    a = buf[j].v
                    b = buf[j + 1].v
                    t = (a + b) / 2.0
                    if t == b:
                        t = a
                    best_s = s
                    best_f = f
                    best_t = t
    free(buf)
    return best_f, best_t, best_s


def predict_forest(const double[:, ::1] X, const Py_ssize_t[::1] feature,
                   const double[::1] threshold, const Py_ssize_t[::1] left,
                   const Py_ssize_t[::1] right, const double[::1] value,
                   const Py_ssize_t[::1] roots):
    """Mean leaf positive fraction over all trees, per row of ``X``."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t n_trees = roots.shape[0]
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, t, node
    cdef double acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for t in range(n_trees):
                node = roots[t]
                while feature[node] >= 0:
                    if X[i, feature[node]] <= threshold[node]:
                        node = left[node]
                    else:
                        node = right[node]
                acc = acc + value[node]
            out[i] = acc / n_trees
    return out_arr
