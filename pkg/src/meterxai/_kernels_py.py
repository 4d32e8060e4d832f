"""Pure-numpy kernels, used when the compiled extension is unavailable.

Kept operation-for-operation equivalent to ``_kernels_ext.pyx``.
"""

import numpy as np


def best_split(X, y, w, idx, feat_order, mtry):
    m = idx.shape[0]
    if m < 2:
        return -1, 0.0, 0.0
    yw = y[idx] * w[idx]
    ww = w[idx]
    tot_w = float(np.sum(ww))
    tot_p = float(np.sum(yw))
    best_f, best_t, best_s = -1, 0.0, -1.0
    visited = 0
    for f in feat_order:
        if visited >= mtry:
            break
        v = X[idx, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        if vs[0] == vs[-1]:
            continue
        visited += 1
        cw = np.cumsum(ww[order])[:-1]
        cp = np.cumsum(yw[order])[:-1]
        cut = np.flatnonzero(vs[:-1] < vs[1:])
        lw = cw[cut]
        lp = cp[cut]
        ln = lw - lp
        rw = tot_w - lw
        rp = tot_p - lp
        rn = rw - rp
        s = (lp * lp + ln * ln) / lw + (rp * rp + rn * rn) / rw
        j = int(np.argmax(s))
        if s[j] > best_s or (s[j] == best_s and f < best_f):
            a = float(vs[cut[j]])
            b = float(vs[cut[j] + 1])
            t = (a + b) / 2.0
            if t == b:
                t = a
            best_f, best_t, best_s = int(f), t, float(s[j])
    return best_f, best_t, best_s


def predict_forest(X, feature, threshold, left, right, value, roots):
    n = X.shape[0]
    acc = np.zeros(n, dtype=np.float64)
    rows = np.arange(n)
    for root in roots:
        node = np.full(n, root, dtype=np.intp)
        while True:
            f = feature[node]
            inner = f >= 0
            if not inner.any():
                break
            ni = node[inner]
            go_left = X[rows[inner], f[inner]] <= threshold[ni]
            node[inner] = np.where(go_left, left[ni], right[ni])
        acc += value[node]
    return acc / len(roots)
