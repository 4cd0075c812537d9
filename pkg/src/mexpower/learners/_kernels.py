"""Compiled split search, tree growth and tree application.

Trees are flat arrays.  Node ``i`` is a leaf when ``feature[i] == -1``;
otherwise rows with ``x[feature[i]] < threshold[i]`` go to ``left[i]``,
the rest to ``right[i]``, and NaN goes left iff ``missing_left[i]``.
"""

import numpy as np
from numba import njit

# A candidate split must beat the incumbent by this fraction of the node
# variance; keeps tie-breaking stable under summation-order rounding.
TIE_TOLERANCE = 1e-12


@njit(cache=True, nogil=True)
def node_variance(Y, rows):
    """Mean over target columns of the population variance on ``rows``."""
    n = rows.size
    T = Y.shape[1]
    mean = np.zeros(T)
    for k in range(n):
        for t in range(T):
            mean[t] += Y[rows[k], t]
    for t in range(T):
        mean[t] /= n
    ss = 0.0
    for k in range(n):
        for t in range(T):
            d = Y[rows[k], t] - mean[t]
            ss += d * d
    return ss / (n * T), mean


@njit(cache=True, nogil=True)
def best_split(X, Y, rows, features, m_leaf):
    """Best ``x_f < threshold`` test over ``features`` on the node ``rows``.

    Returns ``(feature, threshold, h)`` with ``feature == -1`` when no test
    reduces the variance while leaving ``m_leaf`` rows on either side.
    Rows missing the candidate feature are left out of its evaluation.
    """
    n = rows.size
    T = Y.shape[1]
    best_f = -1
    best_thr = np.nan
    best_h = 0.0
    if n < 2 * m_leaf or n < 2:
        return best_f, best_thr, best_h
    var, mean = node_variance(Y, rows)
    if not var > 0.0:
        return best_f, best_thr, best_h
    tol = TIE_TOLERANCE * var
    vals = np.empty(n)
    idx = np.empty(n, dtype=np.int64)
    mu = np.empty(T)
    acc = np.empty(T)
    for fi in range(features.size):
        f = features[fi]
        m = 0
        for k in range(n):
            v = X[rows[k], f]
            if not np.isnan(v):
                vals[m] = v
                idx[m] = rows[k]
                m += 1
        if m < 2 * m_leaf or m < 2:
            continue
        order = np.argsort(vals[:m], kind="mergesort")
        if m == n:
            for t in range(T):
                mu[t] = mean[t]
        else:
            for t in range(T):
                mu[t] = 0.0
            for k in range(m):
                for t in range(T):
                    mu[t] += Y[idx[k], t]
            for t in range(T):
                mu[t] /= m
        for t in range(T):
            acc[t] = 0.0
        for k in range(m - 1):
            r = idx[order[k]]
            for t in range(T):
                acc[t] += Y[r, t] - mu[t]
            n_left = k + 1
            n_right = m - n_left
            if n_right < m_leaf:
                break
            if n_left < m_leaf:
                continue
            a = vals[order[k]]
            b = vals[order[k + 1]]
            if a == b:
                continue
            # with centred targets the reduction of the average variance is
            # sum_t S_t^2 / (T * n_left * n_right), S_t the left-side sum
            s2 = 0.0
            for t in range(T):
                s2 += acc[t] * acc[t]
            h = s2 / (T * float(n_left) * float(n_right))
            if h > best_h + tol:
                thr = a + (b - a) * 0.5
                if not (a < thr <= b):
                    thr = b
                best_f = f
                best_thr = thr
                best_h = h
    return best_f, best_thr, best_h


@njit(cache=True, nogil=True)
def grow_tree(X, Y, rows, pool, n_sub, m_leaf, max_depth, seed):
    """Top-down induction with a fresh random feature subset at every node.

    ``pool`` lists the usable feature indices, ``n_sub`` of which are drawn
    without replacement per node.  ``max_depth < 0`` means unlimited.
    """
    np.random.seed(seed)
    n = rows.size
    T = Y.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    missing_left = np.zeros(cap, dtype=np.bool_)
    count = np.zeros(cap, dtype=np.int64)
    gain = np.zeros(cap)
    value = np.zeros((cap, T))

    work = rows.copy()
    buf = np.empty(n, dtype=np.int64)
    st_node = np.empty(cap, dtype=np.int64)
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    scratch = pool.copy()
    P = pool.size

    sp = 0
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    st_depth[0] = 0
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        lo = st_lo[sp]
        hi = st_hi[sp]
        depth = st_depth[sp]
        seg = work[lo:hi]
        cnt = hi - lo
        count[node] = cnt
        for k in range(cnt):
            for t in range(T):
                value[node, t] += Y[seg[k], t]
        for t in range(T):
            value[node, t] /= cnt
        if cnt < 2 * m_leaf or cnt < 2:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue

        for i in range(P):
            scratch[i] = pool[i]
        for i in range(n_sub):
            j = np.random.randint(i, P)
            tmp = scratch[i]
            scratch[i] = scratch[j]
            scratch[j] = tmp
        cand = np.sort(scratch[:n_sub])

        f, thr, h = best_split(X, Y, seg, cand, m_leaf)
        if f < 0:
            continue

        n_lt = 0
        n_ge = 0
        for k in range(cnt):
            v = X[seg[k], f]
            if v < thr:
                n_lt += 1
            elif v >= thr:
                n_ge += 1
        go_left = n_lt >= n_ge
        n_l = 0
        for k in range(cnt):
            v = X[seg[k], f]
            if v < thr or (np.isnan(v) and go_left):
                buf[n_l] = seg[k]
                n_l += 1
        n_r = 0
        for k in range(cnt):
            v = X[seg[k], f]
            if not (v < thr or (np.isnan(v) and go_left)):
                buf[n_l + n_r] = seg[k]
                n_r += 1
        for k in range(cnt):
            work[lo + k] = buf[k]

        feature[node] = f
        threshold[node] = thr
        missing_left[node] = go_left
        gain[node] = h
        left[node] = n_nodes
        right[node] = n_nodes + 1

        st_node[sp] = n_nodes + 1
        st_lo[sp] = lo + n_l
        st_hi[sp] = hi
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = n_nodes
        st_lo[sp] = lo
        st_hi[sp] = lo + n_l
        st_depth[sp] = depth + 1
        sp += 1
        n_nodes += 2

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), missing_left[:n_nodes].copy(), count[:n_nodes].copy(),
            gain[:n_nodes].copy(), value[:n_nodes].copy())


@njit(cache=True, nogil=True)
def apply_tree(X, feature, threshold, left, right, missing_left):
    """Leaf index reached by every row of ``X``."""
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            v = X[i, feature[node]]
            if np.isnan(v):
                node = left[node] if missing_left[node] else right[node]
            elif v < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out
