"""Slow, obviously-correct reference implementations used by the tests."""

from __future__ import annotations

import numpy as np

TIE = 1e-12


def avg_variance(Y, rows):
    sub = Y[rows]
    return float(np.mean(np.var(sub, axis=0)))


def brute_split(X, Y, rows, m_leaf=1):
    """Exhaustive search over every feature and every midpoint threshold.

    The reduction is computed directly from child variances; ties keep the
    earlier (feature, threshold) candidate.
    """
    n = len(rows)
    if n < 2 * m_leaf or n < 2:
        return None
    var = avg_variance(Y, rows)
    if not var > 0:
        return None
    best = None
    best_h = 0.0
    for f in range(X.shape[1]):
        col = X[rows, f]
        values = np.unique(col)
        for a, b in zip(values[:-1], values[1:]):
            thr = (a + b) / 2
            left = [r for r in rows if X[r, f] < thr]
            right = [r for r in rows if X[r, f] >= thr]
            if len(left) < m_leaf or len(right) < m_leaf:
                continue
            h = var - (len(left) * avg_variance(Y, left)
                       + len(right) * avg_variance(Y, right)) / n
            if h > best_h + TIE * var:
                best, best_h = (f, thr, left, right), h
    return None if best is None else (*best, best_h)


def brute_tree(X, Y, rows=None, m_leaf=1, max_depth=-1, depth=0):
    """Nested-dict tree grown with :func:`brute_split` on all features."""
    rows = list(range(X.shape[0])) if rows is None else list(rows)
    node = {"value": Y[rows].mean(axis=0), "count": len(rows)}
    if max_depth >= 0 and depth >= max_depth:
        return node
    split = brute_split(X, Y, rows, m_leaf)
    if split is None:
        return node
    f, thr, left, right, h = split
    node.update(feature=f, threshold=thr, gain=h,
                left=brute_tree(X, Y, left, m_leaf, max_depth, depth + 1),
                right=brute_tree(X, Y, right, m_leaf, max_depth, depth + 1))
    return node


def brute_predict(node, x):
    while "feature" in node:
        node = node["left"] if x[node["feature"]] < node["threshold"] else node["right"]
    return node["value"]


def close(a, b, rel=1e-12):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return bool(np.all(np.abs(a - b) <= rel * np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))))


def tree_mismatch(tree, oracle, node=0, path="root"):
    """First difference between a flat tree and an oracle tree, or None."""
    if not close(tree.value[node], oracle["value"]):
        return f"{path}: prototype {tree.value[node]} vs {oracle['value']}"
    if tree.count[node] != oracle["count"]:
        return f"{path}: count {tree.count[node]} vs {oracle['count']}"
    is_leaf = tree.feature[node] < 0
    if is_leaf != ("feature" not in oracle):
        return f"{path}: leaf status differs"
    if is_leaf:
        return None
    if tree.feature[node] != oracle["feature"]:
        return f"{path}: feature {tree.feature[node]} vs {oracle['feature']}"
    if not close(tree.threshold[node], oracle["threshold"]):
        return f"{path}: threshold {tree.threshold[node]} vs {oracle['threshold']}"
    return (tree_mismatch(tree, oracle["left"], tree.left[node], path + "L")
            or tree_mismatch(tree, oracle["right"], tree.right[node], path + "R"))


def dominated_oracle(points):
    """Indices of points not dominated by any other, by pairwise comparison."""
    keep = []
    for i, a in enumerate(points):
        if not any(b.time <= a.time and b.error <= a.error and (b.time < a.time or b.error < a.error)
                   for j, b in enumerate(points) if j != i):
            keep.append(i)
    return keep


def time_since_reference(activations, n, delta_t, theta):
    """Direct recurrence: f^0 = theta, reset to 0 on activation, else +delta_t capped."""
    out = np.empty(n)
    prev = theta
    for i in range(n):
        prev = 0.0 if i in activations else (theta if i == 0 else min(prev + delta_t, theta))
        out[i] = prev
    return out
