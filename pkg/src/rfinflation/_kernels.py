"""Compiled inner loops for MAE trees and coordinate descent."""
import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True, nogil=True)
def _insert_sorted(buf, k, v):
    # buf[:k] is sorted; place v keeping order
    i = k
    while i > 0 and buf[i - 1] > v:
        buf[i] = buf[i - 1]
        i -= 1
    buf[i] = v


@njit(cache=True, nogil=True)
def sorted_median(buf, k):
    return 0.5 * (buf[(k - 1) // 2] + buf[k // 2])


@njit(cache=True, nogil=True)
def sorted_sad(buf, k):
    med = sorted_median(buf, k)
    s = 0.0
    for i in range(k):
        s += abs(buf[i] - med)
    return s


@njit(cache=True, nogil=True)
def node_sad(y, rows, start, end):
    n = end - start
    buf = np.empty(n)
    for i in range(n):
        buf[i] = y[rows[start + i]]
    buf.sort()
    return sorted_sad(buf, n)


@njit(cache=True, nogil=True)
def best_split_rows(X, y, rows, start, end, cand, min_leaf, tol):
    """Exhaustive MAE split over candidate features for rows[start:end].

    Returns (feature, threshold, children_sad, parent_sad); feature == -1
    when no admissible split strictly lowers the absolute-deviation sum.
    """
    n = end - start
    parent = node_sad(y, rows, start, end)
    best_f = LEAF
    best_thr = 0.0
    best = np.inf
    if n < 2 * min_leaf or n < 2:
        return best_f, best_thr, best, parent
    xs = np.empty(n)
    ys = np.empty(n)
    left = np.empty(n)
    right = np.empty(n)
    buf = np.empty(n)
    for c in range(cand.shape[0]):
        f = cand[c]
        for i in range(n):
            xs[i] = X[rows[start + i], f]
        order = np.argsort(xs, kind="mergesort")
        for i in range(n):
            ys[i] = y[rows[start + order[i]]]
        xs = xs[order]
        # left[k-1]: sad of the first k sorted targets; right[k]: sad of the rest
        for k in range(1, n + 1):
            _insert_sorted(buf, k - 1, ys[k - 1])
            left[k - 1] = sorted_sad(buf, k)
        for k in range(1, n + 1):
            _insert_sorted(buf, k - 1, ys[n - k])
            right[n - k] = sorted_sad(buf, k)
        for k in range(min_leaf, n - min_leaf + 1):
            if xs[k - 1] == xs[k]:
                continue
            total = left[k - 1] + right[k]
            if total < best - tol:
                thr = 0.5 * (xs[k - 1] + xs[k])
                if thr >= xs[k]:
                    thr = xs[k - 1]
                best = total
                best_f = f
                best_thr = thr
    if best_f != LEAF and parent - best <= tol:
        best_f = LEAF
    return best_f, best_thr, best, parent


@njit(cache=True, nogil=True)
def grow_tree(X, y, max_depth, n_cand, min_leaf, keys, tol):
    """Depth-first tree growth on (X, y); row i of ``keys`` ranks the
    candidate features of the i-th node processed."""
    n, d = X.shape
    cap = keys.shape[0]
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, dtype=np.int64)
    right = np.full(cap, LEAF, dtype=np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)
    sad = np.zeros(cap)
    depth = np.zeros(cap, dtype=np.int64)

    rows = np.arange(n)
    tmp = np.empty(n, dtype=np.int64)
    # stack entries: node id, start, end
    stack = np.empty((cap, 3), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    top = 1
    n_nodes = 1
    processed = 0
    buf = np.empty(n)
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        m = end - start
        for i in range(m):
            buf[i] = y[rows[start + i]]
        buf[:m].sort()
        value[node] = sorted_median(buf, m)
        sad[node] = sorted_sad(buf, m)
        count[node] = m
        order = np.argsort(keys[processed], kind="mergesort")
        processed += 1
        if depth[node] >= max_depth or m < 2 * min_leaf or m < 2:
            continue
        cand = np.sort(order[:n_cand])
        f, thr, _, _ = best_split_rows(X, y, rows, start, end, cand, min_leaf, tol)
        if f == LEAF:
            continue
        # stable partition: <= thr first
        nl = 0
        for i in range(start, end):
            if X[rows[i], f] <= thr:
                tmp[nl] = rows[i]
                nl += 1
        nr = nl
        for i in range(start, end):
            if X[rows[i], f] > thr:
                tmp[nr] = rows[i]
                nr += 1
        for i in range(m):
            rows[start + i] = tmp[i]
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[node] = f
        threshold[node] = thr
        left[node] = lid
        right[node] = rid
        depth[lid] = depth[node] + 1
        depth[rid] = depth[node] + 1
        # right pushed first so the left child is processed next
        stack[top, 0] = rid
        stack[top, 1] = start + nl
        stack[top, 2] = end
        top += 1
        stack[top, 0] = lid
        stack[top, 1] = start
        stack[top, 2] = start + nl
        top += 1
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], count[:n_nodes], sad[:n_nodes], depth[:n_nodes])


@njit(cache=True, nogil=True)
def predict_tree(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@njit(cache=True, nogil=True)
def resident_sads(feature, threshold, left, right, X, y):
    """Absolute-deviation sum around the median of the rows reaching each node."""
    n_nodes = feature.shape[0]
    n = X.shape[0]
    counts = np.zeros(n_nodes, dtype=np.int64)
    for i in range(n):
        node = 0
        while True:
            counts[node] += 1
            if feature[node] == LEAF:
                break
            node = left[node] if X[i, feature[node]] <= threshold[node] else right[node]
    offsets = np.zeros(n_nodes + 1, dtype=np.int64)
    for j in range(n_nodes):
        offsets[j + 1] = offsets[j] + counts[j]
    fill = offsets[:-1].copy()
    vals = np.empty(offsets[-1])
    for i in range(n):
        node = 0
        while True:
            vals[fill[node]] = y[i]
            fill[node] += 1
            if feature[node] == LEAF:
                break
            node = left[node] if X[i, feature[node]] <= threshold[node] else right[node]
    out = np.zeros(n_nodes)
    for j in range(n_nodes):
        k = counts[j]
        if k > 0:
            seg = np.sort(vals[offsets[j]:offsets[j + 1]])
            out[j] = sorted_sad(seg, k)
    return out, counts


@njit(cache=True, nogil=True)
def lasso_cd(X, y, lam, beta, tol, max_sweeps):
    """Cyclic coordinate descent for (1/2n)||y - X b||^2 + lam ||b||_1.

    Columns of X are standardized (mean 0, mean square 1 or all zero); y is
    centered. ``beta`` is the warm start and is updated in place.
    """
    n, d = X.shape
    r = y - X @ beta
    cols = np.ascontiguousarray(X.T)
    sq = np.empty(d)
    for j in range(d):
        sq[j] = cols[j] @ cols[j] / n
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        sweeps += 1
        delta = 0.0
        for j in range(d):
            if sq[j] == 0.0:
                beta[j] = 0.0
                continue
            old = beta[j]
            z = cols[j] @ r / n + sq[j] * old
            if z > lam:
                new = (z - lam) / sq[j]
            elif z < -lam:
                new = (z + lam) / sq[j]
            else:
                new = 0.0
            if new != old:
                r -= (new - old) * cols[j]
                beta[j] = new
                if abs(new - old) > delta:
                    delta = abs(new - old)
        if delta < tol:
            converged = True
            break
    return beta, sweeps, converged
