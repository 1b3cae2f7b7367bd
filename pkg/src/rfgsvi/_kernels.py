"""Compiled inner loops for tree growth and routing.

Trees are stored as flat node arrays (preorder of creation, children of a node
are allocated together when the node is split). Leaves have ``feature == -1``.
"""

import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True)
def _node_stats(y, idx, start, end):
    m = end - start
    s = 0.0
    for i in range(start, end):
        s += y[idx[i]]
    mean = s / m
    sse = 0.0
    for i in range(start, end):
        d = y[idx[i]] - mean
        sse += d * d
    return mean, sse


@njit(cache=True)
def _best_split_on(X, y, idx, start, end, f, min_node, xs, ys):
    """Best midpoint split of node rows on feature ``f``.

    Returns (criterion, threshold, n_left); criterion is sum_L^2/n_L + sum_R^2/n_R
    (maximising it minimises the summed child deviance). -inf if no valid split.
    """
    m = end - start
    for i in range(m):
        r = idx[start + i]
        xs[i] = X[r, f]
        ys[i] = y[r]
    order = np.argsort(xs[:m], kind="mergesort")
    total = 0.0
    for i in range(m):
        total += ys[i]
    best = -np.inf
    best_thr = 0.0
    best_nl = 0
    sl = 0.0
    for i in range(m - 1):
        a = xs[order[i]]
        sl += ys[order[i]]
        b = xs[order[i + 1]]
        if not (a < b):
            continue
        nl = i + 1
        nr = m - nl
        if nl < min_node or nr < min_node:
            continue
        sr = total - sl
        crit = sl * sl / nl + sr * sr / nr
        if crit > best:
            best = crit
            thr = 0.5 * (a + b)
            if not (thr < b):
                thr = a
            best_thr = thr
            best_nl = nl
    return best, best_thr, best_nl


@njit(cache=True)
def _surrogates(X, y, idx, start, end, f, thr, n_surr, xs, ys, goes_left, mean,
                sf_out, st_out, sflip_out, sa_out, sd_out):
    """Fill the surrogate table of one node; returns how many were kept."""
    m = end - start
    p = X.shape[1]
    n_left = 0
    for i in range(m):
        r = idx[start + i]
        gl = X[r, f] <= thr
        goes_left[i] = gl
        if gl:
            n_left += 1
    n_right = m - n_left
    baseline = max(n_left, n_right) / m
    cand_f = np.empty(p, np.int64)
    cand_t = np.empty(p)
    cand_flip = np.zeros(p, np.bool_)
    cand_a = np.empty(p)
    cand_d = np.empty(p)
    nc = 0
    gl_sorted = np.empty(m, np.bool_)
    for k in range(p):
        if k == f:
            continue
        for i in range(m):
            r = idx[start + i]
            xs[i] = X[r, k]
            ys[i] = y[r] - mean
        order = np.argsort(xs[:m], kind="mergesort")
        for i in range(m):
            gl_sorted[i] = goes_left[order[i]]
        total = 0.0
        sq_total = 0.0
        for i in range(m):
            total += ys[i]
            sq_total += ys[i] * ys[i]
        best_a = -1.0
        best_t = 0.0
        best_flip = False
        best_d = 0.0
        cl = 0
        sl = 0.0
        sql = 0.0
        for i in range(m - 1):
            oi = order[i]
            if gl_sorted[i]:
                cl += 1
            sl += ys[oi]
            sql += ys[oi] * ys[oi]
            a = xs[oi]
            b = xs[order[i + 1]]
            if not (a < b):
                continue
            nl = i + 1
            agree = (cl + (n_right - (nl - cl))) / m
            flip = False
            if 1.0 - agree > agree:
                agree = 1.0 - agree
                flip = True
            if agree > best_a:
                best_a = agree
                t = 0.5 * (a + b)
                if not (t < b):
                    t = a
                best_t = t
                best_flip = flip
                nr = m - nl
                sr = total - sl
                sqr = sq_total - sql
                node_dev = sq_total - total * total / m
                dev_l = sql - sl * sl / nl
                dev_r = sqr - sr * sr / nr
                best_d = max(0.0, node_dev - dev_l - dev_r)
        if best_a > baseline:
            cand_f[nc] = k
            cand_t[nc] = best_t
            cand_flip[nc] = best_flip
            cand_a[nc] = best_a
            cand_d[nc] = best_d
            nc += 1
    # order by agreement, ties by feature index (stable on ascending k)
    order = np.argsort(-cand_a[:nc], kind="mergesort")
    kept = min(nc, n_surr)
    for s in range(kept):
        c = order[s]
        sf_out[s] = cand_f[c]
        st_out[s] = cand_t[c]
        sflip_out[s] = cand_flip[c]
        sa_out[s] = cand_a[c]
        sd_out[s] = cand_d[c]
    return kept


@njit(cache=True)
def grow(X, y, rows, allowed, mtry, min_node, max_depth, rand, n_surr):
    """Grow one regression tree on ``rows`` (duplicates allowed).

    ``allowed`` lists the candidate feature indices in ascending order. When
    ``mtry < len(allowed)`` node ``t`` searches the ``mtry`` allowed features with
    the smallest keys in ``rand[t]``. ``max_depth < 0`` means unbounded.
    """
    n = rows.shape[0]
    p = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, LEAF, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, np.int64)
    deviance = np.zeros(cap)
    ns = max(n_surr, 1)
    sfeat = np.full((cap, ns), -1, np.int64)
    sthr = np.zeros((cap, ns))
    sflip = np.zeros((cap, ns), np.bool_)
    sagree = np.zeros((cap, ns))
    sdev = np.zeros((cap, ns))

    idx = rows.copy()
    tmp = np.empty(n, np.int64)
    xs = np.empty(n)
    ys = np.empty(n)
    goes_left = np.empty(n, np.bool_)
    n_allowed = allowed.shape[0]
    cand = np.empty(n_allowed, np.int64)

    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    sp = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        m = end - start
        mean, sse = _node_stats(y, idx, start, end)
        value[node] = mean
        count[node] = m
        deviance[node] = sse
        if m < 2 * min_node or sse <= 0.0 or depth == max_depth or n_allowed == 0:
            continue
        if mtry >= n_allowed:
            nc = n_allowed
            for c in range(n_allowed):
                cand[c] = allowed[c]
        else:
            keys = np.empty(n_allowed)
            for c in range(n_allowed):
                keys[c] = rand[node, allowed[c]]
            ko = np.argsort(keys, kind="mergesort")
            chosen = np.empty(mtry, np.int64)
            for c in range(mtry):
                chosen[c] = allowed[ko[c]]
            chosen.sort()
            nc = mtry
            for c in range(mtry):
                cand[c] = chosen[c]
        parent_crit = 0.0
        tot = 0.0
        for i in range(start, end):
            tot += y[idx[i]]
        parent_crit = tot * tot / m
        best = -np.inf
        best_f = -1
        best_thr = 0.0
        for c in range(nc):
            f = cand[c]
            crit, thr, nl = _best_split_on(X, y, idx, start, end, f, min_node, xs, ys)
            if crit > best:
                best = crit
                best_f = f
                best_thr = thr
        if best_f < 0 or not (best - parent_crit > 1e-12 * sse):
            continue
        if n_surr > 0:
            _surrogates(X, y, idx, start, end, best_f, best_thr, n_surr, xs, ys, goes_left, mean,
                        sfeat[node], sthr[node], sflip[node], sagree[node], sdev[node])
        # stable partition of idx[start:end]
        nl = 0
        nr = 0
        for i in range(start, end):
            r = idx[i]
            if X[r, best_f] <= best_thr:
                idx[start + nl] = r
                nl += 1
            else:
                tmp[nr] = r
                nr += 1
        for i in range(nr):
            idx[start + nl + i] = tmp[i]
        feature[node] = best_f
        threshold[node] = best_thr
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        st_node[sp] = rc
        st_start[sp] = start + nl
        st_end[sp] = end
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = lc
        st_start[sp] = start
        st_end[sp] = start + nl
        st_depth[sp] = depth + 1
        sp += 1

    k = n_nodes
    return (feature[:k].copy(), threshold[:k].copy(), left[:k].copy(), right[:k].copy(),
            value[:k].copy(), count[:k].copy(), deviance[:k].copy(),
            sfeat[:k, :n_surr].copy(), sthr[:k, :n_surr].copy(), sflip[:k, :n_surr].copy(),
            sagree[:k, :n_surr].copy(), sdev[:k, :n_surr].copy())


@njit(cache=True)
def apply_rows(feature, threshold, left, right, default_left, sfeat, sthr, sflip, X, available):
    """Leaf index reached by each row of X.

    A split on a feature marked unavailable falls back to the first surrogate on an
    available feature, then to the node's majority direction.
    """
    n = X.shape[0]
    out = np.empty(n, np.int64)
    n_surr = sfeat.shape[1]
    for r in range(n):
        node = 0
        while feature[node] >= 0:
            f = feature[node]
            if available[f]:
                go_left = X[r, f] <= threshold[node]
            else:
                go_left = default_left[node]
                for s in range(n_surr):
                    k = sfeat[node, s]
                    if k < 0:
                        break
                    if available[k]:
                        go_left = (X[r, k] <= sthr[node, s]) != sflip[node, s]
                        break
            node = left[node] if go_left else right[node]
        out[r] = node
    return out


@njit(cache=True)
def predict_rows(feature, threshold, left, right, value, X):
    n = X.shape[0]
    out = np.empty(n)
    for r in range(n):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]
    return out


@njit(cache=True)
def project_rows(feature, threshold, left, right, value, count, X, dropped):
    """Predictions of the tree with direction ``dropped`` projected out.

    Both children are followed at splits on ``dropped``; the result is the
    count-weighted mean of the reached leaves. ``dropped < 0`` gives plain routing.
    """
    n = X.shape[0]
    out = np.empty(n)
    stack = np.empty(feature.shape[0], np.int64)
    for r in range(n):
        sp = 1
        stack[0] = 0
        n_leaves = 0
        last = 0
        num = 0.0
        den = 0.0
        while sp > 0:
            sp -= 1
            node = stack[sp]
            f = feature[node]
            if f < 0:
                num += count[node] * value[node]
                den += count[node]
                n_leaves += 1
                last = node
            elif f == dropped:
                stack[sp] = right[node]
                stack[sp + 1] = left[node]
                sp += 2
            elif X[r, f] <= threshold[node]:
                stack[sp] = left[node]
                sp += 1
            else:
                stack[sp] = right[node]
                sp += 1
        out[r] = value[last] if n_leaves == 1 else num / den
    return out


@njit(cache=True)
def project_leaves(feature, threshold, left, right, x, dropped):
    """Leaf ids reached by a single point under projection of ``dropped``."""
    stack = np.empty(feature.shape[0], np.int64)
    leaves = np.empty(feature.shape[0], np.int64)
    n_leaves = 0
    sp = 1
    stack[0] = 0
    while sp > 0:
        sp -= 1
        node = stack[sp]
        f = feature[node]
        if f < 0:
            leaves[n_leaves] = node
            n_leaves += 1
        elif f == dropped:
            stack[sp] = right[node]
            stack[sp + 1] = left[node]
            sp += 2
        elif x[f] <= threshold[node]:
            stack[sp] = left[node]
            sp += 1
        else:
            stack[sp] = right[node]
            sp += 1
    return np.sort(leaves[:n_leaves])


@njit(cache=True)
def project_signatures(feature, threshold, left, right, X, dropped, leaf_key):
    """Hash of the set of leaves reached by each row under projection of ``dropped``.

    The hash is the wrapping sum of per-node 64-bit keys; rows with equal reached
    sets (the same projected cell) get equal hashes.
    """
    n = X.shape[0]
    out = np.empty(n, np.uint64)
    stack = np.empty(feature.shape[0], np.int64)
    for r in range(n):
        sp = 1
        stack[0] = 0
        h = np.uint64(0)
        while sp > 0:
            sp -= 1
            node = stack[sp]
            f = feature[node]
            if f < 0:
                h += leaf_key[node]
            elif f == dropped:
                stack[sp] = right[node]
                stack[sp + 1] = left[node]
                sp += 2
            elif X[r, f] <= threshold[node]:
                stack[sp] = left[node]
                sp += 1
            else:
                stack[sp] = right[node]
                sp += 1
        out[r] = h
    return out
