"""Compiled inner loops for tree growing and prediction.

Trees are flat arrays. Node ``k`` of a tree is internal when ``var[k] >= 0``;
``mask[k] == 0`` marks an ordered split (``x <= cut`` goes left), otherwise
bit ``c`` of ``mask[k]`` sends category code ``c`` left. ``left``/``right``
index into the same tree.

Each row ``i`` carries a multiplier ``b[i]`` so that leaf likelihoods are
``N(r[i]; b[i] * mu, sigma2)``. With ``b == 1`` this is the plain
regression-tree model.

Node membership is kept XBART style: ``order[j, start:end]`` lists the node's
rows sorted by axis ``j``; a stable partition on split keeps both children
contiguous and sorted in every axis.
"""

import numpy as np
from numba import njit

MAX_EXHAUSTIVE_LEVELS = 5


@njit(cache=True)
def loglik(W, R, sigma2, tau):
    d = sigma2 + tau * W
    return 0.5 * np.log(sigma2 / d) + tau * R * R / (2.0 * sigma2 * d)


@njit(cache=True)
def node_split(X, order, start, end, is_cat, n_levels, r, b, sigma2, tau,
               alpha, beta, depth, max_depth, max_cut, u):
    """Sample a split for one node.

    Returns ``(var, cut, mask, n_candidates)``; ``var == -1`` means no split.
    ``u`` is the Uniform(0, 1) variate driving the categorical draw.
    """
    q = X.shape[1]
    n = end - start
    if depth >= max_depth or n < 2:
        return -1, 0.0, 0, 0
    W = 0.0
    R = 0.0
    for k in range(start, end):
        i = order[0, k]
        W += b[i] * b[i]
        R += b[i] * r[i]
    ll_node = loglik(W, R, sigma2, tau)

    cap = q * (max(max_cut, 1 << (MAX_EXHAUSTIVE_LEVELS - 1)) + 1)
    c_ll = np.empty(cap)
    c_var = np.empty(cap, np.int64)
    c_cut = np.empty(cap)
    c_mask = np.empty(cap, np.int64)
    nc = 0
    bpos = np.empty(n, np.int64)
    bW = np.empty(n)
    bR = np.empty(n)

    for j in range(q):
        if is_cat[j] and n_levels[j] <= MAX_EXHAUSTIVE_LEVELS:
            L = n_levels[j]
            levW = np.zeros(L)
            levR = np.zeros(L)
            levN = np.zeros(L, np.int64)
            for k in range(start, end):
                i = order[j, k]
                c = int(X[i, j])
                levW[c] += b[i] * b[i]
                levR[c] += b[i] * r[i]
                levN[c] += 1
            obs = np.empty(L, np.int64)
            n_obs = 0
            for c in range(L):
                if levN[c] > 0:
                    obs[n_obs] = c
                    n_obs += 1
            if n_obs < 2:
                continue
            # subsets of all but the last observed level: each unordered
            # partition appears exactly once
            for sub in range(1, 1 << (n_obs - 1)):
                m = 0
                WL = 0.0
                RL = 0.0
                for bit in range(n_obs - 1):
                    if (sub >> bit) & 1:
                        lev = obs[bit]
                        m |= 1 << lev
                        WL += levW[lev]
                        RL += levR[lev]
                c_ll[nc] = loglik(WL, RL, sigma2, tau) + loglik(W - WL, R - RL, sigma2, tau)
                c_var[nc] = j
                c_cut[nc] = 0.0
                c_mask[nc] = m
                nc += 1
        else:
            nb = 0
            WL = 0.0
            RL = 0.0
            for k in range(start, end - 1):
                i = order[j, k]
                WL += b[i] * b[i]
                RL += b[i] * r[i]
                if X[i, j] < X[order[j, k + 1], j]:
                    bpos[nb] = k
                    bW[nb] = WL
                    bR[nb] = RL
                    nb += 1
            if nb == 0:
                continue
            last = -1
            n_take = nb if nb <= max_cut else max_cut
            for m in range(n_take):
                if nb <= max_cut:
                    idx = m
                else:
                    # boundary at or after the (m+1)-th evenly spaced order statistic
                    target = start + ((m + 1) * n) // (max_cut + 1) - 1
                    idx = np.searchsorted(bpos[:nb], target)
                    if idx >= nb:
                        idx = nb - 1
                    if idx == last:
                        continue
                last = idx
                k = bpos[idx]
                c_ll[nc] = (loglik(bW[idx], bR[idx], sigma2, tau)
                            + loglik(W - bW[idx], R - bR[idx], sigma2, tau))
                c_var[nc] = j
                c_cut[nc] = 0.5 * (X[order[j, k], j] + X[order[j, k + 1], j])
                c_mask[nc] = 0
                nc += 1

    if nc == 0:
        return -1, 0.0, 0, 0
    p_split = alpha * (1.0 + depth) ** (-beta)
    log_ps = np.log(p_split)
    lw_no = ll_node + np.log(1.0 - p_split) + np.log(nc)
    top = lw_no
    for c in range(nc):
        c_ll[c] += log_ps
        if c_ll[c] > top:
            top = c_ll[c]
    total = np.exp(lw_no - top)
    for c in range(nc):
        total += np.exp(c_ll[c] - top)
    target = u * total
    acc = np.exp(lw_no - top)
    if target < acc:
        return -1, 0.0, 0, nc
    for c in range(nc):
        acc += np.exp(c_ll[c] - top)
        if target < acc:
            return c_var[c], c_cut[c], c_mask[c], nc
    c = nc - 1
    return c_var[c], c_cut[c], c_mask[c], nc


@njit(cache=True)
def _goes_left(xv, cut, mask):
    if mask == 0:
        return xv <= cut
    c = int(xv)
    return c >= 0 and ((mask >> c) & 1) == 1


@njit(cache=True)
def grow(X, order0, is_cat, n_levels, r, b, sigma2, tau, alpha, beta,
         max_depth, max_cut, cap, seed):
    """Grow one tree from the root; returns the node arrays and fitted values."""
    np.random.seed(seed)
    q, N = order0.shape
    order = order0.copy()
    buf = np.empty(N, np.int64)
    goleft = np.zeros(N, np.bool_)

    var = np.full(cap, -1, np.int64)
    cut = np.zeros(cap)
    mask = np.zeros(cap, np.int64)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    fitted = np.zeros(N)

    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    sp = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = N
    st_depth[0] = 0
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        u = np.random.random()
        limit = max_depth if n_nodes + 2 <= cap else depth
        j, c, m, _ = node_split(X, order, start, end, is_cat, n_levels, r, b, sigma2, tau,
                                alpha, beta, depth, limit, max_cut, u)
        if j < 0:
            W = 0.0
            R = 0.0
            for k in range(start, end):
                i = order[0, k]
                W += b[i] * b[i]
                R += b[i] * r[i]
            d = sigma2 + tau * W
            mu = tau * R / d + np.sqrt(sigma2 * tau / d) * np.random.standard_normal()
            value[node] = mu
            for k in range(start, end):
                fitted[order[0, k]] = mu
            continue

        n_left = 0
        for k in range(start, end):
            i = order[0, k]
            g = _goes_left(X[i, j], c, m)
            goleft[i] = g
            if g:
                n_left += 1
        for jj in range(q):
            a = start
            nb = 0
            for k in range(start, end):
                i = order[jj, k]
                if goleft[i]:
                    order[jj, a] = i
                    a += 1
                else:
                    buf[nb] = i
                    nb += 1
            for k in range(nb):
                order[jj, a + k] = buf[k]

        var[node] = j
        cut[node] = c
        mask[node] = m
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        # right pushed first so the left subtree is grown first
        st_node[sp] = rc
        st_start[sp] = start + n_left
        st_end[sp] = end
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = lc
        st_start[sp] = start
        st_end[sp] = start + n_left
        st_depth[sp] = depth + 1
        sp += 1

    return (var[:n_nodes].copy(), cut[:n_nodes].copy(), mask[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(), value[:n_nodes].copy(), fitted)


@njit(cache=True)
def predict_forest(X, var, cut, mask, left, right, value, offsets):
    """Sum of tree outputs per row; tree ``t`` occupies ``offsets[t]:offsets[t+1]``."""
    N = X.shape[0]
    out = np.zeros(N)
    for t in range(offsets.shape[0] - 1):
        base = offsets[t]
        for i in range(N):
            node = 0
            while var[base + node] >= 0:
                k = base + node
                if _goes_left(X[i, var[k]], cut[k], mask[k]):
                    node = left[k]
                else:
                    node = right[k]
            out[i] += value[base + node]
    return out


@njit(cache=True)
def predict_each(X, var, cut, mask, left, right, value, offsets):
    """Per-tree outputs, shape (n_trees, N)."""
    N = X.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.zeros((n_trees, N))
    for t in range(n_trees):
        base = offsets[t]
        for i in range(N):
            node = 0
            while var[base + node] >= 0:
                k = base + node
                if _goes_left(X[i, var[k]], cut[k], mask[k]):
                    node = left[k]
                else:
                    node = right[k]
            out[t, i] = value[base + node]
    return out
