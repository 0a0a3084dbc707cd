"""Pure numpy kernels; same signatures and arithmetic as ``_kernels.pyx``."""
import math

import numpy as np

from ._rng import FEATURE_SALT, ranked_features, stream, stream_array, to_unit

GAIN_EPS = 1e-12
_EXP_M1 = 0.36787944117144233


def _gini(p, n):
    with np.errstate(divide="ignore", invalid="ignore"):
        w = p + n
        a = p / w
        b = n / w
        g = 1.0 - (a * a + b * b)
    return np.where(w > 0.0, g, 0.0)


def _gini_scalar(p, n):
    w = p + n
    if w <= 0.0:
        return 0.0
    a = p / w
    b = n / w
    return 1.0 - (a * a + b * b)


def build_tree(XT, pos_w, neg_w, rows, max_depth, min_leaf, mtry, tkey):
    W = XT.shape[0]
    mtry = max(1, min(int(mtry), W))
    feature, threshold, left, right, pos, neg = [-1], [0.0], [-1], [-1], [], []
    rows = np.asarray(rows, dtype=np.int64)
    pos.append(float(np.sum(pos_w[rows])))
    neg.append(float(np.sum(neg_w[rows])))
    stack = [(0, rows, 0)]
    while stack:
        node, r, depth = stack.pop()
        p, q = pos[node], neg[node]
        w = p + q
        if depth >= max_depth or p == 0.0 or q == 0.0 or w < 2.0 * min_leaf:
            continue
        gp = _gini_scalar(p, q)
        cand = ranked_features(stream(tkey ^ FEATURE_SALT, node), W)[:mtry]
        V = XT[cand][:, r]
        order = np.argsort(V, axis=1, kind="stable")
        Vs = np.take_along_axis(V, order, axis=1)
        PW = pos_w[r][order]
        NW = neg_w[r][order]
        cpl = np.cumsum(PW, axis=1)[:, :-1]
        cnl = np.cumsum(NW, axis=1)[:, :-1]
        wl = cpl + cnl
        wr = w - wl
        valid = (Vs[:, :-1] < Vs[:, 1:]) & (wl >= min_leaf) & (wr >= min_leaf)
        if not valid.any():
            continue
        gain = gp - (wl / w) * _gini(cpl, cnl) - (wr / w) * _gini(p - cpl, q - cnl)
        gain = np.where(valid, gain, -np.inf)
        flat = int(np.argmax(gain))
        fi, k = divmod(flat, gain.shape[1])
        if not gain[fi, k] > GAIN_EPS:
            continue
        f = int(cand[fi])
        thr = 0.5 * (Vs[fi, k] + Vs[fi, k + 1])
        if thr >= Vs[fi, k + 1]:
            thr = Vs[fi, k]
        go_left = XT[f, r] <= thr
        rl, rr = r[go_left], r[~go_left]
        lp = float(np.sum(pos_w[rl]))
        ln = float(np.sum(neg_w[rl]))
        nid = len(feature)
        feature[node], threshold[node] = f, float(thr)
        left[node], right[node] = nid, nid + 1
        feature += [-1, -1]
        threshold += [0.0, 0.0]
        left += [-1, -1]
        right += [-1, -1]
        pos += [lp, p - lp]
        neg += [ln, q - ln]
        stack.append((nid + 1, rr, depth + 1))
        stack.append((nid, rl, depth + 1))
    return (np.array(feature, dtype=np.int32), np.array(threshold, dtype=np.float64),
            np.array(left, dtype=np.int32), np.array(right, dtype=np.int32),
            np.array(pos, dtype=np.float64), np.array(neg, dtype=np.float64))


def predict_tree_add(X, feature, threshold, left, right, value, out):
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    active = feature[node] >= 0
    while active.any():
        idx = rows[active]
        nd = node[idx]
        f = feature[nd]
        go = X[idx, f] <= threshold[nd]
        node[idx] = np.where(go, left[nd], right[nd])
        active[idx] = feature[node[idx]] >= 0
    out += value[node]


def _poisson1(u):
    k = 0
    p = _EXP_M1
    c = p
    while u > c and k < 32:
        k += 1
        p = p / k
        c = c + p
    return k


def _norm_cdf(z):
    az = -z if z < 0.0 else z
    t = 1.0 / (1.0 + 0.2316419 * az)
    poly = t * (0.319381530 + t * (-0.356563782 + t * (1.781477937
                + t * (-1.821255978 + t * 1.330274429))))
    upper = 0.3989422804014327 * math.exp(-0.5 * az * az) * poly
    return upper if z < 0.0 else 1.0 - upper


def _feature_gain(st, lo_v, hi_v, nonbin, cp, cn, n, gp):
    """Best (gain, threshold, left_pos, left_neg) for one feature of a leaf."""
    w0, s0, q0 = st[0]
    w1, s1, q1 = st[1]
    best = (-1.0, 0.0, 0.0, 0.0)
    if not nonbin:
        lp = w1 - s1
        ln = w0 - s0
        wl = lp + ln
        if wl > 0.0 and n - wl > 0.0:
            g = gp - (wl / n) * _gini_scalar(lp, ln) - ((n - wl) / n) * _gini_scalar(cp - lp, cn - ln)
            best = (g, 0.5, lp, ln)
        return best
    mu0 = mu1 = sd0 = sd1 = 0.0
    if w0 > 0.0:
        mu0 = s0 / w0
        var = q0 / w0 - mu0 * mu0
        sd0 = math.sqrt(var) if var > 0.0 else 0.0
    if w1 > 0.0:
        mu1 = s1 / w1
        var = q1 / w1 - mu1 * mu1
        sd1 = math.sqrt(var) if var > 0.0 else 0.0
    for t in range(10):
        thr = lo_v + (hi_v - lo_v) * (t + 1) / 11.0
        if w0 <= 0.0:
            l0 = 0.0
        elif sd0 > 0.0:
            l0 = w0 * _norm_cdf((thr - mu0) / sd0)
        else:
            l0 = w0 if thr >= mu0 else 0.0
        if w1 <= 0.0:
            l1 = 0.0
        elif sd1 > 0.0:
            l1 = w1 * _norm_cdf((thr - mu1) / sd1)
        else:
            l1 = w1 if thr >= mu1 else 0.0
        wl = l1 + l0
        if not (wl > 0.0 and n - wl > 0.0):
            continue
        g = gp - (wl / n) * _gini_scalar(l1, l0) - ((n - wl) / n) * _gini_scalar(cp - l1, cn - l0)
        if g > best[0]:
            best = (g, thr, l1, l0)
    return best


def hoeffding_learn(X, y, pos, end, node_feature, node_threshold, node_left, node_right,
                    node_leaf, leaf_node, leaf_class, leaf_seen, leaf_stats, leaf_min,
                    leaf_max, leaf_nonbinary, subspace, meta, key, grace, delta, tau):
    cap_nodes = node_feature.shape[0]
    cap_leaves = leaf_class.shape[0]
    n_nodes, n_leaves, counter = int(meta[0]), int(meta[1]), int(meta[2])
    pos0 = pos
    u = to_unit(stream_array(key, np.arange(counter, counter + max(end - pos, 0),
                                            dtype=np.uint64)))
    while pos < end:
        if n_nodes + 2 > cap_nodes or n_leaves + 1 > cap_leaves:
            break
        k = _poisson1(float(u[pos - pos0]))
        counter += 1
        if k == 0:
            pos += 1
            continue
        kw = float(k)
        yi = 1 if y[pos] else 0
        node = 0
        while node_leaf[node] < 0:
            node = (node_left[node] if X[pos, node_feature[node]] <= node_threshold[node]
                    else node_right[node])
        slot = node_leaf[node]
        leaf_class[slot, yi] += kw
        xv = X[pos, subspace]
        st = leaf_stats[slot, :, yi]
        st[:, 0] += kw
        st[:, 1] += kw * xv
        st[:, 2] += kw * xv * xv
        np.minimum(leaf_min[slot], xv, out=leaf_min[slot])
        np.maximum(leaf_max[slot], xv, out=leaf_max[slot])
        leaf_nonbinary[slot] |= ((xv != 0.0) & (xv != 1.0)).astype(np.uint8)
        leaf_seen[slot] += kw
        pos += 1
        if leaf_seen[slot] < grace:
            continue
        leaf_seen[slot] = 0.0
        cn, cp = float(leaf_class[slot, 0]), float(leaf_class[slot, 1])
        if cp <= 0.0 or cn <= 0.0:
            continue
        n = cp + cn
        gp = _gini_scalar(cp, cn)
        gbest = gsecond = 0.0
        best_j, best_thr, bl_p, bl_n = -1, 0.0, 0.0, 0.0
        lo_all, hi_all = leaf_min[slot], leaf_max[slot]
        stats = leaf_stats[slot]
        for j in np.flatnonzero(hi_all > lo_all):
            fb, ft, fl, fn = _feature_gain(stats[j].tolist(), float(lo_all[j]), float(hi_all[j]),
                                           bool(leaf_nonbinary[slot, j]), cp, cn, n, gp)
            if fb > gbest:
                gsecond = gbest
                gbest, best_j, best_thr, bl_p, bl_n = fb, int(j), ft, fl, fn
            elif fb > gsecond:
                gsecond = fb
        if best_j < 0:
            continue
        eps = math.sqrt(math.log(1.0 / delta) / (2.0 * n))
        if not (gbest - gsecond > eps or eps < tau):
            continue
        node_feature[node] = subspace[best_j]
        node_threshold[node] = best_thr
        node_left[node] = n_nodes
        node_right[node] = n_nodes + 1
        node_leaf[node] = -1
        for nid, s in ((n_nodes, slot), (n_nodes + 1, n_leaves)):
            node_feature[nid] = node_left[nid] = node_right[nid] = -1
            node_leaf[nid] = s
            leaf_node[s] = nid
            leaf_stats[s] = 0.0
            leaf_min[s] = np.inf
            leaf_max[s] = -np.inf
            leaf_nonbinary[s] = 0
            leaf_seen[s] = 0.0
        leaf_class[slot, 0], leaf_class[slot, 1] = bl_n, bl_p
        leaf_class[n_leaves, 0], leaf_class[n_leaves, 1] = cn - bl_n, cp - bl_p
        n_nodes += 2
        n_leaves += 1
    meta[0], meta[1], meta[2] = n_nodes, n_leaves, counter
    return pos

