# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: CART tree growth, tree routing, Hoeffding-tree stream learning.

Each function mirrors one in ``_fallback.py`` operation for operation so the
two backends build identical models.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, exp, INFINITY
from libc.stdlib cimport malloc, free, qsort
from libc.stdint cimport uint64_t, int64_t, int32_t, uint8_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t FEATURE_SALT = 0xD1B54A32D192ED03ULL
cdef double GAIN_EPS = 1e-12


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t stream(uint64_t key, uint64_t counter) noexcept nogil:
    return mix64(key + (counter + 1) * GOLDEN)


cdef inline double unit(uint64_t u) noexcept nogil:
    return <double>(u >> 11) * (1.0 / 9007199254740992.0)


cdef inline double gini2(double p, double n) noexcept nogil:
    cdef double w = p + n
    cdef double a, b
    if w <= 0.0:
        return 0.0
    a = p / w
    b = n / w
    return 1.0 - (a * a + b * b)


# ---------------------------------------------------------------- batch CART

cdef struct KeyIdx:
    uint64_t key
    int32_t idx

cdef struct ValW:
    double v
    double pw
    double nw


cdef int cmp_keyidx(const void* a, const void* b) noexcept nogil:
    cdef KeyIdx* x = <KeyIdx*>a
    cdef KeyIdx* y = <KeyIdx*>b
    if x.key < y.key:
        return -1
    if x.key > y.key:
        return 1
    return (x.idx > y.idx) - (x.idx < y.idx)


cdef int cmp_valw(const void* a, const void* b) noexcept nogil:
    cdef double x = (<ValW*>a).v
    cdef double y = (<ValW*>b).v
    return (x > y) - (x < y)


def build_tree(const double[:, ::1] XT, const double[::1] pos_w, const double[::1] neg_w,
               int32_t[::1] rows, int max_depth, double min_leaf, int mtry,
               uint64_t tkey):
    """Grow one CART tree on weighted unique rows.

    ``XT`` is feature-major (W x U). ``rows`` lists the rows with non-zero
    weight and is reordered in place. Returns node arrays trimmed to size.
    """
    cdef Py_ssize_t W = XT.shape[0]
    cdef Py_ssize_t n_rows = rows.shape[0]
    cdef Py_ssize_t cap = 2 * n_rows + 1
    feature_a = np.full(cap, -1, dtype=np.int32)
    threshold_a = np.zeros(cap, dtype=np.float64)
    left_a = np.full(cap, -1, dtype=np.int32)
    right_a = np.full(cap, -1, dtype=np.int32)
    pos_a = np.zeros(cap, dtype=np.float64)
    neg_a = np.zeros(cap, dtype=np.float64)
    cdef int32_t[::1] feature = feature_a
    cdef double[::1] threshold = threshold_a
    cdef int32_t[::1] left = left_a
    cdef int32_t[::1] right = right_a
    cdef double[::1] pos = pos_a
    cdef double[::1] neg = neg_a

    cdef int64_t* st_node = <int64_t*>malloc(cap * sizeof(int64_t))
    cdef int64_t* st_start = <int64_t*>malloc(cap * sizeof(int64_t))
    cdef int64_t* st_end = <int64_t*>malloc(cap * sizeof(int64_t))
    cdef int64_t* st_depth = <int64_t*>malloc(cap * sizeof(int64_t))
    cdef KeyIdx* keys = <KeyIdx*>malloc(W * sizeof(KeyIdx))
    cdef ValW* buf = <ValW*>malloc((n_rows + 1) * sizeof(ValW))
    if not (st_node and st_start and st_end and st_depth and keys and buf):
        free(st_node); free(st_start); free(st_end); free(st_depth); free(keys); free(buf)
        raise MemoryError()

    cdef Py_ssize_t sp = 0, n_nodes = 1, i, k, j, lo, hi, m
    cdef int64_t node, start, end, depth
    cdef int32_t f, best_f, r, tmp
    cdef double p, q, w, gp, cpl, cnl, wl, wr, gain, best_gain, best_thr, thr, vmin, vmax
    cdef double lp, ln
    cdef uint64_t nkey
    if mtry > W:
        mtry = <int>W
    if mtry < 1:
        mtry = 1

    with nogil:
        p = 0.0
        q = 0.0
        for i in range(n_rows):
            p = p + pos_w[rows[i]]
            q = q + neg_w[rows[i]]
        pos[0] = p
        neg[0] = q
        st_node[0] = 0
        st_start[0] = 0
        st_end[0] = n_rows
        st_depth[0] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            node = st_node[sp]
            start = st_start[sp]
            end = st_end[sp]
            depth = st_depth[sp]
            p = pos[node]
            q = neg[node]
            w = p + q
            if depth >= max_depth or p == 0.0 or q == 0.0 or w < 2.0 * min_leaf:
                continue
            gp = gini2(p, q)
            nkey = stream(tkey ^ FEATURE_SALT, <uint64_t>node)
            for j in range(W):
                keys[j].key = stream(nkey, <uint64_t>j)
                keys[j].idx = <int32_t>j
            qsort(keys, W, sizeof(KeyIdx), cmp_keyidx)
            best_gain = GAIN_EPS
            best_f = -1
            best_thr = 0.0
            for k in range(mtry):
                f = keys[k].idx
                vmin = INFINITY
                vmax = -INFINITY
                m = 0
                for i in range(start, end):
                    r = rows[i]
                    buf[m].v = XT[f, r]
                    buf[m].pw = pos_w[r]
                    buf[m].nw = neg_w[r]
                    if buf[m].v < vmin:
                        vmin = buf[m].v
                    if buf[m].v > vmax:
                        vmax = buf[m].v
                    m += 1
                if not (vmax > vmin):
                    continue
                # two-valued feature (the one-hot case): one candidate boundary
                cpl = 0.0
                cnl = 0.0
                for i in range(m):
                    if buf[i].v == vmin:
                        cpl = cpl + buf[i].pw
                        cnl = cnl + buf[i].nw
                    elif buf[i].v != vmax:
                        break
                else:
                    wl = cpl + cnl
                    wr = w - wl
                    if wl < min_leaf or wr < min_leaf:
                        continue
                    gain = gp - (wl / w) * gini2(cpl, cnl) - (wr / w) * gini2(p - cpl, q - cnl)
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        thr = 0.5 * (vmin + vmax)
                        if thr >= vmax:
                            thr = vmin
                        best_thr = thr
                    continue
                qsort(buf, m, sizeof(ValW), cmp_valw)
                cpl = 0.0
                cnl = 0.0
                for i in range(m - 1):
                    cpl = cpl + buf[i].pw
                    cnl = cnl + buf[i].nw
                    if not (buf[i].v < buf[i + 1].v):
                        continue
                    wl = cpl + cnl
                    wr = w - wl
                    if wl < min_leaf or wr < min_leaf:
                        continue
                    gain = gp - (wl / w) * gini2(cpl, cnl) - (wr / w) * gini2(p - cpl, q - cnl)
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        thr = 0.5 * (buf[i].v + buf[i + 1].v)
                        if thr >= buf[i + 1].v:
                            thr = buf[i].v
                        best_thr = thr
            if best_f < 0:
                continue
            # partition rows[start:end] into <= thr | > thr
            lo = start
            hi = end - 1
            while lo <= hi:
                if XT[best_f, rows[lo]] <= best_thr:
                    lo += 1
                else:
                    tmp = rows[lo]
                    rows[lo] = rows[hi]
                    rows[hi] = tmp
                    hi -= 1
            lp = 0.0
            ln = 0.0
            for i in range(start, lo):
                lp = lp + pos_w[rows[i]]
                ln = ln + neg_w[rows[i]]
            feature[node] = best_f
            threshold[node] = best_thr
            left[node] = <int32_t>n_nodes
            right[node] = <int32_t>(n_nodes + 1)
            pos[n_nodes] = lp
            neg[n_nodes] = ln
            pos[n_nodes + 1] = p - lp
            neg[n_nodes + 1] = q - ln
            # right pushed first so the left subtree is grown first
            st_node[sp] = n_nodes + 1
            st_start[sp] = lo
            st_end[sp] = end
            st_depth[sp] = depth + 1
            sp += 1
            st_node[sp] = n_nodes
            st_start[sp] = start
            st_end[sp] = lo
            st_depth[sp] = depth + 1
            sp += 1
            n_nodes += 2

    free(st_node); free(st_start); free(st_end); free(st_depth); free(keys); free(buf)
    return (feature_a[:n_nodes].copy(), threshold_a[:n_nodes].copy(),
            left_a[:n_nodes].copy(), right_a[:n_nodes].copy(),
            pos_a[:n_nodes].copy(), neg_a[:n_nodes].copy())


def predict_tree_add(const double[:, ::1] X, const int32_t[::1] feature,
                     const double[::1] threshold, const int32_t[::1] left,
                     const int32_t[::1] right, const double[::1] value,
                     double[::1] out):
    """out[i] += value of the leaf reached by row i."""
    cdef Py_ssize_t n = X.shape[0], i
    cdef int32_t node
    with nogil:
        for i in range(n):
            node = 0
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i] = out[i] + value[node]


# ---------------------------------------------------------- Hoeffding trees

cdef inline int poisson1(double u) noexcept nogil:
    cdef int k = 0
    cdef double p = 0.36787944117144233
    cdef double c = p
    while u > c and k < 32:
        k += 1
        p = p / k
        c = c + p
    return k


cdef inline double norm_cdf(double z) noexcept nogil:
    # Abramowitz-Stegun 26.2.17, |error| < 7.5e-8
    cdef double az = -z if z < 0.0 else z
    cdef double t = 1.0 / (1.0 + 0.2316419 * az)
    cdef double poly = t * (0.319381530 + t * (-0.356563782 + t * (1.781477937
                       + t * (-1.821255978 + t * 1.330274429))))
    cdef double upper = 0.3989422804014327 * exp(-0.5 * az * az) * poly
    if z < 0.0:
        return upper
    return 1.0 - upper


def hoeffding_learn(const double[:, ::1] X, const uint8_t[::1] y,
                    Py_ssize_t pos, Py_ssize_t end,
                    int32_t[::1] node_feature, double[::1] node_threshold,
                    int32_t[::1] node_left, int32_t[::1] node_right,
                    int32_t[::1] node_leaf, int32_t[::1] leaf_node,
                    double[:, ::1] leaf_class, double[::1] leaf_seen,
                    double[:, :, :, ::1] leaf_stats, double[:, ::1] leaf_min,
                    double[:, ::1] leaf_max, uint8_t[:, ::1] leaf_nonbinary,
                    const int32_t[::1] subspace, int64_t[::1] meta,
                    uint64_t key, double grace, double delta, double tau):
    """Feed rows pos..end-1 through one Hoeffding tree with Poisson(1) weights.

    ``meta`` = [n_nodes, n_leaves, counter]. Returns the index of the first
    unprocessed row: ``end`` when done, or earlier when node/leaf capacity
    must grow before the next row can be processed safely.
    """
    cdef Py_ssize_t cap_nodes = node_feature.shape[0]
    cdef Py_ssize_t cap_leaves = leaf_class.shape[0]
    cdef Py_ssize_t m = subspace.shape[0]
    cdef Py_ssize_t i, j, c, t
    cdef int64_t n_nodes = meta[0], n_leaves = meta[1]
    cdef uint64_t counter = <uint64_t>meta[2]
    cdef int k, yi, node, slot, best_j
    cdef double kw, v, cp, cn, n, gp, g, gbest, gsecond, eps, best_thr, thr
    cdef double lp, ln, rp, rn, wl, bl_p, bl_n, fbest, fthr, flp, fln
    cdef double w0, w1, mu0, mu1, sd0, sd1, var, lo_v, hi_v, l0, l1
    with nogil:
        while pos < end:
            if n_nodes + 2 > cap_nodes or n_leaves + 1 > cap_leaves:
                break
            k = poisson1(unit(stream(key, counter)))
            counter += 1
            if k == 0:
                pos += 1
                continue
            kw = <double>k
            yi = 1 if y[pos] else 0
            node = 0
            while node_leaf[node] < 0:
                if X[pos, node_feature[node]] <= node_threshold[node]:
                    node = node_left[node]
                else:
                    node = node_right[node]
            slot = node_leaf[node]
            leaf_class[slot, yi] += kw
            for j in range(m):
                v = X[pos, subspace[j]]
                leaf_stats[slot, j, yi, 0] += kw
                leaf_stats[slot, j, yi, 1] += kw * v
                leaf_stats[slot, j, yi, 2] += kw * v * v
                if v < leaf_min[slot, j]:
                    leaf_min[slot, j] = v
                if v > leaf_max[slot, j]:
                    leaf_max[slot, j] = v
                if v != 0.0 and v != 1.0:
                    leaf_nonbinary[slot, j] = 1
            leaf_seen[slot] += kw
            pos += 1
            if leaf_seen[slot] < grace:
                continue
            leaf_seen[slot] = 0.0
            cn = leaf_class[slot, 0]
            cp = leaf_class[slot, 1]
            if cp <= 0.0 or cn <= 0.0:
                continue
            n = cp + cn
            gp = gini2(cp, cn)
            gbest = 0.0
            gsecond = 0.0
            best_j = -1
            best_thr = 0.0
            bl_p = 0.0
            bl_n = 0.0
            for j in range(m):
                lo_v = leaf_min[slot, j]
                hi_v = leaf_max[slot, j]
                if not (hi_v > lo_v):
                    continue
                w0 = leaf_stats[slot, j, 0, 0]
                w1 = leaf_stats[slot, j, 1, 0]
                fbest = -1.0
                fthr = 0.0
                flp = 0.0
                fln = 0.0
                if leaf_nonbinary[slot, j] == 0:
                    # values in {0, 1}: left (x <= 0.5) holds the zeros exactly
                    lp = w1 - leaf_stats[slot, j, 1, 1]
                    ln = w0 - leaf_stats[slot, j, 0, 1]
                    wl = lp + ln
                    if wl > 0.0 and n - wl > 0.0:
                        fbest = gp - (wl / n) * gini2(lp, ln) - ((n - wl) / n) * gini2(cp - lp, cn - ln)
                        fthr = 0.5
                        flp = lp
                        fln = ln
                else:
                    mu0 = 0.0
                    mu1 = 0.0
                    sd0 = 0.0
                    sd1 = 0.0
                    if w0 > 0.0:
                        mu0 = leaf_stats[slot, j, 0, 1] / w0
                        var = leaf_stats[slot, j, 0, 2] / w0 - mu0 * mu0
                        sd0 = sqrt(var) if var > 0.0 else 0.0
                    if w1 > 0.0:
                        mu1 = leaf_stats[slot, j, 1, 1] / w1
                        var = leaf_stats[slot, j, 1, 2] / w1 - mu1 * mu1
                        sd1 = sqrt(var) if var > 0.0 else 0.0
                    for t in range(10):
                        thr = lo_v + (hi_v - lo_v) * (t + 1) / 11.0
                        if w0 <= 0.0:
                            l0 = 0.0
                        elif sd0 > 0.0:
                            l0 = w0 * norm_cdf((thr - mu0) / sd0)
                        else:
                            l0 = w0 if thr >= mu0 else 0.0
                        if w1 <= 0.0:
                            l1 = 0.0
                        elif sd1 > 0.0:
                            l1 = w1 * norm_cdf((thr - mu1) / sd1)
                        else:
                            l1 = w1 if thr >= mu1 else 0.0
                        wl = l1 + l0
                        if not (wl > 0.0 and n - wl > 0.0):
                            continue
                        g = gp - (wl / n) * gini2(l1, l0) - ((n - wl) / n) * gini2(cp - l1, cn - l0)
                        if g > fbest:
                            fbest = g
                            fthr = thr
                            flp = l1
                            fln = l0
                if fbest > gbest:
                    gsecond = gbest
                    gbest = fbest
                    best_j = <int>j
                    best_thr = fthr
                    bl_p = flp
                    bl_n = fln
                elif fbest > gsecond:
                    gsecond = fbest
            if best_j < 0:
                continue
            eps = sqrt(log(1.0 / delta) / (2.0 * n))
            if not (gbest - gsecond > eps or eps < tau):
                continue
            # leaf -> internal node; children reuse this slot and a fresh one
            node_feature[node] = subspace[best_j]
            node_threshold[node] = best_thr
            node_left[node] = <int32_t>n_nodes
            node_right[node] = <int32_t>(n_nodes + 1)
            node_leaf[node] = -1
            node_feature[n_nodes] = -1
            node_feature[n_nodes + 1] = -1
            node_left[n_nodes] = -1
            node_left[n_nodes + 1] = -1
            node_right[n_nodes] = -1
            node_right[n_nodes + 1] = -1
            node_leaf[n_nodes] = slot
            node_leaf[n_nodes + 1] = <int32_t>n_leaves
            leaf_node[slot] = <int32_t>n_nodes
            leaf_node[n_leaves] = <int32_t>(n_nodes + 1)
            for c in range(2):
                for j in range(m):
                    leaf_stats[slot, j, c, 0] = 0.0
                    leaf_stats[slot, j, c, 1] = 0.0
                    leaf_stats[slot, j, c, 2] = 0.0
                    leaf_stats[n_leaves, j, c, 0] = 0.0
                    leaf_stats[n_leaves, j, c, 1] = 0.0
                    leaf_stats[n_leaves, j, c, 2] = 0.0
            for j in range(m):
                leaf_min[slot, j] = INFINITY
                leaf_max[slot, j] = -INFINITY
                leaf_nonbinary[slot, j] = 0
                leaf_min[n_leaves, j] = INFINITY
                leaf_max[n_leaves, j] = -INFINITY
                leaf_nonbinary[n_leaves, j] = 0
            leaf_class[slot, 0] = bl_n
            leaf_class[slot, 1] = bl_p
            leaf_class[n_leaves, 0] = cn - bl_n
            leaf_class[n_leaves, 1] = cp - bl_p
            leaf_seen[slot] = 0.0
            leaf_seen[n_leaves] = 0.0
            n_nodes += 2
            n_leaves += 1
    meta[0] = n_nodes
    meta[1] = n_leaves
    meta[2] = <int64_t>counter
    return pos
