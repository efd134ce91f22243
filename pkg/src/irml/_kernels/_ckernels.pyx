# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``; same signatures."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def bidirectional_bfs(const long long[::1] out_indptr, const long long[::1] out_nbr,
                      const long long[::1] out_rel, const long long[::1] in_indptr,
                      const long long[::1] in_nbr, const long long[::1] in_rel,
                      long long src, long long dst, int max_len):
    cdef Py_ssize_t n = out_indptr.shape[0] - 1
    if src == dst or max_len < 1:
        return None
    cdef cnp.ndarray[cnp.int32_t, ndim=1] df_a = np.full(n, -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] db_a = np.full(n, -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] qf_a = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] qb_a = np.empty(n, dtype=np.int64)
    cdef int[::1] df = df_a
    cdef int[::1] db = db_a
    cdef long long[::1] qf = qf_a
    cdef long long[::1] qb = qb_a
    # frontiers are contiguous slices [f0, f1) of the level-ordered queues
    cdef Py_ssize_t f0 = 0, f1 = 1, b0 = 0, b1 = 1, tail, i, j
    cdef int kf = 0, kb = 0, d, want
    cdef long long x, y, cur
    cdef bint found = False
    df[src] = 0
    db[dst] = 0
    qf[0] = src
    qb[0] = dst
    while kf + kb < max_len and f1 > f0 and b1 > b0:
        if f1 - f0 <= b1 - b0:
            tail = f1
            for i in range(f0, f1):
                x = qf[i]
                for j in range(out_indptr[x], out_indptr[x + 1]):
                    y = out_nbr[j]
                    if df[y] == -1:
                        df[y] = kf + 1
                        qf[tail] = y
                        tail += 1
                        if db[y] != -1:
                            found = True
            f0 = f1
            f1 = tail
            kf += 1
        else:
            tail = b1
            for i in range(b0, b1):
                x = qb[i]
                for j in range(in_indptr[x], in_indptr[x + 1]):
                    y = in_nbr[j]
                    if db[y] == -1:
                        db[y] = kb + 1
                        qb[tail] = y
                        tail += 1
                        if df[y] != -1:
                            found = True
            b0 = b1
            b1 = tail
            kb += 1
        if found:
            break
    if not found:
        return None
    d = kf + kb
    while kb < d - 1 and b1 > b0:
        tail = b1
        for i in range(b0, b1):
            x = qb[i]
            for j in range(in_indptr[x], in_indptr[x + 1]):
                y = in_nbr[j]
                if db[y] == -1:
                    db[y] = kb + 1
                    qb[tail] = y
                    tail += 1
        b0 = b1
        b1 = tail
        kb += 1
    ents = np.empty(d + 1, dtype=np.int64)
    rels = np.empty(d, dtype=np.int64)
    cdef long long[::1] ev = ents
    cdef long long[::1] rv = rels
    ev[0] = src
    cur = src
    for i in range(d):
        want = d - <int>i - 1
        for j in range(out_indptr[cur], out_indptr[cur + 1]):
            y = out_nbr[j]
            if db[y] == want:
                ev[i + 1] = y
                rv[i] = out_rel[j]
                cur = y
                break
    return ents, rels


def sq_distances(const double[::1] y, const double[:, ::1] codebook):
    cdef Py_ssize_t m = codebook.shape[0], d = codebook.shape[1], i, k
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    cdef double acc, t
    for i in range(m):
        acc = 0.0
        for k in range(d):
            t = codebook[i, k] - y[k]
            acc = acc + t * t
        o[i] = acc
    return out


def nearest_codewords(points, codebook, candidates=None):
    cdef const double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:, ::1] cb = np.ascontiguousarray(codebook, dtype=np.float64)
    cdef const long long[::1] cand
    cdef Py_ssize_t n = pts.shape[0], d = pts.shape[1], i, c, k, row, m
    cdef bint use_cand = candidates is not None
    if use_cand:
        cand = np.ascontiguousarray(candidates, dtype=np.int64)
        m = cand.shape[0]
    else:
        m = cb.shape[0]
    ids = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=np.float64)
    cdef long long[::1] iv = ids
    cdef double[::1] dv = dists
    cdef double acc, t, best
    cdef long long best_id
    for i in range(n):
        best = np.inf
        best_id = -1
        for c in range(m):
            row = cand[c] if use_cand else c
            acc = 0.0
            for k in range(d):
                t = cb[row, k] - pts[i, k]
                acc = acc + t * t
            if acc < best or best_id == -1:
                best = acc
                best_id = row
        iv[i] = best_id
        dv[i] = best
    return ids, dists


def margin_grad_accumulate(const double[:, ::1] ent, const double[:, ::1] rel,
                           const long long[:, ::1] pos, const long long[:, ::1] neg,
                           double margin, double[:, ::1] g_ent, double[:, ::1] g_rel):
    cdef Py_ssize_t n = pos.shape[0], d = ent.shape[1], i, k
    cdef long long h, r, t, h2, r2, t2
    cdef double s, loss = 0.0, na, nb, a, b
    for i in range(n):
        h = pos[i, 0]; r = pos[i, 1]; t = pos[i, 2]
        h2 = neg[i, 0]; r2 = neg[i, 1]; t2 = neg[i, 2]
        na = 0.0
        nb = 0.0
        for k in range(d):
            a = ent[h, k] + rel[r, k] - ent[t, k]
            b = ent[h2, k] + rel[r2, k] - ent[t2, k]
            na += a * a
            nb += b * b
        s = margin + na - nb
        if s > 0:
            loss += s
            for k in range(d):
                a = 2.0 * (ent[h, k] + rel[r, k] - ent[t, k])
                b = 2.0 * (ent[h2, k] + rel[r2, k] - ent[t2, k])
                g_ent[h, k] += a
                g_rel[r, k] += a
                g_ent[t, k] -= a
                g_ent[h2, k] -= b
                g_rel[r2, k] -= b
                g_ent[t2, k] += b
    return loss
