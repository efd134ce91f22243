"""Pure-Python/numpy versions of the hot kernels.

These define the reference semantics; the compiled module in ``_ckernels.pyx``
must agree with them (bit-for-bit for the search/argmin kernels, to rounding
for the gradient accumulation).
"""
import numpy as np


def bidirectional_bfs(out_indptr, out_nbr, out_rel, in_indptr, in_nbr, in_rel,
                      src, dst, max_len):
    """Shortest directed path from ``src`` to ``dst`` of at most ``max_len`` hops.

    The forward and backward searches alternate, always growing the smaller
    frontier (forward on a tie). Among all shortest paths the one taking the
    smallest next entity id at every step is returned, then the smallest
    relation id between the same pair of entities.

    Returns:
        ``(entities, relations)`` as int64 arrays, or ``None`` if no path of
        length ``1..max_len`` exists.
    """
    src = int(src)
    dst = int(dst)
    if src == dst or max_len < 1:
        return None
    df = {src: 0}
    db = {dst: 0}
    ff = [src]
    fb = [dst]
    kf = kb = 0
    found = False
    while kf + kb < max_len and ff and fb:
        if len(ff) <= len(fb):
            new = []
            for x in ff:
                for j in range(out_indptr[x], out_indptr[x + 1]):
                    y = int(out_nbr[j])
                    if y not in df:
                        df[y] = kf + 1
                        new.append(y)
                        if y in db:
                            found = True
            ff = new
            kf += 1
        else:
            new = []
            for x in fb:
                for j in range(in_indptr[x], in_indptr[x + 1]):
                    y = int(in_nbr[j])
                    if y not in db:
                        db[y] = kb + 1
                        new.append(y)
                        if y in df:
                            found = True
            fb = new
            kb += 1
        if found:
            break
    if not found:
        return None
    d = kf + kb
    # complete backward distances up to depth d - 1 for the greedy walk
    while kb < d - 1 and fb:
        new = []
        for x in fb:
            for j in range(in_indptr[x], in_indptr[x + 1]):
                y = int(in_nbr[j])
                if y not in db:
                    db[y] = kb + 1
                    new.append(y)
        fb = new
        kb += 1
    ents = [src]
    rels = []
    cur = src
    for i in range(d):
        want = d - i - 1
        for j in range(out_indptr[cur], out_indptr[cur + 1]):
            y = int(out_nbr[j])
            if db.get(y, -1) == want:
                ents.append(y)
                rels.append(int(out_rel[j]))
                cur = y
                break
    return np.asarray(ents, dtype=np.int64), np.asarray(rels, dtype=np.int64)


def sq_distances(y, codebook):
    """Squared Euclidean distance from ``y`` to every row of ``codebook``."""
    diff = codebook - y
    return (diff * diff).sum(axis=1)


def nearest_codewords(points, codebook, candidates=None):
    """Index of the nearest codeword for each row of ``points``.

    Ties go to the lowest index. With ``candidates`` (ascending ids) the
    search is restricted to those rows.
    """
    points = np.asarray(points, dtype=np.float64)
    codebook = np.asarray(codebook, dtype=np.float64)
    if candidates is not None:
        candidates = np.asarray(candidates, dtype=np.int64)
        sub = codebook[candidates]
    else:
        sub = codebook
    n = points.shape[0]
    ids = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=np.float64)
    for i in range(n):
        dist = sq_distances(points[i], sub)
        k = int(np.argmin(dist))
        ids[i] = candidates[k] if candidates is not None else k
        dists[i] = dist[k]
    return ids, dists


def margin_grad_accumulate(ent, rel, pos, neg, margin, g_ent, g_rel):
    """Hinge loss over paired triples; adds its gradient into ``g_ent``/``g_rel``.

    Returns the summed loss.
    """
    a = ent[pos[:, 0]] + rel[pos[:, 1]] - ent[pos[:, 2]]
    b = ent[neg[:, 0]] + rel[neg[:, 1]] - ent[neg[:, 2]]
    s = margin + (a * a).sum(axis=1) - (b * b).sum(axis=1)
    act = s > 0
    if not act.any():
        return 0.0
    a2 = 2.0 * a[act]
    b2 = 2.0 * b[act]
    p = pos[act]
    q = neg[act]
    np.add.at(g_ent, p[:, 0], a2)
    np.add.at(g_rel, p[:, 1], a2)
    np.add.at(g_ent, p[:, 2], -a2)
    np.add.at(g_ent, q[:, 0], -b2)
    np.add.at(g_rel, q[:, 1], -b2)
    np.add.at(g_ent, q[:, 2], b2)
    return float(s[act].sum())
