"""Seeded stand-in graphs shaped like the public benchmark datasets.

``fb_like`` mimics a hierarchical encyclopedic KG (a few abstract hubs, a
middle tier and many leaf entities, typed relations with reverses).
``planetoid_like`` mimics a citation graph with class-homophilous edges and
sparse bag-of-words features.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .kg import KnowledgeGraph


def fb_like(n_entities=2000, seed=0, *, n_top=40, n_mid=340, extra_rate=0.4,
            top_links=3, top_cap=3.0, mid_cap=14.0, n_domains=20, locality=0.95):
    """Three-tier hierarchical knowledge graph with heavy-tailed degrees.

    Entities belong to topical domains. Every leaf hangs off one mid-tier
    entity and every mid-tier entity off one top-tier hub, preferring its own
    domain with probability ``locality``; parents are drawn with clipped
    Pareto weights so child counts are heavy tailed. Each link is stored with
    a typed forward relation and its reverse. Links into a hub use that hub's
    own relation type. Leaves also get a few attribute links straight to
    hubs, and hubs link to each other.

    Returns:
        KnowledgeGraph whose ``labels`` hold the domain of each entity.
    """
    rng = np.random.default_rng(seed)
    n_low = n_entities - n_top - n_mid
    if n_low <= 0:
        raise ValueError("n_entities too small for the requested tiers")
    top = np.arange(n_top)
    mid = np.arange(n_top, n_top + n_mid)
    low = np.arange(n_top + n_mid, n_entities)
    domain = np.concatenate([np.arange(n_top) % n_domains,
                             rng.integers(n_domains, size=n_mid + n_low)])

    # relation ids come in (forward, reverse) pairs
    n_lm, n_tt = 4, 2
    base_lm = 0
    base_hub = base_lm + 2 * n_lm
    base_tt = base_hub + 2 * n_top
    n_rel = base_tt + 2 * n_tt

    triples = []

    def link(h, t, r_fwd):
        triples.append((h, r_fwd, t))
        triples.append((t, r_fwd + 1, h))

    # clipped Pareto weights: heavy tail without a few runaway hubs
    w_top = np.minimum(rng.pareto(1.0, n_top) + 1.0, top_cap)
    w_mid = np.minimum(rng.pareto(0.9, n_mid) + 1.0, mid_cap)
    cat_mid = rng.integers(n_lm, size=n_mid)

    def pick(pool, weights, dom):
        local = pool[domain[pool] == dom]
        if len(local) and rng.random() < locality:
            pool = local
        w = weights[_rank(pool)]
        return pool, w

    def _rank(pool):
        return pool - (top[0] if pool[0] < n_top else mid[0])

    def draw(pool, weights, dom, size=1):
        pl, w = pick(pool, weights, dom)
        return rng.choice(pl, size=min(size, len(pl)), replace=False, p=w / w.sum())

    for m in mid:
        t = int(draw(top, w_top, domain[m])[0])
        link(m, t, base_hub + 2 * t)
    for e in low:
        m = int(draw(mid, w_mid, domain[e])[0])
        link(e, m, base_lm + 2 * cat_mid[m - mid[0]])

    # attribute links: leaf -> hub, many-to-one
    n_extra = rng.poisson(extra_rate, size=n_low)
    for e, k in zip(low, n_extra):
        if k:
            for h in draw(top, w_top, domain[e], size=k):
                link(e, int(h), base_hub + 2 * int(h))

    # hubs are densely tied to each other
    for t in top:
        others = rng.choice(np.delete(top, t), size=top_links, replace=False)
        for o in others:
            link(t, o, base_tt + 2 * ((t + o) % n_tt))

    return KnowledgeGraph.from_triples(
        n_entities, n_rel, triples, labels=domain.astype(np.int64),
        label_names=tuple(f"domain_{i}" for i in range(n_domains)))


CORA_SHAPE = dict(n_nodes=2708, n_edges=5429, n_features=1433,
                  class_sizes=(818, 426, 418, 351, 298, 217, 180),
                  words_per_node=18, homophily=0.81)
CITESEER_SHAPE = dict(n_nodes=3327, n_edges=4732, n_features=3707,
                      class_sizes=(701, 668, 596, 590, 508, 264),
                      words_per_node=32, homophily=0.74)


def planetoid_like(shape="cora", seed=0, *, topic_weight=0.35, **overrides):
    """Citation-style graph: homophilous stochastic block model plus BoW features.

    Args:
        shape: ``"cora"``, ``"citeseer"`` or a dict with the keys of
            ``CORA_SHAPE``.
        topic_weight: fraction of each node's words drawn from its class
            topic; the rest come from a shared background vocabulary.
    """
    if isinstance(shape, str):
        shape = {"cora": CORA_SHAPE, "citeseer": CITESEER_SHAPE}[shape.lower()]
    cfg = {**shape, **overrides}
    rng = np.random.default_rng(seed)
    sizes = np.asarray(cfg["class_sizes"])
    n = int(cfg["n_nodes"])
    # rescale class sizes if n was overridden
    sizes = np.maximum(1, np.round(sizes * n / sizes.sum()).astype(int))
    sizes[0] += n - sizes.sum()
    labels = rng.permutation(np.repeat(np.arange(len(sizes)), sizes))
    members = [np.flatnonzero(labels == c) for c in range(len(sizes))]

    # edges: endpoint "citing" uniform, "cited" same class with prob homophily;
    # within a class, cited papers are drawn with heavy-tailed popularity
    pop = rng.pareto(1.5, n) + 1.0
    seen = set()
    triples = []
    while len(triples) < cfg["n_edges"]:
        u = int(rng.integers(n))
        if rng.random() < cfg["homophily"]:
            pool = members[labels[u]]
        else:
            pool = np.arange(n)
        w = pop[pool]
        v = int(pool[rng.choice(len(pool), p=w / w.sum())]) if len(pool) < 64 \
            else int(pool[np.searchsorted(np.cumsum(w), rng.random() * w.sum())])
        v = min(v, n - 1)
        if u == v or (u, v) in seen or (v, u) in seen:
            continue
        seen.add((u, v))
        triples.append((u, 0, v))

    # features: each class owns a topic block of the vocabulary
    n_feat = int(cfg["n_features"])
    n_cls = len(sizes)
    vocab = rng.permutation(n_feat)
    topic_size = n_feat // (2 * n_cls)
    topics = [vocab[c * topic_size:(c + 1) * topic_size] for c in range(n_cls)]
    background = vocab[n_cls * topic_size:]
    rows, cols = [], []
    for i in range(n):
        k = max(1, rng.poisson(cfg["words_per_node"]))
        n_topic = rng.binomial(k, topic_weight)
        words = np.concatenate([
            rng.choice(topics[labels[i]], size=n_topic),
            rng.choice(background, size=k - n_topic),
        ])
        words = np.unique(words)
        rows.extend([i] * len(words))
        cols.extend(words.tolist())
    feats = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n_feat))
    feats.data[:] = 1.0
    return KnowledgeGraph.from_triples(
        n, 1, triples, relation_names=["cites"], labels=labels,
        label_names=tuple(f"class_{c}" for c in range(n_cls)), features=feats)


def chain_kg(n_entities=5, relations=None):
    """Directed chain ``0 -> 1 -> ... -> n-1``; edge ``i`` uses ``relations[i]`` (default 0)."""
    rel = [0] * (n_entities - 1) if relations is None else list(relations)
    triples = [(i, r, i + 1) for i, r in enumerate(rel)]
    return KnowledgeGraph.from_triples(n_entities, max(rel) + 1, triples)


def cube_kg(counts=(3, 3, 3, 3, 2, 2, 2, 2)):
    """Small KG a translation embedding can fit exactly.

    Entities sit on the corners of a 3-cube, ``counts[x]`` of them on corner
    ``x`` (slots ``0..counts[x]-1``). Relation ``k`` links ``(x, s)`` to
    ``(x | 2**k, s)`` when bit ``k`` of ``x`` is clear, so every relation is a
    bijection between disjoint head and tail sets. The default has 20
    entities and 28 triples.
    """
    ids = {}
    for x, c in enumerate(counts):
        for s in range(c):
            ids[(x, s)] = len(ids)
    triples = []
    for (x, s), i in ids.items():
        for k in range(3):
            tail = (x | (1 << k), s)
            if not (x >> k) & 1 and tail in ids:
                triples.append((i, k, ids[tail]))
    return KnowledgeGraph.from_triples(len(ids), 3, triples)
