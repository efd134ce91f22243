"""Knowledge graphs: loading, degree layering, expert-path sampling, partitioning."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import (
    ConfigError,
    DataError,
    EmptyGraphError,
    ParseError,
    SamplingExhaustedError,
)

log = logging.getLogger(__name__)


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def _csr(keys, sort_cols, n):
    """CSR index of rows grouped by ``keys`` and lexicographically sorted by ``sort_cols``."""
    order = np.lexsort(tuple(reversed([keys, *sort_cols])))
    counts = np.bincount(keys, minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, order


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    """Immutable multi-relational graph with dense entity and relation ids.

    ``triples`` is an ``(M, 3)`` int64 array of ``(head, relation, tail)``
    without duplicates. Labels and features are optional per-entity metadata.
    """

    n_entities: int
    n_relations: int
    triples: np.ndarray
    entity_names: tuple = ()
    relation_names: tuple = ()
    labels: np.ndarray | None = None
    label_names: tuple = ()
    features: sp.csr_matrix | None = None

    @classmethod
    def from_triples(cls, n_entities, n_relations, triples, *, entity_names=None,
                     relation_names=None, labels=None, label_names=(), features=None):
        """Validate, dedup (keeping first appearance order) and freeze."""
        t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        if t.size:
            if t.min() < 0 or t[:, [0, 2]].max() >= n_entities or t[:, 1].max() >= n_relations:
                raise DataError("triple references an out-of-range entity or relation id")
            keys = (t[:, 0] * n_relations + t[:, 1]) * n_entities + t[:, 2]
            _, first = np.unique(keys, return_index=True)
            t = t[np.sort(first)]
        if entity_names is None:
            entity_names = tuple(str(i) for i in range(n_entities))
        if relation_names is None:
            relation_names = tuple(str(i) for i in range(n_relations))
        if labels is not None:
            labels = _frozen(labels, np.int64)
            if labels.shape != (n_entities,):
                raise DataError("labels must have one entry per entity")
        if features is not None:
            features = sp.csr_matrix(features, dtype=np.float64)
            if features.shape[0] != n_entities:
                raise DataError("features must have one row per entity")
        return cls(int(n_entities), int(n_relations), _frozen(t, np.int64),
                   tuple(entity_names), tuple(relation_names), labels,
                   tuple(label_names), features)

    @property
    def n_triples(self):
        return int(self.triples.shape[0])

    @cached_property
    def _out(self):
        h, r, t = self.triples.T
        indptr, order = _csr(h, [t, r], self.n_entities)
        return _frozen(indptr), _frozen(t[order]), _frozen(r[order])

    @cached_property
    def _in(self):
        h, r, t = self.triples.T
        indptr, order = _csr(t, [h, r], self.n_entities)
        return _frozen(indptr), _frozen(h[order]), _frozen(r[order])

    @property
    def out_index(self):
        """``(indptr, tails, relations)``, each entity's edges sorted by (tail, relation)."""
        return self._out

    @property
    def in_index(self):
        """``(indptr, heads, relations)``, each entity's edges sorted by (head, relation)."""
        return self._in

    def out_edges(self, e):
        indptr, nbr, rel = self._out
        s = slice(indptr[e], indptr[e + 1])
        return rel[s], nbr[s]

    def in_edges(self, e):
        indptr, nbr, rel = self._in
        s = slice(indptr[e], indptr[e + 1])
        return rel[s], nbr[s]

    @cached_property
    def degree(self):
        """In-degree plus out-degree (self-loops count twice)."""
        d = np.bincount(self.triples[:, 0], minlength=self.n_entities)
        d = d + np.bincount(self.triples[:, 2], minlength=self.n_entities)
        return _frozen(d, np.int64)

    @cached_property
    def available_relations(self):
        """Per entity, the sorted distinct relation ids of outgoing edges."""
        out = []
        for e in range(self.n_entities):
            rel, _ = self.out_edges(e)
            out.append(_frozen(np.unique(rel)))
        return tuple(out)

    def tails(self, e, r):
        rel, nbr = self.out_edges(e)
        return nbr[rel == r]

    @cached_property
    def triple_keys(self):
        """Sorted int64 encoding of the triple set, for fast membership tests."""
        t = self.triples
        return _frozen(np.sort(self.encode_keys(t)))

    def encode_keys(self, t):
        t = np.asarray(t, dtype=np.int64).reshape(-1, 3)
        return (t[:, 0] * self.n_relations + t[:, 1]) * self.n_entities + t[:, 2]

    def contains(self, t):
        keys = self.encode_keys(t)
        idx = np.searchsorted(self.triple_keys, keys)
        idx = np.minimum(idx, max(len(self.triple_keys) - 1, 0))
        if not len(self.triple_keys):
            return np.zeros(len(keys), dtype=bool)
        return self.triple_keys[idx] == keys

    def adjacency(self, symmetric=True):
        """Sparse 0/1 entity adjacency (relation types collapsed)."""
        h, _, t = self.triples.T
        a = sp.coo_matrix((np.ones(len(h)), (h, t)), shape=(self.n_entities,) * 2).tocsr()
        if symmetric:
            a = a + a.T
        a.data[:] = 1.0
        return a

    def induced(self, entities):
        """Subgraph on ``entities`` with local ids in the given order.

        Returns ``(subgraph, local_to_global)``; relation ids are kept global.
        """
        ents = np.asarray(entities, dtype=np.int64)
        g2l = np.full(self.n_entities, -1, dtype=np.int64)
        g2l[ents] = np.arange(len(ents))
        h, r, t = self.triples.T
        keep = (g2l[h] >= 0) & (g2l[t] >= 0)
        local = np.stack([g2l[h[keep]], r[keep], g2l[t[keep]]], axis=1)
        sub = KnowledgeGraph.from_triples(
            len(ents), self.n_relations, local,
            entity_names=[self.entity_names[i] for i in ents],
            relation_names=self.relation_names,
            labels=None if self.labels is None else self.labels[ents],
            label_names=self.label_names,
            features=None if self.features is None else self.features[ents],
        )
        return sub, _frozen(ents)


@dataclass(frozen=True)
class LayerAssignment:
    thresholds: tuple
    layer_of: np.ndarray

    @property
    def n_layers(self):
        return len(self.thresholds) + 1

    def members(self, layer):
        return np.flatnonzero(self.layer_of == layer)


@dataclass(frozen=True)
class ReasoningPath:
    origin: int
    steps: tuple = ()

    @property
    def length(self):
        return len(self.steps)

    @property
    def entities(self):
        return (self.origin, *(e for _, e in self.steps))

    @property
    def relations(self):
        return tuple(r for r, _ in self.steps)

    @classmethod
    def from_arrays(cls, entities, relations):
        ents = [int(e) for e in entities]
        rels = [int(r) for r in relations]
        return cls(ents[0], tuple(zip(rels, ents[1:])))


@dataclass(frozen=True)
class ExplicitSemantics:
    entities: tuple
    relations: tuple = ()


@dataclass(frozen=True)
class PartitionSpec:
    K: int
    p: float = 0.0
    seed: int = 0
    subjects: tuple | None = None

    def __post_init__(self):
        if int(self.K) < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if not 0.0 <= float(self.p) <= 1.0:
            raise ConfigError(f"p must lie in [0, 1], got {self.p}")


@dataclass(frozen=True)
class Partition:
    """Assignment of entities to servers.

    ``server_of[e] == -1`` marks an entity hosted by no server; these stay
    with the coordinator (used as the held-out evaluation pool).
    """

    spec: PartitionSpec
    server_of: np.ndarray
    servers: tuple
    subgraphs: tuple
    anchors: tuple = field(default=())

    @property
    def K(self):
        return self.spec.K

    def index(self):
        """Global index list: entity id -> owning server (labels only)."""
        return {int(e): int(s) for e, s in enumerate(self.server_of) if s >= 0}

    @property
    def unhosted(self):
        return np.flatnonzero(self.server_of < 0)


# ---------------------------------------------------------------- loading

def load_triples(path):
    """Read a TAB-separated ``head relation tail`` file.

    Ids are dense and assigned in order of first appearance; duplicate lines
    are dropped.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"triple file not found: {path}")
    ent, rel = {}, {}
    rows = []
    with open(path, encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"expected 3 TAB-separated fields, got {len(parts)}",
                                 line=lineno, path=path)
            h, r, t = parts
            hi = ent.setdefault(h, len(ent))
            ri = rel.setdefault(r, len(rel))
            ti = ent.setdefault(t, len(ent))
            rows.append((hi, ri, ti))
    if not rows:
        raise EmptyGraphError(f"no triples in {path}")
    return KnowledgeGraph.from_triples(len(ent), len(rel), rows,
                                       entity_names=list(ent), relation_names=list(rel))


def load_planetoid(content_path, cites_path):
    """Read the raw Planetoid ``.content``/``.cites`` pair.

    Each citation row ``cited citing`` becomes the triple
    ``(citing, cites, cited)``. Rows naming unknown papers are skipped.

    Returns:
        ``(graph, skipped)`` where ``skipped`` counts dropped citation rows.
    """
    content_path, cites_path = Path(content_path), Path(cites_path)
    for p in (content_path, cites_path):
        if not p.exists():
            raise DataError(f"planetoid file not found: {p}")
    ids, label_ids, labels = {}, {}, []
    rows, cols = [], []
    width = None
    with open(content_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise ParseError("content row needs an id and a label", line=lineno,
                                 path=content_path)
            w = len(parts) - 2
            if width is None:
                width = w
            elif w != width:
                raise ParseError(f"feature width {w} differs from {width}", line=lineno,
                                 path=content_path)
            if parts[0] in ids:
                continue
            i = ids.setdefault(parts[0], len(ids))
            labels.append(label_ids.setdefault(parts[-1], len(label_ids)))
            vals = np.asarray(parts[1:-1], dtype=np.float64)
            nz = np.flatnonzero(vals)
            rows.extend([i] * len(nz))
            cols.extend(nz.tolist())
    if not ids:
        raise EmptyGraphError(f"no entities in {content_path}")
    feats = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(ids), width or 0))
    triples = []
    skipped = 0
    with open(cites_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ParseError("cites row needs two ids", line=lineno, path=cites_path)
            cited, citing = parts
            if cited not in ids or citing not in ids:
                skipped += 1
                continue
            triples.append((ids[citing], 0, ids[cited]))
    if skipped:
        log.warning("skipped %d citation rows naming unknown papers", skipped)
    kg = KnowledgeGraph.from_triples(
        len(ids), 1, triples, entity_names=list(ids), relation_names=["cites"],
        labels=labels, label_names=tuple(label_ids), features=feats)
    return kg, skipped


# ---------------------------------------------------------------- layering

def layer_by_degree(kg, thresholds):
    """Split entities into ``len(thresholds) + 1`` layers by degree.

    With thresholds ``t1 > t2 > ...``: layer 1 holds degree ``> t1``, layer
    ``i`` (``i >= 2``) holds the remaining entities with degree ``>= t_i`` and
    the last layer holds the rest. For ``[50, 6]`` that is ``>50``, ``6..50``
    and ``<6``.
    """
    th = tuple(int(t) for t in thresholds)
    if any(t <= 0 for t in th) or any(a <= b for a, b in zip(th, th[1:])):
        raise ConfigError(f"thresholds must be positive and strictly descending: {list(th)}")
    deg = kg.degree
    layer = np.full(kg.n_entities, len(th) + 1, dtype=np.int64)
    for i in range(len(th) - 1, -1, -1):
        hit = deg > th[i] if i == 0 else deg >= th[i]
        layer[hit] = i + 1
    return LayerAssignment(th, _frozen(layer))


# ---------------------------------------------------------------- sampling

def shortest_path(kg, src, dst, max_len):
    out_ptr, out_nbr, out_rel = kg.out_index
    in_ptr, in_nbr, in_rel = kg.in_index
    res = _kernels.bidirectional_bfs(out_ptr, out_nbr, out_rel, in_ptr, in_nbr, in_rel,
                                     int(src), int(dst), int(max_len))
    if res is None:
        return None
    return ReasoningPath.from_arrays(*res)


def sample_expert_paths(kg, n_paths, max_len, seed, *, layers=None, downward_only=False,
                        max_attempts=None):
    """Shortest paths between uniformly drawn ordered entity pairs.

    Pairs with no path of length ``1..max_len`` are redrawn. With
    ``downward_only`` (needs ``layers``) a path is also rejected if it visits
    an entity in a higher layer than its origin.
    """
    if downward_only and layers is None:
        raise ConfigError("downward_only needs a layer assignment")
    if kg.n_entities < 2:
        raise SamplingExhaustedError("need at least two entities to sample paths")
    rng = np.random.default_rng(seed)
    budget = 100 * n_paths if max_attempts is None else max_attempts
    paths = []
    attempts = 0
    while len(paths) < n_paths:
        if attempts >= budget:
            raise SamplingExhaustedError(
                f"found {len(paths)}/{n_paths} paths after {attempts} attempts")
        attempts += 1
        u, v = rng.integers(kg.n_entities, size=2)
        if u == v:
            continue
        path = shortest_path(kg, u, v, max_len)
        if path is None:
            continue
        if downward_only:
            lay = layers.layer_of
            if any(lay[e] < lay[path.origin] for e in path.entities):
                continue
        paths.append(path)
    return paths


# ---------------------------------------------------------------- partitioning

def partition(kg, spec, exclude=None):
    """Distribute entities over ``spec.K`` servers.

    ``K == 1`` hosts every (non-excluded) entity on server 0. Otherwise each
    server gets up to ``share = n // max(K, S)`` entities, ``S`` being the
    number of subjects: ``round((1 - p) * share)`` drawn exclusively from its
    anchor subject (fewer if the subject is smaller) and the rest drawn
    uniformly, without replacement, from what is left. Entities not drawn
    stay unhosted (``server_of == -1``).
    """
    n = kg.n_entities
    rng = np.random.default_rng(spec.seed)
    server_of = np.full(n, -1, dtype=np.int64)
    eligible = np.ones(n, dtype=bool)
    if exclude is not None:
        eligible[np.asarray(exclude, dtype=np.int64)] = False
    anchors = ()
    if spec.K == 1:
        server_of[eligible] = 0
    else:
        if spec.subjects is not None:
            labels = np.asarray(spec.subjects, dtype=np.int64)
        else:
            labels = kg.labels
        if labels is None:
            if spec.p < 1.0:
                raise ConfigError("p < 1 needs entity subject labels")
            labels = np.zeros(n, dtype=np.int64)
        subjects = np.unique(labels[eligible])
        if spec.p < 1.0 and spec.K > len(subjects):
            raise ConfigError(f"K={spec.K} exceeds the {len(subjects)} available subjects")
        share = int(eligible.sum()) // max(spec.K, len(subjects))
        anchors = tuple(int(s) for s in rng.permutation(subjects)[:spec.K]) \
            if spec.p < 1.0 else ()
        n_excl = int(round((1.0 - spec.p) * share))
        if n_excl:
            for k, subj in enumerate(anchors):
                # a subject smaller than the quota leaves its server short
                pool = np.flatnonzero(eligible & (labels == subj) & (server_of < 0))
                take = min(n_excl, len(pool))
                server_of[rng.choice(pool, size=take, replace=False)] = k
        for k in range(spec.K):
            pool = np.flatnonzero(eligible & (server_of < 0))
            take = min(share - n_excl, len(pool))
            server_of[rng.choice(pool, size=take, replace=False)] = k
    servers, subgraphs = [], []
    for k in range(spec.K):
        ents = np.flatnonzero(server_of == k)
        servers.append(_frozen(ents))
        subgraphs.append(kg.induced(ents)[0])
    return Partition(spec, _frozen(server_of), tuple(servers), tuple(subgraphs), anchors)


def dropped_edges(kg, part):
    """Triples whose endpoints are hosted on two different servers."""
    s = part.server_of
    h, t = kg.triples[:, 0], kg.triples[:, 2]
    mask = (s[h] >= 0) & (s[t] >= 0) & (s[h] != s[t])
    lost = kg.triples[mask]
    return len(lost), lost


def write_partition_csv(kg, part, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["entity_id", "server_id", "subject_label"])
        for e in range(kg.n_entities):
            if kg.labels is None:
                lab = ""
            elif kg.label_names:
                lab = kg.label_names[kg.labels[e]]
            else:
                lab = int(kg.labels[e])
            w.writerow([e, int(part.server_of[e]), lab])


def read_partition_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([int(r["server_id"]) for r in rows], dtype=np.int64)


def snowball_subgraph(kg, max_entities, seed):
    """Seeded connected-ish induced subgraph of at most ``max_entities``.

    Grows an undirected breadth-first ball from random start entities until
    the budget is met.
    """
    if kg.n_entities <= max_entities:
        return kg, np.arange(kg.n_entities)
    rng = np.random.default_rng(seed)
    adj = kg.adjacency(symmetric=True).tolil().rows
    taken = np.zeros(kg.n_entities, dtype=bool)
    order = []
    while len(order) < max_entities:
        start = int(rng.integers(kg.n_entities))
        if taken[start]:
            continue
        queue = [start]
        taken[start] = True
        order.append(start)
        i = 0
        while i < len(queue) and len(order) < max_entities:
            x = queue[i]
            i += 1
            nb = np.asarray(adj[x], dtype=np.int64)
            nb = nb[~taken[nb]]
            nb = rng.permutation(nb)
            for y in nb[: max_entities - len(order)]:
                taken[y] = True
                order.append(int(y))
                queue.append(int(y))
    ents = np.sort(np.asarray(order, dtype=np.int64))
    return kg.induced(ents)


def paths_valid(kg, paths):
    """Fraction of path steps that are graph triples (1.0 means all)."""
    steps = [(e0, r, e1) for p in paths
             for (e0, (r, e1)) in zip(p.entities[:-1], p.steps)]
    if not steps:
        return 1.0
    return float(kg.contains(np.asarray(steps)).mean())


def explicit_from_paths(paths: Sequence[ReasoningPath]):
    return [ExplicitSemantics((p.origin,)) for p in paths]
