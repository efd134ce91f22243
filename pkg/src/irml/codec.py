"""Translation-based semantic encoder and its constellation encoding."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ConfigError, MissingIdError, SamplingExhaustedError, TrainingError
from .kg import ExplicitSemantics, ReasoningPath

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CodecConfig:
    dim: int = 50
    margin: float = 1.0
    lr: float = 0.01
    epochs: int = 200
    batch_size: int = 128
    negatives: int = 1
    seed: int = 0
    max_relation_norm: float | None = None

    def __post_init__(self):
        if self.margin <= 0:
            raise ConfigError(f"margin must be > 0, got {self.margin}")
        if self.dim < 2:
            raise ConfigError(f"dim must be >= 2, got {self.dim}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        for name in ("batch_size", "negatives"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    """Entity and relation vectors; row ``i`` belongs to id ``i``."""

    entity_vecs: np.ndarray
    relation_vecs: np.ndarray

    def __post_init__(self):
        for a in (self.entity_vecs, self.relation_vecs):
            if a.ndim != 2 or not np.all(np.isfinite(a)):
                raise TrainingError("embedding table must be finite 2-D arrays")
        if self.entity_vecs.shape[1] != self.relation_vecs.shape[1]:
            raise TrainingError("entity and relation widths differ")

    @property
    def dim(self):
        return self.entity_vecs.shape[1]

    @property
    def n_entities(self):
        return self.entity_vecs.shape[0]

    @property
    def n_relations(self):
        return self.relation_vecs.shape[0]

    def entity(self, e):
        _check_ids(e, self.n_entities, "entity")
        return self.entity_vecs[e]

    def relation(self, r):
        _check_ids(r, self.n_relations, "relation")
        return self.relation_vecs[r]

    def copy(self):
        return EmbeddingTable(self.entity_vecs.copy(), self.relation_vecs.copy())


@dataclass(frozen=True)
class TripleBatch:
    positives: np.ndarray
    negatives: np.ndarray


@dataclass(frozen=True, eq=False)
class EncodedSignal:
    """Real samples of a message plus where each symbol lives in them.

    ``offsets`` has one more entry than there are symbols; symbol ``i``
    occupies ``samples[offsets[i]:offsets[i + 1]]``.
    """

    samples: np.ndarray
    offsets: np.ndarray
    kinds: tuple = ()
    ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        off = self.offsets
        if len(off) < 1 or off[0] != 0 or off[-1] != len(self.samples) or np.any(np.diff(off) <= 0):
            raise ValueError("symbol offsets must tile the sample vector")

    @property
    def n_symbols(self):
        return len(self.offsets) - 1

    @property
    def power(self):
        return float(np.mean(self.samples ** 2))

    def symbols(self):
        """Samples reshaped to ``(n_symbols, width)`` (all symbols equal width)."""
        w = np.diff(self.offsets)
        if np.any(w != w[0]):
            raise ValueError("symbols have unequal widths")
        return self.samples.reshape(-1, int(w[0]))

    def entity_mask(self):
        return np.array([k == "entity" for k in self.kinds], dtype=bool)


def _check_ids(ids, n, kind):
    a = np.asarray(ids)
    if a.size and (a.min() < 0 or a.max() >= n):
        bad = a[(a < 0) | (a >= n)].ravel()[0]
        raise MissingIdError(f"{kind} id {int(bad)} not in table of {n}")


def _check_batch(batch, table):
    pos = np.asarray(batch.positives, dtype=np.int64).reshape(-1, 3)
    neg = np.asarray(batch.negatives, dtype=np.int64).reshape(-1, 3)
    if len(pos) == 0:
        raise ValueError("batch is empty")
    if pos.shape != neg.shape:
        raise ValueError("positives and negatives must pair up")
    for t in (pos, neg):
        _check_ids(t[:, [0, 2]], table.n_entities, "entity")
        _check_ids(t[:, 1], table.n_relations, "relation")
    return np.ascontiguousarray(pos), np.ascontiguousarray(neg)


def margin_loss(batch, table, margin=1.0):
    """Summed hinge ``max(0, margin + ||h + r - t||^2 - ||h' + r' - t'||^2)``."""
    pos, neg = _check_batch(batch, table)
    e, r = table.entity_vecs, table.relation_vecs
    a = e[pos[:, 0]] + r[pos[:, 1]] - e[pos[:, 2]]
    b = e[neg[:, 0]] + r[neg[:, 1]] - e[neg[:, 2]]
    s = margin + (a * a).sum(axis=1) - (b * b).sum(axis=1)
    return float(np.maximum(s, 0.0).sum())


def loss_gradient(batch, table, margin=1.0):
    """Subgradient of ``margin_loss``; inactive hinges contribute zero.

    Returns:
        ``(loss, grad_entities, grad_relations)`` with the table's shapes.
    """
    pos, neg = _check_batch(batch, table)
    ent = np.ascontiguousarray(table.entity_vecs, dtype=np.float64)
    rel = np.ascontiguousarray(table.relation_vecs, dtype=np.float64)
    g_ent = np.zeros_like(ent)
    g_rel = np.zeros_like(rel)
    loss = _kernels.margin_grad_accumulate(ent, rel, pos, neg, float(margin), g_ent, g_rel)
    return float(loss), g_ent, g_rel


def init_table(n_entities, n_relations, dim, seed):
    rng = np.random.default_rng(seed)
    bound = 6.0 / np.sqrt(dim)
    ent = rng.uniform(-bound, bound, size=(n_entities, dim))
    rel = rng.uniform(-bound, bound, size=(n_relations, dim))
    return EmbeddingTable(ent, rel)


def corrupt(kg, pos, rng, max_rounds=100):
    """One negative per positive: head or tail swapped for a random entity.

    Corruptions that hit a real triple are redrawn.
    """
    neg = pos.copy()
    todo = np.arange(len(pos))
    for _ in range(max_rounds):
        side = np.where(rng.random(len(todo)) < 0.5, 0, 2)
        neg[todo] = pos[todo]
        neg[todo, side] = rng.integers(kg.n_entities, size=len(todo))
        todo = todo[kg.contains(neg[todo])]
        if not len(todo):
            return neg
    raise SamplingExhaustedError(f"{len(todo)} triples admit no valid corruption")


def train_encoder(kg, config=CodecConfig()):
    """Minibatch SGD on the margin loss.

    Entity vectors are projected back to unit norm after every epoch.

    Returns:
        ``(table, history)`` where ``history`` holds the mean per-triple loss
        of each epoch.
    """
    if kg.n_triples == 0:
        raise TrainingError("cannot train an encoder on an empty triple set")
    table = init_table(kg.n_entities, kg.n_relations, config.dim, config.seed)
    ent = table.entity_vecs.copy()
    rel = table.relation_vecs.copy()
    rng = np.random.default_rng([config.seed, 1])
    triples = kg.triples
    history = []
    for _ in range(config.epochs):
        order = rng.permutation(len(triples))
        total = 0.0
        count = 0
        for start in range(0, len(order), config.batch_size):
            pos = triples[order[start:start + config.batch_size]]
            pos = np.repeat(pos, config.negatives, axis=0)
            neg = corrupt(kg, pos, rng)
            g_ent = np.zeros_like(ent)
            g_rel = np.zeros_like(rel)
            total += _kernels.margin_grad_accumulate(
                ent, rel, np.ascontiguousarray(pos), neg, config.margin, g_ent, g_rel)
            count += len(pos)
            ent -= config.lr * g_ent
            rel -= config.lr * g_rel
        ent /= np.maximum(np.linalg.norm(ent, axis=1, keepdims=True), 1e-12)
        if config.max_relation_norm is not None:
            norms = np.linalg.norm(rel, axis=1, keepdims=True)
            rel *= np.minimum(1.0, config.max_relation_norm / np.maximum(norms, 1e-12))
        if not (np.all(np.isfinite(ent)) and np.all(np.isfinite(rel))):
            raise TrainingError("embedding training diverged; lower the learning rate")
        history.append(total / count)
    return EmbeddingTable(ent, rel), np.asarray(history)


def translation_residual(kg, table):
    """Mean ``||h + r - t||^2`` over the graph's triples."""
    h, r, t = kg.triples.T
    d = table.entity_vecs[h] + table.relation_vecs[r] - table.entity_vecs[t]
    return float((d * d).sum(axis=1).mean())


def tail_ranks(kg, table, triples=None, filtered=False):
    """Rank of the true tail under ``||h + r - e||^2`` over all entities (1 = best).

    Ties count against the true tail only for lower ids, matching the
    decoder's tie rule.
    """
    t = kg.triples if triples is None else np.asarray(triples, dtype=np.int64)
    q = table.entity_vecs[t[:, 0]] + table.relation_vecs[t[:, 1]]
    ranks = np.empty(len(t), dtype=np.int64)
    for i, (qi, tr) in enumerate(zip(q, t)):
        d = _kernels.sq_distances(qi, table.entity_vecs)
        true = d[tr[2]]
        better = (d < true) | ((d == true) & (np.arange(len(d)) < tr[2]))
        if filtered:
            other = kg.tails(tr[0], tr[1])
            better[other] = False
        ranks[i] = 1 + int(better.sum())
    return ranks


def encode(v, table):
    """Concatenate symbol vectors in declaration order.

    ``ExplicitSemantics`` sends its entities then its relations; a
    ``ReasoningPath`` sends ``e0, r1, e1, ...``; a plain id sequence is read
    as entities.
    """
    if isinstance(v, ReasoningPath):
        kinds, ids = ["entity"], [v.origin]
        for r, e in v.steps:
            kinds += ["relation", "entity"]
            ids += [r, e]
    elif isinstance(v, ExplicitSemantics):
        kinds = ["entity"] * len(v.entities) + ["relation"] * len(v.relations)
        ids = list(v.entities) + list(v.relations)
    else:
        ids = [int(x) for x in np.asarray(v).ravel()]
        kinds = ["entity"] * len(ids)
    if not ids:
        raise ValueError("nothing to encode")
    ids = np.asarray(ids, dtype=np.int64)
    is_ent = np.array([k == "entity" for k in kinds])
    _check_ids(ids[is_ent], table.n_entities, "entity")
    _check_ids(ids[~is_ent], table.n_relations, "relation")
    vecs = np.where(is_ent[:, None], table.entity_vecs[np.where(is_ent, ids, 0)],
                    table.relation_vecs[np.where(is_ent, 0, ids)])
    d = table.dim
    offsets = np.arange(len(ids) + 1, dtype=np.int64) * d
    return EncodedSignal(vecs.ravel().copy(), offsets, tuple(kinds), ids)


def as_complex(signal):
    """Pair consecutive real samples into constellation points (even width only)."""
    s = np.asarray(signal.samples if isinstance(signal, EncodedSignal) else signal)
    if len(s) % 2:
        raise ValueError("odd sample count has no complex reading")
    return s[0::2] + 1j * s[1::2]


def write_embeddings_csv(table, path):
    d = table.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "id", *(f"c{i}" for i in range(d))])
        for kind, arr in (("entity", table.entity_vecs), ("relation", table.relation_vecs)):
            for i, row in enumerate(arr):
                w.writerow([kind, i, *(format(float(x), ".17g") for x in row)])


def read_embeddings_csv(path):
    ent, rel = {}, {}
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            (ent if row[0] == "entity" else rel)[int(row[1])] = [float(x) for x in row[2:]]
    e = np.array([ent[i] for i in range(len(ent))])
    r = np.array([rel[i] for i in range(len(rel))])
    return EmbeddingTable(e, r)
