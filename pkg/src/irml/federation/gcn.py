"""Two-layer graph convolutional node classifier and its federated training."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import ConfigError, DataError, TrainingError
from ..kg import dropped_edges, partition as partition_kg
from ..optim import SGD, Adam
from .aggregate import FederationConfig, fedavg, server_weights


def normalized_adjacency(kg):
    """``D^-1/2 (A + I) D^-1/2`` on the undirected entity graph."""
    a = kg.adjacency(symmetric=True) + sp.identity(kg.n_entities, format="csr")
    a.data[:] = 1.0
    d = np.asarray(a.sum(axis=1)).ravel()
    s = sp.diags(1.0 / np.sqrt(d))
    return (s @ a @ s).tocsr()


def row_normalized(features):
    x = sp.csr_matrix(features, dtype=np.float64)
    rs = np.asarray(x.sum(axis=1)).ravel()
    return (sp.diags(1.0 / np.where(rs > 0, rs, 1.0)) @ x).tocsr()


class GCN:
    """``softmax(A relu(A X W1) W2)`` with L2 penalty on ``W1``."""

    def __init__(self, n_features, n_classes, hidden=16, seed=0, weight_decay=5e-4):
        rng = np.random.default_rng([seed, 47])
        lim1 = np.sqrt(6.0 / (n_features + hidden))
        lim2 = np.sqrt(6.0 / (hidden + n_classes))
        self.params = {"w1": rng.uniform(-lim1, lim1, (n_features, hidden)),
                       "w2": rng.uniform(-lim2, lim2, (hidden, n_classes))}
        self.weight_decay = float(weight_decay)

    def _forward(self, A, X):
        # X may be passed already propagated as ("AX", matrix)
        ax = X[1] if isinstance(X, tuple) else A @ X
        a1 = np.asarray(ax @ self.params["w1"])
        h = np.maximum(a1, 0.0)
        z = A @ (h @ self.params["w2"])
        return z, (ax, a1, h)

    def logits(self, A, X):
        return self._forward(A, X)[0]

    def predict(self, A, X):
        return np.argmax(self.logits(A, X), axis=1)

    def loss_and_grad(self, A, X, labels, mask):
        """Mean cross-entropy over ``mask`` plus the weight penalty, and its gradient."""
        idx = np.flatnonzero(mask)
        if not len(idx):
            raise TrainingError("no labelled nodes to train on")
        z, (ax, a1, h) = self._forward(A, X)
        zi = z[idx]
        zi = zi - zi.max(axis=1, keepdims=True)
        logp = zi - np.log(np.exp(zi).sum(axis=1, keepdims=True))
        y = labels[idx]
        w1 = self.params["w1"]
        loss = -logp[np.arange(len(idx)), y].mean() + 0.5 * self.weight_decay * np.sum(w1 * w1)
        dz = np.zeros_like(z)
        p = np.exp(logp)
        p[np.arange(len(idx)), y] -= 1.0
        dz[idx] = p / len(idx)
        adz = A.T @ dz
        g2 = h.T @ adz
        da1 = (adz @ self.params["w2"].T) * (a1 > 0)
        g1 = np.asarray(ax.T @ da1) + self.weight_decay * w1
        return float(loss), {"w1": g1, "w2": g2}

    def accuracy(self, A, X, labels, mask):
        idx = np.flatnonzero(mask)
        return float((self.predict(A, X)[idx] == labels[idx]).mean()) if len(idx) else 0.0


@dataclass
class ClassificationRun:
    server_rows: list = field(default_factory=list)     # (round, server, loss, val_acc)
    aggregate_rows: list = field(default_factory=list)  # (round, val_acc)
    snapshots: list = field(default_factory=list)
    dropped_edges: int = 0

    def final_accuracy(self):
        return self.aggregate_rows[-1][1] if self.aggregate_rows else float("nan")

    def write_csv(self, server_path, aggregate_path):
        with open(server_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["round", "server_id", "local_loss", "val_accuracy"])
            for r, k, l, a in self.server_rows:
                w.writerow([r, k, format(l, ".10g"), format(a, ".10g")])
        with open(aggregate_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["round", "aggregated_val_accuracy"])
            for r, a in self.aggregate_rows:
                w.writerow([r, format(a, ".10g")])


def split_validation(kg, n_val, seed):
    """Seeded held-out validation nodes (excluded from every server)."""
    if n_val >= kg.n_entities:
        raise ConfigError("validation set would take every node")
    rng = np.random.default_rng([seed, 53])
    return np.sort(rng.choice(kg.n_entities, size=n_val, replace=False))


def run_federated_classification(kg, spec, config=FederationConfig(), *, n_val=500,
                                 hidden=16, lr=0.01, weight_decay=5e-4, optimizer="adam",
                                 keep_snapshots=False):
    """Federated GCN node classification over a subject-skewed partition.

    Each server trains on the subgraph induced by its hosted nodes, all of
    which are labelled. The coordinator averages weights every ``config.E``
    local steps and scores the averaged model on held-out validation nodes
    using the full graph.

    Args:
        spec: ``PartitionSpec``; its ``K`` must equal ``config.K``.
    """
    if kg.labels is None:
        raise DataError("node classification needs labels")
    if kg.features is None:
        raise DataError("node classification needs features")
    if spec.K != config.K:
        raise ConfigError(f"partition K={spec.K} differs from federation K={config.K}")
    val = split_validation(kg, n_val, config.seed)
    part = partition_kg(kg, spec, exclude=val)
    labels = np.asarray(kg.labels)
    n_cls = int(labels.max()) + 1
    A_full = normalized_adjacency(kg)
    X_full = row_normalized(kg.features)
    val_mask = np.zeros(kg.n_entities, dtype=bool)
    val_mask[val] = True
    AX_full = ("AX", (A_full @ X_full).tocsr())

    local = []
    for k, (ents, sub) in enumerate(zip(part.servers, part.subgraphs)):
        if not len(ents):
            raise ConfigError(f"server {k} hosts no nodes")
        A = normalized_adjacency(sub)
        local.append((A, ("AX", (A @ X_full[ents]).tocsr()), labels[ents]))
    gamma = np.asarray(config.gamma) if config.gamma is not None else \
        server_weights([len(e) for e in part.servers])

    model = GCN(X_full.shape[1], n_cls, hidden, config.seed, weight_decay)
    models = []
    opts = []
    for k in range(config.K):
        m = GCN.__new__(GCN)
        m.weight_decay = model.weight_decay
        m.params = {n: v.copy() for n, v in model.params.items()}
        models.append(m)
        opts.append(Adam(lr) if optimizer == "adam" else SGD(lr))

    run = ClassificationRun(dropped_edges=dropped_edges(kg, part)[0])
    glob = model
    for rnd in range(1, config.rounds + 1):
        for k, (A, X, y) in enumerate(local):
            mask = np.ones(len(y), dtype=bool)
            loss = 0.0
            for _ in range(config.E):
                loss, g = models[k].loss_and_grad(A, X, y, mask)
                opts[k].step(models[k].params, g)
            acc = models[k].accuracy(A_full, AX_full, labels, val_mask)
            run.server_rows.append((rnd, k, loss, acc))
        avg = fedavg([m.params for m in models], gamma)
        for m in models:
            m.params = {n: v.copy() for n, v in avg.items()}
        glob.params = {n: v.copy() for n, v in avg.items()}
        run.aggregate_rows.append((rnd, glob.accuracy(A_full, AX_full, labels, val_mask)))
        if keep_snapshots:
            run.snapshots.append({n: v.copy() for n, v in avg.items()})
    return run
