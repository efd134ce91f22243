"""Cross-server link policies.

Relations whose endpoints live on different servers are dropped by the
partition. Each server learns a logistic scorer that predicts whether a
relation exists between one of its entities and a remote one; the scorers
are averaged with the same FedAvg loop as the interpreters.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from ..errors import ConfigError
from ..kg import dropped_edges
from .aggregate import FederationConfig, fedavg


def pair_features(table, u, v):
    """Symmetric pair feature ``[e_u * e_v, |e_u - e_v|]``."""
    a = table.entity_vecs[np.asarray(u, dtype=np.int64)]
    b = table.entity_vecs[np.asarray(v, dtype=np.int64)]
    return np.concatenate([a * b, np.abs(a - b)], axis=-1)


def auc_score(scores, labels):
    """Mann-Whitney AUC; ties count one half. NaN when a class is missing."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if not n_pos or not n_neg:
        return float("nan")
    r = rankdata(s)
    return float((r[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class LinkPolicy:
    """Logistic scorer over symmetric pair features.

    ``trivial`` marks the always-zero policy returned when there was
    nothing to learn from.
    """

    w: np.ndarray
    b: float = 0.0
    trivial: bool = False
    train_auc: float = float("nan")
    history: list = field(default_factory=list)   # (round, mean training loss)

    def logits(self, table, u, v):
        if self.trivial:
            return np.full(np.shape(np.atleast_1d(u)), -np.inf)
        return pair_features(table, np.atleast_1d(u), np.atleast_1d(v)) @ self.w + self.b

    def score(self, table, u, v):
        """Probability that a relation links ``u`` and ``v``."""
        z = self.logits(table, u, v)
        return 0.5 * (1.0 + np.tanh(0.5 * z))

    def predict(self, table, u, v):
        return self.score(table, u, v) >= 0.5


def _negatives(kg, part, heads, rng, forbid):
    """One uniformly drawn cross-server non-edge per head."""
    hosted = np.flatnonzero(part.server_of >= 0)
    out = np.empty(len(heads), dtype=np.int64)
    for i, h in enumerate(heads):
        for _ in range(1000):
            t = int(hosted[rng.integers(len(hosted))])
            if part.server_of[t] != part.server_of[h] and (int(h), t) not in forbid \
                    and (t, int(h)) not in forbid:
                out[i] = t
                break
        else:
            raise ConfigError(f"no cross-server non-edge found for entity {int(h)}")
    return out


def _loss_grad(w, b, x, y):
    z = x @ w + b
    p = 0.5 * (1.0 + np.tanh(0.5 * z))
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    d = (p - y) / len(y)
    return loss, x.T @ d, float(d.sum())


def train_cross_server_policy(kg, part, table, config=FederationConfig(), lr=0.5):
    """FedAvg-trained logistic link scorer on the partition's dropped relations.

    Server ``k`` trains on the dropped relations whose head it hosts, paired
    1:1 with uniformly sampled cross-server non-edges. Server weights are
    proportional to local example counts.

    Returns:
        ``LinkPolicy``; trivial (always 0, flagged) when nothing was dropped.
    """
    n_lost, lost = dropped_edges(kg, part)
    dim = 2 * table.dim
    if n_lost == 0:
        return LinkPolicy(np.zeros(dim), trivial=True)
    rng = np.random.default_rng([config.seed, 59])
    forbid = {(int(h), int(t)) for h, _, t in kg.triples}
    local = []
    for k in range(config.K):
        mine = lost[part.server_of[lost[:, 0]] == k]
        if not len(mine):
            local.append(None)
            continue
        neg = _negatives(kg, part, mine[:, 0], rng, forbid)
        u = np.concatenate([mine[:, 0], mine[:, 0]])
        v = np.concatenate([mine[:, 2], neg])
        y = np.concatenate([np.ones(len(mine)), np.zeros(len(mine))])
        local.append((pair_features(table, u, v), y))
    counts = np.array([0 if d is None else len(d[1]) for d in local], dtype=np.float64)
    gamma = counts / counts.sum()
    w = np.zeros(dim)
    b = 0.0
    pol = LinkPolicy(w, b)
    for rnd in range(1, config.rounds + 1):
        models, losses = [], []
        for d in local:
            wk, bk = w.copy(), b
            if d is not None:
                for _ in range(config.E):
                    loss, gw, gb = _loss_grad(wk, bk, *d)
                    wk -= lr * gw
                    bk -= lr * gb
                losses.append(loss)
            models.append(np.append(wk, bk))
        avg = fedavg(models, gamma)
        w, b = avg[:-1].copy(), float(avg[-1])
        pol.history.append((rnd, float(np.mean(losses))))
    pol.w, pol.b = w, b
    x = np.concatenate([d[0] for d in local if d is not None])
    y = np.concatenate([d[1] for d in local if d is not None])
    pol.train_auc = auc_score(x @ w + b, y)
    return pol
