"""Graph-convolutional reasoning policy over relation actions.

State is reduced to ``(current entity, step)``; the network itself only looks
at the entity. Input features per entity are its embedding concatenated with
a one-hot of its layer, averaged over the entity's neighbourhood (self
included) and standardized per column, then passed through a rectified hidden layer to one score per
relation. Scores are softmaxed over the relations available at the entity,
clipped to ``[eps, 1 - eps]`` and renormalized.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import ConfigError, DeadEndError
from ..kg import ReasoningPath


@dataclass(frozen=True, eq=False)
class PolicyContext:
    """Graph-derived inputs shared by every policy on one graph.

    Attributes:
        features: ``(n, F)`` neighbourhood-averaged input features.
        avail: ``(n, R)`` bool, relations selectable at each entity.
        trans: sparse ``(n * R, n)`` next-entity distribution per
            ``(entity, relation)`` (uniform over tails).
    """

    n_entities: int
    n_relations: int
    features: np.ndarray
    avail: np.ndarray
    trans: sp.csr_matrix
    tails_ptr: np.ndarray
    tails: np.ndarray

    @classmethod
    def build(cls, kg, table, layers=None, mask_upward=False):
        n, R = kg.n_entities, kg.n_relations
        if table.entity_vecs.shape[0] != n:
            raise ConfigError("embedding table does not match the graph")
        layer_of = np.ones(n, dtype=np.int64) if layers is None else np.asarray(
            layers.layer_of if hasattr(layers, "layer_of") else layers, dtype=np.int64)
        n_layers = int(layer_of.max())
        onehot = np.zeros((n, n_layers))
        onehot[np.arange(n), layer_of - 1] = 1.0
        x = np.hstack([np.asarray(table.entity_vecs, dtype=np.float64), onehot])
        a = kg.adjacency(symmetric=True) + sp.identity(n, format="csr")
        a.data[:] = 1.0
        a = sp.diags(1.0 / np.asarray(a.sum(axis=1)).ravel()) @ a
        feats = np.asarray(a @ x)
        # standardize columns so small neighbourhood differences stay visible
        sd = feats.std(axis=0)
        feats = (feats - feats.mean(axis=0)) / np.where(sd > 1e-12, sd, 1.0)

        h, r, t = kg.triples.T
        key = h * R + r
        order = np.lexsort((t, key))
        key, tt = key[order], t[order]
        ptr = np.zeros(n * R + 1, dtype=np.int64)
        np.cumsum(np.bincount(key, minlength=n * R), out=ptr[1:])
        cnt = np.diff(ptr)
        avail = (cnt > 0).reshape(n, R)
        if mask_upward:
            # drop relations whose every tail sits in a strictly higher layer
            up = (layer_of[tt] < layer_of[key // R]).astype(np.int64)
            n_up = np.bincount(key, weights=up, minlength=n * R).reshape(n, R)
            keep = avail & (n_up < cnt.reshape(n, R))
            has = keep.any(axis=1)
            avail = np.where(has[:, None], keep, avail)
        w = 1.0 / cnt[key]
        trans = sp.csr_matrix((w, (key, tt)), shape=(n * R, n))
        return cls(n, R, feats, avail, trans, ptr, tt)

    def next_entities(self, e, r):
        k = e * self.n_relations + r
        return self.tails[self.tails_ptr[k]:self.tails_ptr[k + 1]]

    def available(self, e):
        return np.flatnonzero(self.avail[e])


class PolicyNetwork:
    """Two-layer graph-convolutional policy.

    Args:
        n_features: input width (embedding dim plus number of layers).
        n_relations: number of relation actions.
        hidden: hidden width.
        eps: probability clip.
        seed: initialization seed; ``None`` gives all-zero weights.
    """

    def __init__(self, n_features, n_relations, hidden=16, eps=1e-3, seed=0, scale=0.5):
        if not 0.0 <= eps < 0.5:
            raise ConfigError(f"eps must lie in [0, 0.5), got {eps}")
        self.eps = float(eps)
        if seed is None:
            w1 = np.zeros((n_features, hidden))
            w2 = np.zeros((hidden, n_relations))
        else:
            rng = np.random.default_rng([seed, 11])
            w1 = rng.normal(0.0, scale / np.sqrt(n_features), (n_features, hidden))
            w2 = rng.normal(0.0, scale / np.sqrt(hidden), (hidden, n_relations))
        self.params = {"w1": w1, "b1": np.zeros(hidden), "w2": w2, "b2": np.zeros(n_relations)}

    @classmethod
    def for_context(cls, ctx, hidden=16, eps=1e-3, seed=0, scale=0.5):
        return cls(ctx.features.shape[1], ctx.n_relations, hidden, eps, seed, scale)

    def copy(self):
        other = object.__new__(PolicyNetwork)
        other.eps = self.eps
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    # -- forward / backward -------------------------------------------------

    def _forward(self, ctx, rows):
        p = self.params
        z = ctx.features[rows]
        a1 = z @ p["w1"] + p["b1"]
        h = np.maximum(a1, 0.0)
        s = h @ p["w2"] + p["b2"]
        av = ctx.avail[rows]
        s = np.where(av, s, -np.inf)
        smax = s.max(axis=1, keepdims=True)
        smax = np.where(np.isfinite(smax), smax, 0.0)
        ex = np.where(av, np.exp(s - smax), 0.0)
        tot = ex.sum(axis=1, keepdims=True)
        soft = np.divide(ex, tot, out=np.zeros_like(ex), where=tot > 0)
        clipped = np.where(av, np.clip(soft, self.eps, 1.0 - self.eps), 0.0)
        # a lone action keeps probability one
        single = av.sum(axis=1) == 1
        clipped[single] = av[single].astype(np.float64)
        norm = clipped.sum(axis=1, keepdims=True)
        q = np.divide(clipped, norm, out=np.zeros_like(clipped), where=norm > 0)
        cache = (rows, z, a1, h, av, soft, clipped, norm, single)
        return q, cache

    def _backward(self, cache, dq, through_clip=True):
        rows, z, a1, h, av, soft, clipped, norm, single = cache
        q = np.divide(clipped, norm, out=np.zeros_like(clipped), where=norm > 0)
        # through renormalization
        dc = np.divide(dq - (dq * q).sum(axis=1, keepdims=True), norm,
                       out=np.zeros_like(dq), where=norm > 0)
        # through the clip: flat outside (eps, 1 - eps)
        if through_clip:
            inside = av & (soft > self.eps) & (soft < 1.0 - self.eps)
        else:
            # straight-through: treat the clip as the identity
            inside = av.copy()
        inside[single] = False
        dp = np.where(inside, dc, 0.0)
        ds = soft * (dp - (dp * soft).sum(axis=1, keepdims=True))
        p = self.params
        g = {"w2": h.T @ ds, "b2": ds.sum(axis=0)}
        da1 = (ds @ p["w2"].T) * (a1 > 0)
        g["w1"] = z.T @ da1
        g["b1"] = da1.sum(axis=0)
        return g

    def probabilities(self, ctx, rows=None):
        """``(len(rows), R)`` action probabilities; dead-end rows are all zero."""
        rows = np.arange(ctx.n_entities) if rows is None else np.asarray(rows, dtype=np.int64)
        return self._forward(ctx, rows)[0]

    def distribution(self, ctx, entity, t=0):
        """Available relations and their probabilities at ``entity``."""
        rels = ctx.available(entity)
        if len(rels) == 0:
            raise DeadEndError(f"entity {entity} has no outgoing relation")
        q = self.probabilities(ctx, [entity])[0]
        return rels, q[rels]

    def log_prob(self, ctx, entities, actions):
        q = self.probabilities(ctx, entities)
        return np.log(q[np.arange(len(q)), np.asarray(actions)])

    def grad_log_prob(self, ctx, entities, actions, weights=None, through_clip=True):
        """Gradient of ``sum_i w_i log pi(a_i | e_i)``.

        With ``through_clip=False`` the clip is treated as the identity, which
        keeps saturated actions trainable.
        """
        entities = np.asarray(entities, dtype=np.int64)
        actions = np.asarray(actions, dtype=np.int64)
        w = np.ones(len(entities)) if weights is None else np.asarray(weights, dtype=np.float64)
        q, cache = self._forward(ctx, entities)
        dq = np.zeros_like(q)
        idx = np.arange(len(entities))
        np.add.at(dq, (idx, actions), w / q[idx, actions])
        return self._backward(cache, dq, through_clip)

    def entropy(self, ctx, entities):
        q = self.probabilities(ctx, entities)
        return -np.sum(np.where(q > 0, q * np.log(np.where(q > 0, q, 1.0)), 0.0), axis=1)

    def grad_entropy(self, ctx, entities, weights=None, through_clip=True):
        """Gradient of ``sum_i w_i H(pi(. | e_i))``."""
        entities = np.asarray(entities, dtype=np.int64)
        w = np.ones(len(entities)) if weights is None else np.asarray(weights, dtype=np.float64)
        q, cache = self._forward(ctx, entities)
        logq = np.log(np.where(q > 0, q, 1.0))
        dq = np.where(q > 0, -(logq + 1.0), 0.0) * w[:, None]
        return self._backward(cache, dq, through_clip)


def policy_forward(policy, ctx, state):
    """Action distribution for a state ``(entity, t)`` or a bare entity id."""
    entity = state[0] if isinstance(state, tuple) else int(state)
    t = state[1] if isinstance(state, tuple) else 0
    return policy.distribution(ctx, entity, t)


def rollout(policy, ctx, origin, J, seed=0, mode="sample"):
    """Generate one reasoning path of at most ``J`` steps.

    ``policy`` is anything with ``distribution(ctx, entity, t)``. Greedy mode
    takes the most probable relation (lowest id on ties); both modes draw
    among multiple tails with the seeded generator. A dead end stops the path.
    """
    if mode not in ("sample", "greedy"):
        raise ConfigError(f"mode must be 'sample' or 'greedy', got {mode!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    e = int(origin)
    steps = []
    for t in range(J):
        if not ctx.avail[e].any():
            break
        rels, p = policy.distribution(ctx, e, t)
        if mode == "greedy":
            a = int(rels[int(np.argmax(p))])
        else:
            a = int(rels[rng.choice(len(rels), p=p / p.sum())])
        nxt = ctx.next_entities(e, a)
        e = int(nxt[0] if len(nxt) == 1 else nxt[rng.integers(len(nxt))])
        steps.append((a, e))
    return ReasoningPath(int(origin), tuple(steps))


def rollouts(policy, ctx, origins, J, seed=0, mode="sample"):
    """Batch rollout sharing one seeded generator, vectorized per step."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    origins = np.asarray(origins, dtype=np.int64)
    if not isinstance(policy, PolicyNetwork):
        return [rollout(policy, ctx, o, J, rng, mode) for o in origins]
    n = len(origins)
    cur = origins.copy()
    alive = np.ones(n, dtype=bool)
    rels = np.full((n, J), -1, dtype=np.int64)
    ents = np.full((n, J), -1, dtype=np.int64)
    probs = policy.probabilities(ctx)
    for t in range(J):
        alive &= ctx.avail[cur].any(axis=1)
        idx = np.flatnonzero(alive)
        if not len(idx):
            break
        q = probs[cur[idx]]
        if mode == "greedy":
            a = np.argmax(q, axis=1)
        else:
            u = rng.random(len(idx))
            cdf = np.cumsum(q, axis=1)
            a = np.minimum((cdf < (u * cdf[:, -1])[:, None]).sum(axis=1), q.shape[1] - 1)
        key = cur[idx] * ctx.n_relations + a
        lo, hi = ctx.tails_ptr[key], ctx.tails_ptr[key + 1]
        pick = lo + np.floor(rng.random(len(idx)) * (hi - lo)).astype(np.int64)
        nxt = ctx.tails[pick]
        rels[idx, t] = a
        ents[idx, t] = nxt
        cur[idx] = nxt
    out = []
    for i in range(n):
        k = int((rels[i] >= 0).sum())
        out.append(ReasoningPath(int(origins[i]),
                                 tuple(zip(rels[i, :k].tolist(), ents[i, :k].tolist()))))
    return out
