"""Occupancy measures over ``(entity, step, relation)`` and the quantities built on them."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .policy import PolicyNetwork, rollouts

EXACT_LIMIT = 10_000


@dataclass(frozen=True, eq=False)
class OccupancyTable:
    """Sparse occupancy: sorted linear keys ``(t * n + entity) * R + relation`` and masses.

    Each horizon step carries total mass one when no rollout stops early, so
    a full table sums to ``horizon``.
    """

    n_entities: int
    n_relations: int
    horizon: int
    keys: np.ndarray
    mass: np.ndarray

    @classmethod
    def from_dense(cls, dense):
        dense = np.asarray(dense, dtype=np.float64)
        J, n, R = dense.shape
        flat = dense.ravel()
        keys = np.flatnonzero(flat)
        return cls(n, R, J, keys, flat[keys])

    @classmethod
    def from_arrays(cls, n_entities, n_relations, horizon, t, e, r, weights):
        keys = (np.asarray(t, np.int64) * n_entities + np.asarray(e, np.int64)) * n_relations \
            + np.asarray(r, np.int64)
        uk, inv = np.unique(keys, return_inverse=True)
        m = np.bincount(inv, weights=np.asarray(weights, np.float64), minlength=len(uk))
        return cls(n_entities, n_relations, horizon, uk, m)

    def to_dense(self):
        d = np.zeros(self.horizon * self.n_entities * self.n_relations)
        d[self.keys] = self.mass
        return d.reshape(self.horizon, self.n_entities, self.n_relations)

    def decode(self):
        """``(t, entity, relation)`` arrays for the stored keys."""
        r = self.keys % self.n_relations
        s = self.keys // self.n_relations
        return s // self.n_entities, s % self.n_entities, r

    def state_ids(self):
        return self.keys // self.n_relations

    def total(self):
        return float(self.mass.sum())

    def per_step_mass(self):
        t = self.decode()[0]
        return np.bincount(t, weights=self.mass, minlength=self.horizon)

    def as_dict(self):
        t, e, r = self.decode()
        return {(int(a), int(b), int(c)): float(m) for a, b, c, m in zip(t, e, r, self.mass)}

    def with_mass(self, mass):
        return OccupancyTable(self.n_entities, self.n_relations, self.horizon, self.keys,
                              np.asarray(mass, dtype=np.float64))

    def write_csv(self, path):
        t, e, r = self.decode()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "entity", "relation", "mass"])
            for row in zip(t, e, r, self.mass):
                w.writerow([*map(int, row[:3]), format(float(row[3]), ".17g")])


def align(a, b):
    """Masses of two tables on the union of their keys."""
    if (a.n_entities, a.n_relations) != (b.n_entities, b.n_relations):
        raise ValueError("occupancy tables index different graphs")
    keys = np.union1d(a.keys, b.keys)
    ma = np.zeros(len(keys))
    mb = np.zeros(len(keys))
    ma[np.searchsorted(keys, a.keys)] = a.mass
    mb[np.searchsorted(keys, b.keys)] = b.mass
    return keys, ma, mb


def total_variation(a, b):
    """Half the L1 distance, averaged over horizon steps."""
    _, ma, mb = align(a, b)
    return 0.5 * float(np.abs(ma - mb).sum()) / max(a.horizon, b.horizon)


# ---------------------------------------------------------------- policies

class EmpiricalPolicy:
    """Step-dependent policy read off a path set (relative action counts)."""

    def __init__(self, ctx, paths, J):
        n, R = ctx.n_entities, ctx.n_relations
        self.ctx = ctx
        self.J = J
        self.counts = np.zeros((J, n, R))
        for p in paths:
            for t, (e, r) in enumerate(zip(p.entities[:-1], p.relations)):
                if t < J:
                    self.counts[t, e, r] += 1.0

    def probabilities_at(self, t):
        c = self.counts[t]
        tot = c.sum(axis=1, keepdims=True)
        uni = self.ctx.avail / np.maximum(self.ctx.avail.sum(axis=1, keepdims=True), 1)
        return np.where(tot > 0, c / np.where(tot > 0, tot, 1.0), uni)

    def distribution(self, ctx, entity, t=0):
        q = self.probabilities_at(min(t, self.J - 1))[entity]
        rels = np.flatnonzero(q > 0)
        return rels, q[rels]


def _probs_at(policy, ctx, t, cache):
    if hasattr(policy, "probabilities_at"):
        return policy.probabilities_at(t)
    if "q" not in cache:
        cache["q"] = policy.probabilities(ctx)
    return cache["q"]


def initial_distribution(n, initial):
    """Uniform over the listed origins (repeats add weight)."""
    init = np.asarray(initial, dtype=np.int64)
    if init.size == 0:
        raise ConfigError("need at least one initial entity")
    return np.bincount(init, minlength=n).astype(np.float64) / init.size


def occupancy_exact(policy, ctx, initial, J):
    """Forward dynamic program over ``(entity, t)``."""
    n, R = ctx.n_entities, ctx.n_relations
    if n * J > EXACT_LIMIT:
        raise ConfigError(
            f"exact occupancy needs n*J <= {EXACT_LIMIT} states, got {n * J}; "
            "use mode='monte_carlo'")
    mu = initial_distribution(n, initial)
    dense = np.zeros((J, n, R))
    cache = {}
    for t in range(J):
        q = _probs_at(policy, ctx, t, cache)
        occ = mu[:, None] * q
        dense[t] = occ
        mu = ctx.trans.T @ occ.ravel()
    return OccupancyTable.from_dense(dense)


def occupancy_from_paths(paths, n_entities, n_relations, J):
    """Empirical occupancy: each path adds ``1 / len(paths)`` per step taken."""
    if not len(paths):
        raise ConfigError("need at least one path")
    t, e, r = [], [], []
    for p in paths:
        ents = p.entities
        for k, rel in enumerate(p.relations[:J]):
            t.append(k)
            e.append(ents[k])
            r.append(rel)
    w = np.full(len(t), 1.0 / len(paths))
    return OccupancyTable.from_arrays(n_entities, n_relations, J, t, e, r, w)


def occupancy_measure(policy, ctx, initial, J, mode="exact", n=100_000, seed=0):
    """Occupancy of ``policy`` started uniformly from ``initial``.

    Args:
        mode: ``"exact"`` (dynamic program, at most ``EXACT_LIMIT`` states)
            or ``"monte_carlo"`` (``n`` seeded rollouts).
    """
    if mode == "exact":
        return occupancy_exact(policy, ctx, initial, J)
    if mode != "monte_carlo":
        raise ConfigError(f"mode must be 'exact' or 'monte_carlo', got {mode!r}")
    rng = np.random.default_rng([seed, 13])
    init = np.asarray(initial, dtype=np.int64)
    origins = init[rng.integers(len(init), size=int(n))]
    paths = rollouts(policy, ctx, origins, J, rng, "sample")
    return occupancy_from_paths(paths, ctx.n_entities, ctx.n_relations, J)


# ---------------------------------------------------------------- distances

def distance_statistic(c_expert, c_policy, eps=1e-3):
    """Cross-entropy distance: ``-sum c_E log clip(c_D, eps, 1)`` over the expert support."""
    if c_expert.total() <= 0:
        raise ConfigError("expert occupancy is empty")
    _, me, md = align(c_expert, c_policy)
    on = me > 0
    return float(-(me[on] * np.log(np.clip(md[on], eps, 1.0))).sum())


def step_residuals(paths, table):
    """Squared translation residual of every step in ``paths``."""
    E, Rv = table.entity_vecs, table.relation_vecs
    h, r, t = [], [], []
    for p in paths:
        ents = p.entities
        for k, rel in enumerate(p.relations):
            h.append(ents[k])
            r.append(rel)
            t.append(ents[k + 1])
    if not h:
        return np.zeros(0)
    d = E[h] + Rv[r] - E[t]
    return np.einsum("ij,ij->i", d, d)


def distance_energy(expert_paths, generated_paths, table):
    """Mean expert step residual minus mean generated step residual."""
    if not len(expert_paths) or not len(generated_paths):
        raise ConfigError("distance_energy needs two nonempty path sets")
    re = step_residuals(expert_paths, table)
    rg = step_residuals(generated_paths, table)
    if not len(re) or not len(rg):
        raise ConfigError("path sets contain no steps")
    return float(re.mean() - rg.mean())


def causal_entropy(c):
    """``sum c(s,a) * -log(c(s,a) / sum_a' c(s,a'))`` with states ``(entity, t)``."""
    if isinstance(c, OccupancyTable):
        sid, m = c.state_ids(), c.mass
    else:
        arr = np.asarray(c, dtype=np.float64)
        sid = np.repeat(np.arange(arr.shape[0]), arr.shape[1])
        m = arr.ravel()
    _, inv = np.unique(sid, return_inverse=True)
    tot = np.bincount(inv, weights=m)
    pos = m > 0
    return float(-(m[pos] * np.log(m[pos] / tot[inv[pos]])).sum())


def loss_F(c_policy, c_expert, lam, eps=1e-3):
    """Imitation objective ``-H(c_D) + lam * Gamma(c_E, c_D)``."""
    if lam < 0:
        raise ConfigError("lam must be >= 0")
    g = distance_statistic(c_expert, c_policy, eps) if lam else 0.0
    return -causal_entropy(c_policy) + lam * g


def dense_loss_F(c_policy, c_expert, lam, eps=1e-3):
    """``loss_F`` on aligned ``(states, actions)`` mass arrays."""
    cd = np.asarray(c_policy, dtype=np.float64)
    ce = np.asarray(c_expert, dtype=np.float64)
    tot = cd.sum(axis=1, keepdims=True)
    h = -np.sum(np.where(cd > 0, cd * np.log(np.where(cd > 0, cd, 1.0) / tot), 0.0))
    on = ce > 0
    g = -np.sum(ce[on] * np.log(np.clip(cd[on], eps, 1.0)))
    return -h + lam * g
