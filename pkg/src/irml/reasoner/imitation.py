"""Adversarial imitation of an expert's reasoning paths.

An evaluator network learns to tell expert paths from generated ones; the
policy is pushed by a likelihood-ratio gradient toward paths the evaluator
takes for expert ones, with a causal-entropy bonus weighted by ``lam``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from ..codec import EmbeddingTable
from ..errors import ConfigError, DeadEndError, TrainingError
from ..kg import KnowledgeGraph, ReasoningPath
from ..optim import Adam
from .occupancy import (
    EXACT_LIMIT,
    causal_entropy,
    distance_energy,
    distance_statistic,
    occupancy_exact,
    occupancy_from_paths,
    total_variation,
)
from .policy import PolicyContext, PolicyNetwork, rollouts

log = logging.getLogger(__name__)


def _softplus(z):
    return np.logaddexp(0.0, z)


class EvaluatorNetwork:
    """One rectified hidden layer and a sigmoid output: probability a path is expert."""

    def __init__(self, n_features, hidden=16, seed=0):
        rng = np.random.default_rng([seed, 17])
        self.params = {
            "w1": rng.normal(0.0, np.sqrt(2.0 / n_features), (n_features, hidden)),
            "b1": np.zeros(hidden),
            "w2": rng.normal(0.0, np.sqrt(1.0 / hidden), hidden),
            "b2": np.zeros(1),
        }

    def copy(self):
        other = object.__new__(EvaluatorNetwork)
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def logits(self, x):
        p = self.params
        h = np.maximum(np.atleast_2d(x) @ p["w1"] + p["b1"], 0.0)
        return h @ p["w2"] + p["b2"][0]

    def __call__(self, x):
        z = self.logits(x)
        return 0.5 * (1.0 + np.tanh(0.5 * z))

    def objective(self, x_expert, x_gen):
        """``mean log D(expert) + mean log(1 - D(generated))``."""
        return float(-_softplus(-self.logits(x_expert)).mean()
                     - _softplus(self.logits(x_gen)).mean())

    def grad_objective(self, x_expert, x_gen):
        p = self.params
        x = np.vstack([np.atleast_2d(x_expert), np.atleast_2d(x_gen)])
        ne = len(np.atleast_2d(x_expert))
        ng = len(x) - ne
        a1 = x @ p["w1"] + p["b1"]
        h = np.maximum(a1, 0.0)
        z = h @ p["w2"] + p["b2"][0]
        d = 0.5 * (1.0 + np.tanh(0.5 * z))
        dz = np.concatenate([(1.0 - d[:ne]) / ne, -d[ne:] / ng])
        g = {"w2": h.T @ dz, "b2": np.array([dz.sum()])}
        da1 = np.outer(dz, p["w2"]) * (a1 > 0)
        g["w1"] = x.T @ da1
        g["b1"] = da1.sum(axis=0)
        return g

    def accuracy(self, x_expert, x_gen):
        de = self(x_expert)
        dg = self(x_gen)
        return float(((de > 0.5).sum() + (dg < 0.5).sum()) / (len(de) + len(dg)))


def path_features(paths, table, J):
    """Origin embedding followed by the step relation vectors, zero-padded to ``J`` steps."""
    d = table.dim
    out = np.zeros((len(paths), d * (J + 1)))
    for i, p in enumerate(paths):
        out[i, :d] = table.entity_vecs[p.origin]
        for k, r in enumerate(p.relations[:J]):
            out[i, d * (k + 1):d * (k + 2)] = table.relation_vecs[r]
    return out


def train_evaluator(x_expert, x_gen, evaluator, steps, lr, optimizer=None):
    """Gradient ascent on the evaluator objective; returns an updated copy.

    Inputs are feature arrays (see ``path_features``).
    """
    if len(x_expert) == 0 or len(x_gen) == 0:
        raise ConfigError("train_evaluator needs nonempty expert and generated sets")
    ev = evaluator.copy()
    opt = Adam(lr) if optimizer is None else optimizer
    for _ in range(int(steps)):
        opt.step(ev.params, ev.grad_objective(x_expert, x_gen), ascend=True)
    return ev


@dataclass(frozen=True)
class ImitationConfig:
    lam: float = 1e-2
    J: int = 2
    rollouts: int = 64
    policy_lr: float = 0.01
    evaluator_lr: float = 0.01
    updates: int = 2000
    seed: int = 0
    eps: float = 1e-3
    hidden: int = 16
    evaluator_hidden: int = 16
    evaluator_steps: int = 1
    mask_upward: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")
        for name in ("J", "rollouts", "updates", "hidden", "evaluator_hidden"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.evaluator_steps < 0:
            raise ConfigError("evaluator_steps must be >= 0")
        if self.policy_lr <= 0 or self.evaluator_lr <= 0:
            raise ConfigError("learning rates must be positive")


HISTORY_FIELDS = ("update", "distance_I", "distance_II", "evaluator_acc", "policy_entropy")


@dataclass
class TrainingHistory:
    rows: list = field(default_factory=list)

    def column(self, name):
        i = HISTORY_FIELDS.index(name)
        return np.array([r[i] for r in self.rows], dtype=np.float64)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HISTORY_FIELDS)
            for r in self.rows:
                w.writerow([r[0], *(format(float(v), ".10g") for v in r[1:])])


def smoothed(x, window=50):
    """Trailing moving average (shorter windows at the start)."""
    x = np.asarray(x, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(x)])
    i = np.arange(1, len(x) + 1)
    lo = np.maximum(i - window, 0)
    return (c[i] - c[lo]) / (i - lo)


class InterpreterTrainer:
    """Stateful alternating trainer; ``step`` runs one update."""

    def __init__(self, kg, table, expert_paths, config=ImitationConfig(), layers=None,
                 ctx=None, policy=None, evaluator=None):
        if not len(expert_paths):
            raise ConfigError("need at least one expert path")
        self.kg, self.table, self.cfg = kg, table, config
        self.ctx = PolicyContext.build(kg, table, layers, config.mask_upward) if ctx is None else ctx
        self.expert = list(expert_paths)
        self.origins = np.array([p.origin for p in self.expert], dtype=np.int64)
        J = config.J
        self.x_expert = path_features(self.expert, table, J)
        self.c_expert = occupancy_from_paths(self.expert, kg.n_entities, kg.n_relations, J)
        self.policy = policy if policy is not None else PolicyNetwork.for_context(
            self.ctx, config.hidden, config.eps, config.seed)
        self.evaluator = evaluator if evaluator is not None else EvaluatorNetwork(
            self.x_expert.shape[1], config.evaluator_hidden, config.seed)
        self.p_opt = Adam(config.policy_lr)
        self.e_opt = Adam(config.evaluator_lr)
        self.rng = np.random.default_rng([config.seed, 23])
        self.exact = kg.n_entities * J <= EXACT_LIMIT
        self.history = TrainingHistory()
        self.n_updates = 0

    def check_dead_ends(self):
        probe = rollouts(self.policy, self.ctx, self.origins[:256], self.cfg.J,
                         np.random.default_rng([self.cfg.seed, 29]))
        med = float(np.median([p.length for p in probe]))
        if med < min(2, self.cfg.J):
            raise DeadEndError(
                f"median rollout length {med} < 2: the graph is dominated by dead ends")

    def policy_gradient(self, paths, reward):
        """Likelihood-ratio gradient plus the weighted entropy bonus."""
        cfg = self.cfg
        adv = reward - reward.mean()
        ents, acts, w = [], [], []
        for p, a in zip(paths, adv):
            for e, r in zip(p.entities[:-1], p.relations):
                ents.append(e)
                acts.append(r)
                w.append(a)
        n = len(paths)
        if not ents:
            raise TrainingError("all generated paths are empty")
        g = self.policy.grad_log_prob(self.ctx, ents, acts, np.asarray(w) / n, through_clip=False)
        if cfg.lam:
            ge = self.policy.grad_entropy(self.ctx, ents, np.full(len(ents), cfg.lam / n),
                                          through_clip=False)
            for k in g:
                g[k] += ge[k]
        return g

    def step(self):
        cfg = self.cfg
        origins = self.origins[self.rng.integers(len(self.origins), size=cfg.rollouts)]
        gen = rollouts(self.policy, self.ctx, origins, cfg.J, self.rng)
        x_gen = path_features(gen, self.table, cfg.J)
        pick = self.rng.integers(len(self.expert), size=cfg.rollouts)
        x_exp = self.x_expert[pick]
        for _ in range(cfg.evaluator_steps):
            self.e_opt.step(self.evaluator.params,
                            self.evaluator.grad_objective(x_exp, x_gen), ascend=True)
        acc = self.evaluator.accuracy(x_exp, x_gen)
        reward = _softplus(self.evaluator.logits(x_gen))  # -log(1 - D)
        g = self.policy_gradient(gen, reward)
        if not all(np.all(np.isfinite(v)) for v in g.values()):
            raise TrainingError(f"non-finite policy gradient at update {self.n_updates}")
        self.p_opt.step(self.policy.params, g, ascend=True)

        if self.exact:
            c_gen = occupancy_exact(self.policy, self.ctx, self.origins, cfg.J)
        else:
            c_gen = occupancy_from_paths(gen, self.kg.n_entities, self.kg.n_relations, cfg.J)
        d1 = distance_statistic(self.c_expert, c_gen, cfg.eps)
        d2 = distance_energy(self.expert, gen, self.table) if any(p.length for p in gen) \
            else float("nan")
        ent = causal_entropy(c_gen) / cfg.J
        self.n_updates += 1
        self.history.rows.append((self.n_updates, d1, d2, acc, ent))
        return self.history.rows[-1]


def train_interpreter(kg, table, expert_paths, config=ImitationConfig(), layers=None):
    """Train a policy to imitate ``expert_paths``.

    Returns:
        ``(policy, evaluator, history)``.

    Raises:
        DeadEndError: if the median initial rollout is shorter than two steps.
    """
    tr = InterpreterTrainer(kg, table, expert_paths, config, layers)
    tr.check_dead_ends()
    for _ in range(config.updates):
        tr.step()
    return tr.policy, tr.evaluator, tr.history


# ---------------------------------------------------------------- toy task

def toy_mdp(seed=0, dim=8):
    """Eight entities on a ring, three relations jumping ``+1, +2, +3``.

    Every entity has all three actions and no dead ends. The expert at entity
    ``e`` always takes relation ``e % 3``, so each origin has one expert
    two-step path.

    Returns:
        ``(kg, table, expert_paths)``; the table holds seeded random unit
        entity vectors and relation vectors.
    """
    n, R = 8, 3
    triples = [(e, r, (e + r + 1) % n) for e in range(n) for r in range(R)]
    kg = KnowledgeGraph.from_triples(n, R, triples)
    rng = np.random.default_rng([seed, 31])
    ev = rng.normal(size=(n, dim))
    ev /= np.linalg.norm(ev, axis=1, keepdims=True)
    rv = rng.normal(size=(R, dim))
    rv /= np.linalg.norm(rv, axis=1, keepdims=True)
    table = EmbeddingTable(ev, rv)
    experts = []
    for o in range(n):
        e, steps = o, []
        for _ in range(2):
            r = e % R
            e = (e + r + 1) % n
            steps.append((r, e))
        experts.append(ReasoningPath(o, tuple(steps)))
    return kg, table, experts


def greedy_match_rate(policy, ctx, expert_paths, J):
    """Fraction of expert paths reproduced exactly by greedy rollouts from their origins."""
    origins = [p.origin for p in expert_paths]
    got = rollouts(policy, ctx, origins, J, 0, "greedy")
    return float(np.mean([g == p for g, p in zip(got, expert_paths)]))


def occupancy_gap(policy, ctx, expert_paths, J):
    """Total variation between the policy's exact occupancy and the expert's."""
    origins = [p.origin for p in expert_paths]
    c_pol = occupancy_exact(policy, ctx, origins, J)
    c_exp = occupancy_from_paths(expert_paths, ctx.n_entities, ctx.n_relations, J)
    return total_variation(c_pol, c_exp)
