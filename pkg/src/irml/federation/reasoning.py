"""Federated training of reasoning policies across edge servers.

Each server trains its own interpreter on the subgraph it hosts; every ``E``
local updates the coordinator averages the policy weights and broadcasts
them back. Evaluators never leave their server.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from ..codec import EmbeddingTable
from ..errors import ConfigError
from ..kg import ReasoningPath, dropped_edges
from ..optim import copy_params
from ..reasoner.imitation import ImitationConfig, InterpreterTrainer
from ..reasoner.policy import PolicyContext
from .aggregate import FederationConfig, fedavg, server_weights


@dataclass
class FederationRun:
    snapshots: list = field(default_factory=list)       # aggregated params per round
    server_traces: list = field(default_factory=list)   # per server: list of history rows
    global_trace: list = field(default_factory=list)    # (round, aggregated val accuracy)
    dropped_edges: int = 0
    gamma: np.ndarray | None = None

    def write_csv(self, server_path, aggregate_path, E):
        with open(server_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["round", "server_id", "local_loss", "val_accuracy"])
            for k, rows in enumerate(self.server_traces):
                for i in range(E - 1, len(rows), E):
                    _, d1, _, acc, _ = rows[i]  # distance-I and evaluator accuracy
                    w.writerow([(i + 1) // E, k, format(d1, ".10g"), format(acc, ".10g")])
        with open(aggregate_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["round", "aggregated_val_accuracy"])
            for r, v in self.global_trace:
                w.writerow([r, format(v, ".10g")])


def step_accuracy(policy, ctx, paths):
    """Fraction of path steps where the greedy relation matches the path's."""
    ents, rels = [], []
    for p in paths:
        for e, r in zip(p.entities[:-1], p.relations):
            ents.append(e)
            rels.append(r)
    if not ents:
        return float("nan")
    q = policy.probabilities(ctx, ents)
    return float(np.mean(np.argmax(q, axis=1) == np.asarray(rels)))


def localize_paths(paths, local_to_global):
    """Keep paths lying entirely on one server, rewritten to local ids."""
    g2l = {int(g): i for i, g in enumerate(local_to_global)}
    out = []
    for p in paths:
        if all(e in g2l for e in p.entities):
            out.append(ReasoningPath(g2l[p.origin], tuple((r, g2l[e]) for r, e in p.steps)))
    return out


def run_federated_reasoning(kg, part, table, expert_paths, config=FederationConfig(),
                            imitation=ImitationConfig(), layers=None, server_paths=None,
                            server_seeds=None, val_paths=None):
    """FedAvg over interpreter policies.

    Args:
        kg: the global graph; ``part`` partitions it.
        part: ``Partition`` of ``kg``.
        table: global embedding table; each server uses its hosted rows.
        expert_paths: global expert paths; each server keeps those it hosts
            entirely. Ignored when ``server_paths`` (local ids) is given.
        layers: optional global layer assignment.
        server_seeds: per-server imitation seeds (default ``seed + k``).
        val_paths: optional held-out global paths; the aggregated policy is
            scored on them by greedy next-relation accuracy every round.

    Raises:
        ConfigError: a server hosts no entity or no expert path.
    """
    K = config.K
    if part.K != K:
        raise ConfigError(f"partition has {part.K} servers, config has {K}")
    seeds = [imitation.seed + k for k in range(K)] if server_seeds is None else list(server_seeds)
    trainers = []
    for k in range(K):
        ents = part.servers[k]
        if not len(ents):
            raise ConfigError(f"server {k} hosts no entities")
        sub = part.subgraphs[k]
        local_table = EmbeddingTable(table.entity_vecs[ents], table.relation_vecs)
        paths = server_paths[k] if server_paths is not None else localize_paths(expert_paths, ents)
        if not paths:
            raise ConfigError(f"server {k} has no expert path")
        lay = None
        if layers is not None:
            lay = np.asarray(layers.layer_of if hasattr(layers, "layer_of") else layers)[ents]
        cfg = replace(imitation, seed=seeds[k], updates=config.T)
        trainers.append(InterpreterTrainer(sub, local_table, paths, cfg, lay))
    for tr in trainers:
        tr.check_dead_ends()
    # broadcast the initial global model
    init = copy_params(trainers[0].policy.params)
    for tr in trainers[1:]:
        if {k: v.shape for k, v in tr.policy.params.items()} != {k: v.shape for k, v in init.items()}:
            raise ConfigError("servers disagree on policy shapes (layer count or relations)")
        tr.policy.params = copy_params(init)
    gamma = np.asarray(config.gamma) if config.gamma is not None else \
        server_weights([len(s) for s in part.servers])

    run = FederationRun(gamma=gamma, server_traces=[[] for _ in range(K)],
                        dropped_edges=dropped_edges(kg, part)[0])
    ctx = PolicyContext.build(kg, table, layers, imitation.mask_upward) \
        if val_paths is not None else None
    for t in range(1, config.T + 1):
        for k, tr in enumerate(trainers):
            run.server_traces[k].append(tr.step())
        if t % config.E == 0:
            avg = fedavg([tr.policy.params for tr in trainers], gamma)
            for tr in trainers:
                tr.policy.params = copy_params(avg)
            run.snapshots.append(copy_params(avg))
            if ctx is not None:
                probe = trainers[0].policy.copy()
                probe.params = copy_params(avg)
                run.global_trace.append((t // config.E, step_accuracy(probe, ctx, val_paths)))
    run.trainers = trainers
    return run
