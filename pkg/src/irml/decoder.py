"""Recover semantic symbols from received samples.

Three decoders share the entity codebook of an ``EmbeddingTable``:
nearest-codeword (hard), greedy path extension from a noisy head (soft) and
a recovery that blends received-signal distance with translation
consistency to already decoded neighbours.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .channel import ReceivedSignal
from .errors import ConfigError, DecodeError

MODES = ("hard", "soft")


@dataclass(frozen=True)
class DecoderConfig:
    mode: str = "hard"
    reasoning_assist: bool = False
    alpha: float = 0.5
    known_g: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")


def _entity_rows(received):
    """Received entity symbols as an ``(n, d)`` array."""
    if isinstance(received, ReceivedSignal):
        sym = received.symbols()
        return sym[received.entity_mask()]
    a = np.asarray(received, dtype=np.float64)
    return a[None, :] if a.ndim == 1 else a


def _scaled(received, table, g_hat):
    if g_hat == 0:
        raise DecodeError("estimated channel gain is zero")
    y = np.ascontiguousarray(_entity_rows(received) / g_hat, dtype=np.float64)
    if y.shape[1] != table.dim:
        raise DecodeError(f"symbol width {y.shape[1]} does not match table dim {table.dim}")
    return y


def hard_decode(received, table, g_hat=1.0, candidates=None):
    """Nearest entity codeword per symbol; ties go to the lowest id.

    Args:
        received: ``ReceivedSignal`` (its entity symbols are decoded) or an
            ``(n, d)`` array of symbols.
        candidates: optional ascending id array restricting the codebook.
    """
    y = _scaled(received, table, g_hat)
    ids, _ = _kernels.nearest_codewords(y, np.ascontiguousarray(table.entity_vecs), candidates)
    return ids


@dataclass(frozen=True)
class SoftDecodeResult:
    p_hat: np.ndarray
    relations: tuple
    entities: tuple
    truncated: bool

    @property
    def final_entity(self):
        return self.entities[-1]


def soft_decode_path(received_head, policy, table, J, g_hat=1.0):
    """Extend a noisy head vector by ``J`` greedy relation translations.

    ``policy(entity, t)`` returns the relation to take from ``entity`` at step
    ``t`` or ``None`` at a dead end. Each step acts from the entity nearest
    to the running path vector.

    Returns:
        SoftDecodeResult; ``truncated`` is set if a dead end was hit early.
    """
    if J < 0:
        raise ConfigError("J must be >= 0")
    if g_hat == 0:
        raise DecodeError("estimated channel gain is zero")
    p = np.asarray(received_head, dtype=np.float64).ravel() / g_hat
    codebook = np.ascontiguousarray(table.entity_vecs)
    rels, ents = [], []
    truncated = False
    for t in range(J):
        cur = int(_kernels.nearest_codewords(p[None, :], codebook)[0][0])
        ents.append(cur)
        r = policy(cur, t)
        if r is None:
            truncated = True
            break
        rels.append(int(r))
        p = p + table.relation_vecs[r]
    ents_final = int(_kernels.nearest_codewords(p[None, :], codebook)[0][0])
    ents.append(ents_final)
    return SoftDecodeResult(p, tuple(rels), tuple(ents), truncated)


def _relation_sets(kg):
    """Per entity: distinct outgoing and incoming relation ids."""
    out, inc = [], []
    for e in range(kg.n_entities):
        out.append(np.unique(kg.out_edges(e)[0]))
        inc.append(np.unique(kg.in_edges(e)[0]))
    return out, inc


class ReasoningRecovery:
    """Reasoning-assisted decoder bound to one graph and codebook.

    Scores candidate ``e`` for a symbol as
    ``alpha * ||y/g - e||^2 + (1 - alpha) * c(e)`` where ``c(e)`` is the
    smallest translation residual against any decoded path neighbour: a
    preceding neighbour ``n`` predicts ``n + r`` over its outgoing relations
    and a following neighbour predicts ``n - r`` over its incoming ones.
    Symbols are decoded in order of ``priority`` (lower first), then by
    ascending nearest-codeword distance.

    Args:
        policy: optional ``policy(entity, t) -> relation``; when given, a
            preceding neighbour proposes only the relation it would take.
    """

    def __init__(self, kg, table, alpha=0.5, policy: Callable | None = None):
        if not 0.0 <= alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
        self.kg = kg
        self.table = table
        self.alpha = float(alpha)
        self.policy = policy
        self.codebook = np.ascontiguousarray(table.entity_vecs, dtype=np.float64)
        self.all_rel = np.arange(table.n_relations)
        self._out, self._in = _relation_sets(kg)

    def _predictions(self, n, forward, t, known=None):
        R = self._out[n] if forward else self._in[n]
        if known is not None and known >= 0:
            R = np.array([known])
        elif forward and self.policy is not None:
            r = self.policy(n, t)
            R = np.array([r]) if r is not None else R
        if len(R) == 0:
            R = self.all_rel
        rv = self.table.relation_vecs[R]
        return self.codebook[n] + rv if forward else self.codebook[n] - rv

    def decode(self, received, g_hat=1.0, candidates=None, priority=None, relations=None):
        """Decode the entity symbols of one path-ordered message.

        Args:
            candidates: optional per-symbol ascending id arrays.
            priority: optional per-symbol integers; lower decodes first.
            relations: optional relation ids linking consecutive symbols,
                known to the receiver as side information (``-1`` = unknown).
        """
        y = _scaled(received, self.table, g_hat)
        n = len(y)
        cands = [None] * n if candidates is None else list(candidates)
        rows = [np.arange(len(self.codebook)) if c is None else np.asarray(c, dtype=np.int64)
                for c in cands]
        dist = [_kernels.sq_distances(y[i], self.codebook[rows[i]]) for i in range(n)]
        if self.alpha == 1.0:
            return np.array([rows[i][int(np.argmin(dist[i]))] for i in range(n)],
                            dtype=np.int64)
        conf = np.array([d.min() for d in dist])
        prio = np.zeros(n) if priority is None else np.asarray(priority, dtype=np.float64)
        order = np.lexsort((np.arange(n), conf, prio))
        decoded = np.full(n, -1, dtype=np.int64)
        for i in order:
            preds = []
            if i > 0 and decoded[i - 1] >= 0:
                known = None if relations is None else relations[i - 1]
                preds.append(self._predictions(decoded[i - 1], True, i - 1, known))
            if i + 1 < n and decoded[i + 1] >= 0:
                known = None if relations is None else relations[i]
                preds.append(self._predictions(decoded[i + 1], False, i, known))
            score = dist[i]
            if preds:
                P = np.concatenate(preds)
                C = self.codebook[rows[i]]
                # ||c - p||^2 for every candidate/prediction pair
                cons = ((C * C).sum(1)[:, None] - 2.0 * C @ P.T + (P * P).sum(1)[None, :])
                cons = np.maximum(cons.min(axis=1), 0.0)
                score = self.alpha * dist[i] + (1.0 - self.alpha) * cons
            decoded[i] = rows[i][int(np.argmin(score))]
        return decoded


def recover_with_reasoning(received, kg, table, policy=None, alpha=0.5, g_hat=1.0,
                           candidates=None, priority=None, relations=None):
    """Functional wrapper around ``ReasoningRecovery.decode``.

    With ``alpha == 1`` the result equals ``hard_decode`` exactly.
    """
    return ReasoningRecovery(kg, table, alpha, policy).decode(
        received, g_hat, candidates=candidates, priority=priority, relations=relations)


def layer_candidates(layer_of):
    """Ascending entity ids per layer (a per-layer codebook)."""
    layer_of = np.asarray(layer_of)
    return {int(l): np.flatnonzero(layer_of == l) for l in np.unique(layer_of)}


@dataclass(frozen=True)
class DecodeReport:
    decoded: np.ndarray
    per_layer: dict = field(default_factory=dict)  # layer -> (symbols, errors)
    symbols: int = 0
    errors: int = 0

    @property
    def ser(self):
        return self.errors / self.symbols if self.symbols else 0.0

    def layer_ser(self, layer):
        """Error fraction in ``layer``; NaN when the layer had no symbols."""
        s, e = self.per_layer[layer]
        return e / s if s else math.nan

    def rows(self, snr_db):
        out = [(snr_db, str(l), s, e, e / s if s else math.nan)
               for l, (s, e) in sorted(self.per_layer.items())]
        out.append((snr_db, "all", self.symbols, self.errors, self.ser))
        return out


def symbol_error_rate(decoded, truth, layers=None, all_layers=None):
    """Exact per-layer and overall symbol error fractions.

    ``all_layers`` lists layers to report even when no symbol falls in them.
    """
    decoded = np.asarray(decoded)
    truth = np.asarray(truth)
    if decoded.shape != truth.shape:
        raise ValueError(f"length mismatch: {decoded.shape} vs {truth.shape}")
    wrong = decoded != truth
    layers = np.zeros(len(truth), dtype=np.int64) if layers is None else np.asarray(layers)
    if layers.shape != truth.shape:
        raise ValueError("layers must give one entry per symbol")
    keys = np.union1d(np.unique(layers), [] if all_layers is None else all_layers)
    per = {int(l): (int((layers == l).sum()), int(wrong[layers == l].sum())) for l in keys}
    return DecodeReport(decoded, per, int(len(truth)), int(wrong.sum()))


def merge_reports(reports):
    per = {}
    for r in reports:
        for l, (s, e) in r.per_layer.items():
            s0, e0 = per.get(l, (0, 0))
            per[l] = (s0 + s, e0 + e)
    dec = np.concatenate([r.decoded for r in reports]) if reports else np.zeros(0, np.int64)
    return DecodeReport(dec, per, sum(r.symbols for r in reports), sum(r.errors for r in reports))


def write_report_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["snr_db", "layer", "symbols", "errors", "ser"])
        for snr, layer, s, e, ser in rows:
            w.writerow([format(float(snr), "g"), layer, s, e, format(ser, ".10g")])
