import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from irml.channel import ChannelModel, transmit
from irml.codec import CodecConfig, EmbeddingTable, encode, init_table, train_encoder
from irml.decoder import (DecoderConfig, ReasoningRecovery, hard_decode, layer_candidates,
                          merge_reports, recover_with_reasoning, soft_decode_path,
                          symbol_error_rate, write_report_csv)
from irml.errors import ConfigError, DecodeError
from irml.kg import KnowledgeGraph, ReasoningPath
from irml.reasoner import ImitationConfig, PolicyContext, train_interpreter
from irml.synthetic import chain_kg, cube_kg


def brute_argmin(y, codebook):
    """Reference nearest codeword with an explicit Python loop; lowest id wins ties."""
    best, best_d = -1, math.inf
    for i, c in enumerate(codebook):
        d = sum((float(a) - float(b)) ** 2 for a, b in zip(y, c))
        if d < best_d:
            best, best_d = i, d
    return best


# ---------------------------------------------------------------- hard decode

def test_hard_noiseless_recovers_ids():
    tab = init_table(30, 2, 6, 0)
    ids = np.array([3, 17, 0, 29, 5])
    rx = transmit(encode(ids, tab), ChannelModel(snr_db=math.inf))
    assert np.array_equal(hard_decode(rx, tab), ids)


@given(st.integers(0, 2**31 - 1))
def test_hard_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    tab = EmbeddingTable(rng.normal(size=(10, 3)), np.zeros((1, 3)))
    y = rng.normal(size=(5, 3))
    got = hard_decode(y, tab)
    assert got.tolist() == [brute_argmin(v, tab.entity_vecs) for v in y]


def test_hard_midpoint_tie_goes_low():
    tab = EmbeddingTable(np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 5.0]]), np.zeros((1, 2)))
    assert hard_decode(np.array([[0.0, 0.0]]), tab).tolist() == [0]
    tab2 = EmbeddingTable(tab.entity_vecs[[1, 0, 2]], np.zeros((1, 2)))
    assert hard_decode(np.array([[0.0, 0.0]]), tab2).tolist() == [0]


def test_hard_gain_scaling():
    tab = init_table(8, 1, 4, 2)
    rx = transmit(encode([1, 6], tab), ChannelModel(fading="fixed", g=0.3, snr_db=math.inf))
    assert hard_decode(rx, tab, g_hat=0.3).tolist() == [1, 6]


def test_hard_errors():
    tab = init_table(4, 1, 3, 0)
    with pytest.raises(DecodeError):
        hard_decode(np.zeros((1, 3)), tab, g_hat=0.0)
    with pytest.raises(DecodeError):
        hard_decode(np.zeros((1, 5)), tab)


def test_hard_candidates_restrict_codebook():
    tab = EmbeddingTable(np.array([[0.0], [1.0], [2.0], [3.0]]), np.zeros((1, 1)))
    assert hard_decode(np.array([[0.9]]), tab, candidates=np.array([2, 3])).tolist() == [2]


def test_decoder_config_validation():
    with pytest.raises(ConfigError):
        DecoderConfig(alpha=1.5)
    with pytest.raises(ConfigError):
        DecoderConfig(mode="fuzzy")


# ---------------------------------------------------------------- soft decode

def test_soft_zero_steps_is_identity():
    tab = init_table(5, 2, 4, 0)
    head = np.array([0.1, -0.4, 2.0, 0.3])
    res = soft_decode_path(head, lambda e, t: 0, tab, 0)
    assert np.array_equal(res.p_hat, head) and res.relations == () and not res.truncated


def test_soft_two_steps_chain_hand_sum():
    kg = chain_kg(4, [0, 1, 0])
    ent = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [2.0, 1.0]])
    rel = np.array([[1.0, 0.0], [0.0, 1.0]])
    tab = EmbeddingTable(ent, rel)
    head = np.array([0.05, -0.02])

    def policy(e, t):
        r = kg.out_edges(e)[0]
        return int(r[0]) if len(r) else None

    res = soft_decode_path(head, policy, tab, 2)
    assert np.allclose(res.p_hat, head + rel[0] + rel[1], atol=0, rtol=0)
    assert res.relations == (0, 1) and res.entities == (0, 1, 2) and res.final_entity == 2


def test_soft_truncates_at_dead_end():
    kg = chain_kg(3)
    ent = np.array([[0.0], [1.0], [2.0]])
    tab = EmbeddingTable(ent, np.array([[1.0]]))

    def policy(e, t):
        r = kg.out_edges(e)[0]
        return int(r[0]) if len(r) else None

    res = soft_decode_path(np.array([0.0]), policy, tab, 5)
    assert res.truncated and res.relations == (0, 0) and res.final_entity == 2


def test_soft_errors():
    tab = init_table(3, 1, 2, 0)
    with pytest.raises(ConfigError):
        soft_decode_path(np.zeros(2), lambda e, t: 0, tab, -1)
    with pytest.raises(DecodeError):
        soft_decode_path(np.zeros(2), lambda e, t: 0, tab, 1, g_hat=0.0)


def lowest_relation_experts(kg, J=2):
    paths = []
    for o in range(kg.n_entities):
        e, steps = o, []
        for _ in range(J):
            r, t = kg.out_edges(e)
            if len(r) == 0:
                break
            k = int(np.argmin(r))
            steps.append((int(r[k]), int(t[k])))
            e = int(t[k])
        if len(steps) == J:
            paths.append(ReasoningPath(o, tuple(steps)))
    return paths


@pytest.mark.slow
def test_soft_decode_after_interpreter_training():
    kg = cube_kg()
    tab, _ = train_encoder(kg, CodecConfig(dim=16, epochs=200, lr=0.01, batch_size=8, seed=0))
    experts = lowest_relation_experts(kg)
    policy, _, _ = train_interpreter(kg, tab, experts, ImitationConfig(seed=0, updates=2000))
    ctx = PolicyContext.build(kg, tab)

    def greedy(e, t):
        if not ctx.avail[e].any():
            return None
        rels, p = policy.distribution(ctx, e, t)
        return int(rels[int(np.argmax(p))])

    hits = [soft_decode_path(tab.entity_vecs[p.origin], greedy, tab, 2).final_entity
            == p.entities[-1] for p in experts]
    assert np.mean(hits) >= 0.9


# ---------------------------------------------------------------- recovery

@given(st.integers(0, 2**31 - 1))
def test_alpha_one_equals_hard(seed):
    kg = cube_kg()
    rng = np.random.default_rng(seed)
    tab = init_table(kg.n_entities, kg.n_relations, 4, seed % 1000)
    ids = rng.integers(kg.n_entities, size=6)
    rx = transmit(encode(ids, tab), ChannelModel(snr_db=0.0, seed=seed))
    assert np.array_equal(recover_with_reasoning(rx, kg, tab, alpha=1.0), hard_decode(rx, tab))


def test_alpha_zero_translation_recovers_target():
    # 0 -r0-> 1; 2 is a decoy that sits right on the corrupted symbol
    kg = KnowledgeGraph.from_triples(3, 1, [(0, 0, 1)])
    ent = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 3.0]])
    tab = EmbeddingTable(ent, np.array([[1.0, 0.0]]))
    y = np.array([[0.0, 0.0], [0.0, 3.0]])  # head clean, tail corrupted onto the decoy
    assert hard_decode(y, tab).tolist() == [0, 2]
    rec = ReasoningRecovery(kg, tab, alpha=0.0)
    assert rec.decode(y).tolist() == [0, 1]
    # exhaustive score check: the true tail is the unique zero-residual candidate
    cons = ((ent[0] + tab.relation_vecs[0] - ent) ** 2).sum(1)
    assert int(np.argmin(cons)) == 1 and np.sum(cons == cons.min()) == 1


def test_known_relation_side_information():
    # two relations out of 0; only the known one points at the true tail
    kg = KnowledgeGraph.from_triples(3, 2, [(0, 0, 1), (0, 1, 2)])
    ent = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    tab = EmbeddingTable(ent, np.array([[1.0, 0.0], [0.0, 1.0]]))
    y = np.array([[0.0, 0.0], [0.5, 0.5]])
    rec = ReasoningRecovery(kg, tab, alpha=0.5)
    assert rec.decode(y, relations=[1]).tolist() == [0, 2]
    assert rec.decode(y, relations=[0]).tolist() == [0, 1]


def test_layer_candidates():
    c = layer_candidates([2, 1, 2, 3, 1])
    assert {k: v.tolist() for k, v in c.items()} == {1: [1, 4], 2: [0, 2], 3: [3]}


# ---------------------------------------------------------------- SER

def test_ser_identical_and_all_wrong():
    t = np.arange(10)
    assert symbol_error_rate(t, t, t % 3).ser == 0.0
    r = symbol_error_rate(t + 1, t, t % 3)
    assert r.ser == 1.0 and all(r.layer_ser(l) == 1.0 for l in range(3))


def test_ser_hand_count():
    truth = np.arange(10)
    dec = truth.copy()
    dec[[1, 6, 8]] = 99
    layers = np.array([1, 1, 1, 1, 1, 2, 2, 2, 2, 2])
    r = symbol_error_rate(dec, truth, layers)
    assert r.errors == 3 and r.ser == 0.3
    assert r.per_layer == {1: (5, 1), 2: (5, 2)}
    assert r.layer_ser(1) == 0.2 and r.layer_ser(2) == 0.4


def test_ser_length_mismatch():
    with pytest.raises(ValueError):
        symbol_error_rate([1, 2], [1, 2, 3])


@given(st.lists(st.integers(0, 4), min_size=1, max_size=40), st.integers(0, 1000))
def test_ser_invariants(truth, seed):
    truth = np.array(truth)
    dec = np.random.default_rng(seed).integers(0, 5, size=len(truth))
    r = symbol_error_rate(dec, truth, truth % 2)
    assert 0 <= r.errors <= r.symbols
    assert r.ser == r.errors / r.symbols


def test_merge_and_csv(tmp_path):
    a = symbol_error_rate([0, 1], [0, 0], [1, 2])
    b = symbol_error_rate([1, 1], [0, 1], [1, 2])
    m = merge_reports([a, b])
    assert m.per_layer == {1: (2, 1), 2: (2, 1)} and m.ser == 0.5
    p = tmp_path / "ser.csv"
    write_report_csv(p, m.rows(4.0))
    assert p.read_text().splitlines() == ["snr_db,layer,symbols,errors,ser", "4,1,2,1,0.5",
                                          "4,2,2,1,0.5", "4,all,4,2,0.5"]


def test_ser_monotone_in_snr():
    """Mean SER over 5 seeds with 10^4 symbols per point."""
    grid = [0, 2, 4, 6, 8]
    means = []
    for snr in grid:
        sers = []
        for seed in range(5):
            rng = np.random.default_rng([seed, 3])
            tab = EmbeddingTable(rng.normal(size=(64, 8)) / math.sqrt(8), np.zeros((1, 8)))
            ids = rng.integers(64, size=10_000)
            rx = transmit(encode(ids, tab), ChannelModel(snr_db=snr, seed=seed))
            sers.append(symbol_error_rate(hard_decode(rx, tab), ids).ser)
        means.append(np.mean(sers))
    rises = [b - a for a, b in zip(means, means[1:]) if b > a]
    assert len(rises) <= 1 and all(d <= 0.002 for d in rises)
    assert means[0] > means[-1]


def test_ser_reports_empty_layers():
    r = symbol_error_rate([0, 1], [0, 0], [2, 2], all_layers=[1, 2, 3])
    assert r.per_layer == {1: (0, 0), 2: (2, 1), 3: (0, 0)}
    assert math.isnan(r.layer_ser(1)) and r.layer_ser(2) == 0.5
    assert len(r.rows(0.0)) == 4
