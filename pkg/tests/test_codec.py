import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from irml.codec import (CodecConfig, EmbeddingTable, TripleBatch, corrupt, encode, init_table,
                        loss_gradient, margin_loss, read_embeddings_csv, tail_ranks,
                        train_encoder, translation_residual, write_embeddings_csv)
from irml.errors import ConfigError, MissingIdError, TrainingError
from irml.kg import ExplicitSemantics, KnowledgeGraph, ReasoningPath
from irml.synthetic import cube_kg, fb_like

TOY = CodecConfig(dim=16, epochs=200, lr=0.01, batch_size=8)


def table2(ent, rel):
    return EmbeddingTable(np.asarray(ent, float), np.asarray(rel, float))


def batch(pos, neg):
    return TripleBatch(np.asarray(pos), np.asarray(neg))


# ---------------------------------------------------------------- margin loss

def test_loss_zero_when_hinge_inactive():
    tab = table2([[0, 0], [1, 0], [5, 5]], [[1, 0]])
    # positive residual 0, negative residual |(0,0)+(1,0)-(5,5)|^2 = 41 > margin
    assert margin_loss(batch([[0, 0, 1]], [[0, 0, 2]]), tab, 1.0) == 0.0


def test_loss_hand_arithmetic_boundary():
    # e=(0,0), r=(1,0), e'=(1,0); negative tail (0,0): residual 1 -> max(0, 1 + 0 - 1) = 0
    tab = table2([[0, 0], [1, 0]], [[1, 0]])
    assert margin_loss(batch([[0, 0, 1]], [[0, 0, 0]]), tab, 1.0) == 0.0


def test_loss_hand_arithmetic_active():
    # negative tail (1,0): residual 0 -> loss = 1
    tab = table2([[0, 0], [1, 0], [1, 0]], [[1, 0]])
    assert margin_loss(batch([[0, 0, 1]], [[0, 0, 2]]), tab, 1.0) == 1.0


def test_gradient_zero_when_inactive():
    tab = table2([[0, 0], [1, 0], [5, 5]], [[1, 0]])
    loss, ge, gr = loss_gradient(batch([[0, 0, 1]], [[0, 0, 2]]), tab)
    assert loss == 0.0 and not ge.any() and not gr.any()


def test_gradient_shared_head_hand():
    rng = np.random.default_rng(0)
    ent = rng.normal(size=(3, 4)) * 0.1
    rel = rng.normal(size=(1, 4)) * 0.1
    tab = table2(ent, rel)
    _, ge, _ = loss_gradient(batch([[0, 0, 1]], [[0, 0, 2]]), tab)
    a = ent[0] + rel[0] - ent[1]
    b = ent[0] + rel[0] - ent[2]
    assert np.allclose(ge[0], 2 * a - 2 * b, atol=1e-12)


def fd_check(tab, b, margin=1.0, h=1e-6):
    """Central differences of the margin loss against the analytic gradient."""
    _, ge, gr = loss_gradient(b, tab, margin)
    worst = 0.0
    for arr, g in ((tab.entity_vecs, ge), (tab.relation_vecs, gr)):
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = margin_loss(b, tab, margin)
            arr[idx] = old - h
            dn = margin_loss(b, tab, margin)
            arr[idx] = old
            fd = (up - dn) / (2 * h)
            worst = max(worst, abs(fd - g[idx]) / max(1.0, abs(fd), abs(g[idx])))
    return worst


@given(st.integers(0, 2**31 - 1))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n, R = 6, 2
    tab = table2(rng.normal(size=(n, 4)), rng.normal(size=(R, 4)))
    pos = np.stack([rng.integers(n, size=8), rng.integers(R, size=8), rng.integers(n, size=8)], 1)
    neg = pos.copy()
    neg[:, 2] = rng.integers(n, size=8)
    b = batch(pos, neg)
    # keep away from hinge kinks where the subgradient is not a derivative
    _, _, _ = loss_gradient(b, tab)
    e, r = tab.entity_vecs, tab.relation_vecs
    s = 1.0 + ((e[pos[:, 0]] + r[pos[:, 1]] - e[pos[:, 2]]) ** 2).sum(1) \
        - ((e[neg[:, 0]] + r[neg[:, 1]] - e[neg[:, 2]]) ** 2).sum(1)
    if np.min(np.abs(s)) < 1e-3:
        return
    assert fd_check(tab, b) < 1e-4


@given(st.integers(0, 2**31 - 1))
def test_loss_nonnegative(seed):
    rng = np.random.default_rng(seed)
    tab = table2(rng.normal(size=(5, 3)), rng.normal(size=(2, 3)))
    pos = np.stack([rng.integers(5, size=4), rng.integers(2, size=4), rng.integers(5, size=4)], 1)
    neg = np.stack([rng.integers(5, size=4), rng.integers(2, size=4), rng.integers(5, size=4)], 1)
    assert margin_loss(batch(pos, neg), tab, float(rng.uniform(0.1, 3))) >= 0.0


def test_missing_id_raises():
    tab = table2([[0, 0]], [[1, 0]])
    with pytest.raises(MissingIdError):
        margin_loss(batch([[0, 0, 3]], [[0, 0, 0]]), tab)


def test_config_validation():
    with pytest.raises(ConfigError):
        CodecConfig(margin=0)
    with pytest.raises(ConfigError):
        CodecConfig(dim=1)
    with pytest.raises(ConfigError):
        CodecConfig(negatives=0)


# ---------------------------------------------------------------- training

def test_negatives_are_not_graph_triples():
    kg = fb_like(seed=0)
    rng = np.random.default_rng(0)
    neg = corrupt(kg, kg.triples[:500], rng)
    assert not kg.contains(neg).any()
    # exactly one side changed
    same_h = neg[:, 0] == kg.triples[:500, 0]
    same_t = neg[:, 2] == kg.triples[:500, 2]
    assert np.all(same_h | same_t)


@pytest.mark.parametrize("seed", range(5))
def test_toy_loss_drops_tenfold(seed):
    _, hist = train_encoder(cube_kg(), CodecConfig(**{**TOY.__dict__, "seed": seed}))
    assert hist[-1] < 0.1 * hist[0]


def test_toy_top1_retrieval():
    kg = cube_kg()
    hits = []
    for seed in range(5):
        tab, _ = train_encoder(kg, CodecConfig(**{**TOY.__dict__, "seed": seed}))
        hits.append(float((tail_ranks(kg, tab) == 1).mean()))
    assert np.mean(hits) >= 0.9


def test_top1_oracle_agrees_with_brute_force():
    kg = cube_kg()
    tab, _ = train_encoder(kg, TOY)
    ranks = tail_ranks(kg, tab)
    for (h, r, t), rk in zip(kg.triples, ranks):
        d = [float(((tab.entity_vecs[h] + tab.relation_vecs[r] - tab.entity_vecs[e]) ** 2).sum())
             for e in range(kg.n_entities)]
        assert (int(np.argmin(d)) == t) == (rk == 1)


def test_zero_epochs_returns_init():
    kg = cube_kg()
    tab, hist = train_encoder(kg, CodecConfig(dim=8, epochs=0, seed=3))
    ref = init_table(kg.n_entities, kg.n_relations, 8, 3)
    assert np.array_equal(tab.entity_vecs, ref.entity_vecs)
    assert np.array_equal(tab.relation_vecs, ref.relation_vecs)
    assert len(hist) == 0


def test_init_range():
    tab = init_table(50, 4, 9, 0)
    assert np.abs(tab.entity_vecs).max() <= 6 / 3


@pytest.mark.parametrize("seed", range(5))
def test_translation_strengthens(seed):
    kg = cube_kg()
    cfg = CodecConfig(**{**TOY.__dict__, "seed": seed})
    before = translation_residual(kg, init_table(kg.n_entities, kg.n_relations, cfg.dim, seed))
    tab, _ = train_encoder(kg, cfg)
    assert translation_residual(kg, tab) < before


def test_trained_invariants():
    kg = cube_kg()
    tab, _ = train_encoder(kg, TOY)
    assert np.allclose(np.linalg.norm(tab.entity_vecs, axis=1), 1.0)
    assert np.all(np.isfinite(tab.relation_vecs))
    d = np.sqrt(((tab.entity_vecs[:, None] - tab.entity_vecs[None]) ** 2).sum(-1))
    assert d[~np.eye(len(d), dtype=bool)].min() > 1e-6


def test_empty_graph_training():
    kg = KnowledgeGraph.from_triples(3, 1, np.zeros((0, 3)))
    with pytest.raises(TrainingError):
        train_encoder(kg, TOY)


def test_training_deterministic():
    kg = cube_kg()
    a, ha = train_encoder(kg, TOY)
    b, hb = train_encoder(kg, TOY)
    assert np.array_equal(a.entity_vecs, b.entity_vecs) and np.array_equal(ha, hb)


# ---------------------------------------------------------------- encoding

def test_encode_single_entity():
    tab = table2([[0.3, -0.2], [1, 1]], [[0, 1]])
    sig = encode([0], tab)
    assert sig.samples.tolist() == [0.3, -0.2]


def test_encode_path_order():
    tab = table2([[1, 2], [3, 4]], [[5, 6]])
    sig = encode(ReasoningPath(0, ((0, 1),)), tab)
    assert sig.samples.tolist() == [1, 2, 5, 6, 3, 4]
    assert sig.kinds == ("entity", "relation", "entity")
    assert sig.offsets.tolist() == [0, 2, 4, 6]


def test_encode_explicit_semantics():
    tab = table2([[1, 2], [3, 4]], [[5, 6]])
    sig = encode(ExplicitSemantics((1, 0), (0,)), tab)
    assert sig.samples.tolist() == [3, 4, 1, 2, 5, 6]


def test_encode_seventeen_entities():
    tab = init_table(30, 2, 2, 0)
    sig = encode(np.arange(17), tab)
    assert sig.samples.size == 34 and sig.n_symbols == 17


def test_encode_missing_id():
    tab = table2([[1, 2]], [[5, 6]])
    with pytest.raises(MissingIdError):
        encode([4], tab)


def test_embedding_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    tab = table2(rng.normal(size=(7, 5)), rng.normal(size=(3, 5)))
    p = tmp_path / "emb.csv"
    write_embeddings_csv(tab, p)
    back = read_embeddings_csv(p)
    assert np.array_equal(back.entity_vecs, tab.entity_vecs)
    assert np.array_equal(back.relation_vecs, tab.relation_vecs)
