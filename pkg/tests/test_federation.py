import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from irml.codec import EmbeddingTable, init_table
from irml.errors import ConfigError, DataError, NumericalError
from irml.federation import (BoundParams, FederationConfig, LinkPolicy, QuadraticSuite,
                             auc_score, divergence_D, divergence_per_server, fedavg,
                             heterogeneity_rho, pair_features, quadratic_suite,
                             run_federated_classification, run_federated_reasoning,
                             run_quadratic_fedavg, server_weights, step_size,
                             suite_bound_params, theorem3_bound, train_cross_server_policy)
from irml.kg import KnowledgeGraph, Partition, PartitionSpec, partition, sample_expert_paths
from irml.reasoner import ImitationConfig, InterpreterTrainer, toy_mdp, train_interpreter
from irml.synthetic import planetoid_like

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- fedavg

def test_fedavg_examples():
    w = np.array([1.5, -2.0])
    assert np.array_equal(fedavg([w], [1.0]), w)
    assert np.array_equal(fedavg([w, w, w], [0.2, 0.3, 0.5]), w)
    assert fedavg([np.array(0.0), np.array(1.0)], [0.25, 0.75]) == 0.75


def test_fedavg_dicts():
    a = {"x": np.zeros(2), "y": np.ones((1, 2))}
    b = {"x": np.ones(2), "y": np.zeros((1, 2))}
    out = fedavg([a, b], [0.5, 0.5])
    assert out["x"].tolist() == [0.5, 0.5] and out["y"].tolist() == [[0.5, 0.5]]
    with pytest.raises(ValueError):
        fedavg([a, {"x": np.zeros(2)}], [0.5, 0.5])


def test_fedavg_errors():
    with pytest.raises(ValueError):
        fedavg([np.zeros(2), np.zeros(3)], [0.5, 0.5])
    with pytest.raises(ConfigError):
        fedavg([np.zeros(2), np.zeros(2)], [0.5, 0.6])
    with pytest.raises(ConfigError):
        fedavg([], [])


@given(st.integers(0, 2**31 - 1), st.floats(-10, 10))
def test_fedavg_affine(seed, a):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 6))
    models = [rng.normal(size=4) for _ in range(K)]
    g = server_weights(rng.integers(1, 50, size=K))
    assert abs(g.sum() - 1.0) <= 1e-12
    assert np.allclose(fedavg([a * m for m in models], g), a * fedavg(models, g), atol=1e-9)


def test_server_weights():
    assert server_weights([1, 3]).tolist() == [0.25, 0.75]
    with pytest.raises(ConfigError):
        server_weights([0, 0])


def test_federation_config_validation():
    for bad in (dict(K=0), dict(E=0), dict(E=5, T=4), dict(K=2, gamma=(0.5, 0.6))):
        with pytest.raises(ConfigError):
            FederationConfig(**bad)
    assert FederationConfig(K=2, E=3, T=10).rounds == 3


# ---------------------------------------------------------------- federated reasoning

def replicas(kg, K):
    """K servers each holding the whole graph."""
    allents = np.arange(kg.n_entities)
    return Partition(PartitionSpec(K), np.zeros(kg.n_entities, dtype=np.int64),
                     tuple(allents for _ in range(K)), tuple(kg for _ in range(K)))


def test_single_server_is_bitwise_identical():
    kg, table, experts = toy_mdp(3)
    part = partition(kg, PartitionSpec(1, 0.0, 3))
    imit = ImitationConfig(seed=3, updates=1)
    run = run_federated_reasoning(kg, part, table, experts, FederationConfig(1, 1, 60, 3), imit)
    ref_pol, _, ref_hist = train_interpreter(kg, table, experts, ImitationConfig(seed=3, updates=60))
    fed = run.trainers[0].policy.params
    assert all(np.array_equal(fed[k], ref_pol.params[k]) for k in fed)
    assert run.server_traces[0] == ref_hist.rows
    assert len(run.snapshots) == 60 and run.dropped_edges == 0


def test_symmetric_replicas_match_single_server():
    kg, table, experts = toy_mdp(1)
    T = 40
    imit = ImitationConfig(seed=1, updates=T)
    run = run_federated_reasoning(kg, replicas(kg, 3), table, experts,
                                  FederationConfig(3, 1, T, 1), imit, server_seeds=[1, 1, 1])
    tr = InterpreterTrainer(kg, table, experts, imit)
    for t in range(T):
        tr.step()
        snap = run.snapshots[t]
        for k, v in tr.policy.params.items():
            assert np.max(np.abs(snap[k] - v)) <= 1e-9


def test_aggregation_cadence():
    kg, table, experts = toy_mdp(0)
    run = run_federated_reasoning(kg, replicas(kg, 2), table, experts,
                                  FederationConfig(2, 3, 12, 0), ImitationConfig(seed=0))
    assert len(run.snapshots) == 4
    a, b = (tr.policy.params for tr in run.trainers)
    assert all(np.array_equal(a[k], b[k]) and np.array_equal(a[k], run.snapshots[-1][k]) for k in a)
    assert all(np.all(np.isfinite(r[1])) for rows in run.server_traces for r in rows)


def test_servers_diverge_between_aggregations():
    kg, table, experts = toy_mdp(0)
    run = run_federated_reasoning(kg, replicas(kg, 2), table, experts,
                                  FederationConfig(2, 3, 5, 0), ImitationConfig(seed=0))
    # T=5 ends two steps after the last aggregation, with distinct server seeds
    a, b = (tr.policy.params for tr in run.trainers)
    assert any(not np.array_equal(a[k], b[k]) for k in a)


def test_reasoning_deterministic(tmp_path):
    kg, table, experts = toy_mdp(2)
    args = (kg, replicas(kg, 2), table, experts, FederationConfig(2, 2, 10, 2),
            ImitationConfig(seed=2))
    r1 = run_federated_reasoning(*args, val_paths=experts)
    r2 = run_federated_reasoning(*args, val_paths=experts)
    assert r1.server_traces == r2.server_traces and r1.global_trace == r2.global_trace
    r1.write_csv(tmp_path / "s1.csv", tmp_path / "a1.csv", 2)
    r2.write_csv(tmp_path / "s2.csv", tmp_path / "a2.csv", 2)
    assert (tmp_path / "s1.csv").read_bytes() == (tmp_path / "s2.csv").read_bytes()
    assert (tmp_path / "a1.csv").read_text().splitlines()[0] == "round,aggregated_val_accuracy"
    assert (tmp_path / "s1.csv").read_text().splitlines()[0] == "round,server_id,local_loss,val_accuracy"


def test_empty_server_rejected():
    kg, table, experts = toy_mdp(0)
    part = Partition(PartitionSpec(2), np.zeros(8, dtype=np.int64),
                     (np.arange(8), np.zeros(0, dtype=np.int64)), (kg, kg.induced([])[0]))
    with pytest.raises(ConfigError):
        run_federated_reasoning(kg, part, table, experts, FederationConfig(2, 1, 2))


def test_server_without_paths_rejected():
    kg, table, experts = toy_mdp(0)
    with pytest.raises(ConfigError):
        run_federated_reasoning(kg, replicas(kg, 2), table, experts, FederationConfig(2, 1, 2),
                                server_paths=[experts, []])


def test_partition_size_mismatch():
    kg, table, experts = toy_mdp(0)
    with pytest.raises(ConfigError):
        run_federated_reasoning(kg, replicas(kg, 2), table, experts, FederationConfig(3, 1, 2))


def jump_graph(n=120, R=12):
    """Entity ``e`` reaches ``e + r + 1 (mod n)`` over relation ``r``."""
    triples = [(e, r, (e + r + 1) % n) for e in range(n) for r in range(R)]
    return KnowledgeGraph.from_triples(n, R, triples)


@pytest.mark.slow
def test_noniid_settings_differ_and_ordering_logged():
    kg = jump_graph()
    table = init_table(kg.n_entities, kg.n_relations, 8, 0)
    subjects = tuple(e // 20 for e in range(kg.n_entities))
    val = sample_expert_paths(kg, 200, 2, 99)
    finals = {}
    for p in (0.0, 1.0):
        part = partition(kg, PartitionSpec(6, p, 0, subjects))
        paths = [sample_expert_paths(sub, 40, 2, 10 + k) for k, sub in enumerate(part.subgraphs)]
        run = run_federated_reasoning(kg, part, table, None, FederationConfig(6, 1, 60, 0),
                                      ImitationConfig(seed=0), server_paths=paths, val_paths=val)
        finals[p] = np.array([a for _, a in run.global_trace])
    assert len(finals[0.0]) == len(finals[1.0]) == 60
    assert not np.array_equal(finals[0.0], finals[1.0])
    order = "p=0 ahead" if finals[0.0][-1] > finals[1.0][-1] else "p=1 ahead or tied"
    log.info("non-iid final step accuracy p=0 %.3f p=1 %.3f (%s)",
             finals[0.0][-1], finals[1.0][-1], order)


# ---------------------------------------------------------------- classification

@pytest.fixture(scope="module")
def cora_like():
    return planetoid_like("cora", seed=0, topic_weight=0.1)


@pytest.mark.slow
def test_single_server_classification_baseline(cora_like):
    acc = [run_federated_classification(cora_like, PartitionSpec(1, 0.0, s),
                                        FederationConfig(1, 1, 200, s), optimizer="sgd",
                                        lr=20).final_accuracy() for s in range(5)]
    assert np.mean(acc) >= 0.75


def test_classification_trace_shape(cora_like, tmp_path):
    run = run_federated_classification(cora_like, PartitionSpec(2, 0.0, 0),
                                       FederationConfig(2, 1, 5, 0), optimizer="sgd", lr=20)
    assert [r for r, _ in run.aggregate_rows] == [1, 2, 3, 4, 5]
    assert len(run.server_rows) == 10 and run.dropped_edges > 0
    run.write_csv(tmp_path / "s.csv", tmp_path / "a.csv")
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 11


def test_classification_needs_labels():
    kg = KnowledgeGraph.from_triples(3, 1, [(0, 0, 1)])
    with pytest.raises(DataError):
        run_federated_classification(kg, PartitionSpec(1), FederationConfig(1, 1, 1))


def test_classification_partition_mismatch(cora_like):
    with pytest.raises(ConfigError):
        run_federated_classification(cora_like, PartitionSpec(2), FederationConfig(3, 1, 1))


# ---------------------------------------------------------------- link policy

def test_link_trivial_without_dropped_edges():
    kg, table, _ = toy_mdp(0)
    pol = train_cross_server_policy(kg, partition(kg, PartitionSpec(1)), table)
    assert pol.trivial and math.isnan(pol.train_auc)
    assert pol.score(table, [0, 1], [2, 3]).tolist() == [0.0, 0.0]
    assert not pol.predict(table, 0, 1).any()


def link_toy(seed=0):
    rng = np.random.default_rng([seed, 2])
    base = rng.normal(size=(4, 6))
    base /= np.linalg.norm(base, axis=1, keepdims=True)
    ent = np.vstack([base, base + 0.05 * rng.normal(size=(4, 6))])
    table = EmbeddingTable(ent, np.zeros((1, 6)))
    kg = KnowledgeGraph.from_triples(8, 1, [(i, 0, i + 4) for i in range(4)])
    part = partition(kg, PartitionSpec(2, 0.0, seed, subjects=(0, 0, 0, 0, 1, 1, 1, 1)))
    return kg, table, part


def test_link_toy_auc():
    for seed in range(3):
        kg, table, part = link_toy(seed)
        assert sorted(map(len, part.servers)) == [4, 4]
        pol = train_cross_server_policy(kg, part, table, FederationConfig(2, 1, 200, seed))
        assert not pol.trivial and pol.train_auc >= 0.9
        assert len(pol.history) == 200


@given(st.integers(0, 7), st.integers(0, 7))
def test_link_scores_symmetric(u, v):
    kg, table, part = link_toy(0)
    pol = train_cross_server_policy(kg, part, table, FederationConfig(2, 1, 20, 0))
    assert pol.score(table, u, v)[0] == pol.score(table, v, u)[0]
    assert np.array_equal(pair_features(table, u, v), pair_features(table, v, u))


def test_auc_examples():
    assert auc_score([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0
    assert auc_score([0.1, 0.2, 0.9, 0.8], [1, 1, 0, 0]) == 0.0
    assert auc_score([0.5, 0.5], [1, 0]) == 0.5
    assert math.isnan(auc_score([0.3, 0.4], [1, 1]))


def test_auc_matches_pair_counting():
    rng = np.random.default_rng(0)
    s = rng.integers(0, 5, size=40).astype(float)
    y = rng.integers(0, 2, size=40).astype(bool)
    pos, neg = s[y], s[~y]
    ref = np.mean([(a > b) + 0.5 * (a == b) for a in pos for b in neg])
    assert auc_score(s, y) == pytest.approx(ref, abs=1e-12)


# ---------------------------------------------------------------- theory

def test_rho_examples():
    assert heterogeneity_rho(2.0, [2.0, 2.0], [0.5, 0.5]) == 0.0
    # F_1 = (w-1)^2/2, F_2 = (w+1)^2/2 with equal weights: w* = 0, F* = 1/2, F_k* = 0
    suite = QuadraticSuite(np.ones((2, 1, 1)), np.array([[1.0], [-1.0]]), np.array([0.5, 0.5]),
                           0.0, 1.0, 1.0)
    assert suite.optimum().tolist() == [0.0]
    assert suite.rho() == 0.5
    same = QuadraticSuite(np.ones((2, 1, 1)), np.array([[3.0], [3.0]]), np.array([0.5, 0.5]),
                          0.0, 1.0, 1.0)
    assert same.rho() == 0.0


@given(st.integers(0, 2**31 - 1))
def test_rho_nonnegative(seed):
    assert quadratic_suite(K=3, dim=3, seed=seed % 10_000).rho() >= 0.0


def test_divergence_examples():
    X = np.array([[1.0, 2.0], [3.0, -1.0]])
    A = np.array([[0.5, 0.5], [0.0, 1.0]])
    assert divergence_D(A, X, A, X, 1) == 0.0
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    # 2 * P^T P^T P P = 2 I against I: difference I, squared norm 2
    assert divergence_D(P, np.eye(2), np.eye(2), np.eye(2), 2) == 2.0
    # A A = [[1,2],[0,1]], (A A)^T (A A) = [[1,2],[2,5]], squared norm 34
    U = np.array([[1.0, 1.0], [0.0, 1.0]])
    assert abs(divergence_D(U, np.eye(2), np.zeros((2, 2)), np.eye(2), 1) - 34.0) <= 1e-12
    assert divergence_D(U, np.zeros((2, 3)), P, np.zeros((2, 3)), 4) == 0.0


def test_divergence_errors_and_mean():
    with pytest.raises(ValueError):
        divergence_D(np.eye(2), np.eye(3), np.eye(2), np.eye(2), 1)
    with pytest.raises(ValueError):
        divergence_D(np.ones((2, 3)), np.eye(3), np.eye(2), np.eye(2), 1)
    per, mean = divergence_per_server([(np.eye(2), np.eye(2)), (np.zeros((2, 2)), np.eye(2))],
                                      np.eye(2), np.eye(2), [0.5, 0.5])
    assert per.tolist() == [2.0, 2.0] and mean == 2.0


def test_bound_plug_in():
    p = BoundParams(mu=0.5, L=2.0, sigma_L=3.0, E=1)
    kappa, zeta = 4.0, 32.0
    for T in (1, 10, 1000):
        want = 2 * kappa / (zeta + T - 1) * (4 * 9.0 / 0.5)
        assert theorem3_bound(p, T) == pytest.approx(want, rel=1e-14)
    # E = 2 brings the (E-1)^2 term in: 4 * (1 + 2) * sigma^2
    p2 = BoundParams(mu=0.5, L=2.0, sigma_L=3.0, E=2)
    assert theorem3_bound(p2, 5) == pytest.approx(2 * kappa / (zeta + 4) * (12 * 9.0 / 0.5))


def test_bound_full_formula():
    p = BoundParams(mu=1.0, L=3.0, sigma_L=0.5, L_p=2.0, rho=0.1, N=10, D=4.0, w_dist=2.0, E=30)
    zeta = 30.0  # max(8 * 3, 30)
    omega = 4 * (1 + 2 * 29 ** 2) * 0.25 + 4 * 3 * 0.1 + 1 * zeta / 4 * 4
    want = 2 * 3 / (zeta + 9) * (omega + 2 * 2 * 4 / 10)
    assert theorem3_bound(p, 10) == pytest.approx(want, rel=1e-14)


def test_bound_decreasing_in_T():
    p = BoundParams(mu=1.0, L=5.0, sigma_L=1.0, rho=0.2, w_dist=1.0, E=4)
    b = [theorem3_bound(p, T) for T in range(1, 500)]
    assert all(x > y for x, y in zip(b, b[1:]))


def test_bound_params_validation():
    with pytest.raises(NumericalError):
        BoundParams(mu=0.0, L=1.0, sigma_L=1.0)
    with pytest.raises(ConfigError):
        BoundParams(mu=2.0, L=1.0, sigma_L=1.0)
    with pytest.raises(ConfigError):
        theorem3_bound(BoundParams(mu=1.0, L=1.0, sigma_L=1.0), 0)


@given(st.floats(0.01, 10), st.floats(1, 100), st.integers(1, 50))
def test_step_size_below_quarter_inverse_L(mu, ratio, E):
    p = BoundParams(mu=mu, L=mu * ratio, sigma_L=1.0, E=E)
    for t in (0, 1, 10, 1000):
        assert step_size(p, t) <= 1.0 / (4.0 * p.L) * (1 + 1e-12)


def test_bound_envelope_on_quadratics():
    for seed in range(5):
        suite = quadratic_suite(K=4, dim=5, seed=seed)
        w1 = np.random.default_rng([seed, 61]).normal(0.0, 2.0, size=5)
        for E in (1, 4):
            params, radius = suite_bound_params(suite, E, w1)
            run = run_quadratic_fedavg(suite, E, 2000, w1, params, seed=seed, log_every=40)
            assert run.max_grad_sq <= params.sigma_L ** 2
            for T, gap in zip(run.T, run.gap):
                assert gap <= theorem3_bound(params, T)
