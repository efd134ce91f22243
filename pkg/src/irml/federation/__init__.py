"""Multi-server training: weighted averaging, federated interpreters and GCNs,
cross-server link policies and the local-SGD convergence envelope."""
from .aggregate import FederationConfig, fedavg, server_weights
from .gcn import GCN, ClassificationRun, run_federated_classification
from .link import LinkPolicy, auc_score, pair_features, train_cross_server_policy
from .reasoning import FederationRun, localize_paths, run_federated_reasoning, step_accuracy
from .theory import (
    BoundParams,
    QuadraticSuite,
    divergence_D,
    divergence_per_server,
    heterogeneity_rho,
    quadratic_suite,
    run_quadratic_fedavg,
    step_size,
    suite_bound_params,
    theorem3_bound,
)
