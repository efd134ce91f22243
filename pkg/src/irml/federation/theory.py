"""Convergence envelope of federated local SGD and a quadratic test suite.

The suite has ``K`` local objectives ``F_k(w) = 1/2 (w - c_k)^T A_k (w - c_k)``
with spectra in ``[mu, L]``. Their optima are known in closed form, so the
heterogeneity ``rho`` and the optimality gap are exact.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, NumericalError
from .aggregate import fedavg


@dataclass(frozen=True)
class BoundParams:
    mu: float
    L: float
    sigma_L: float
    L_p: float = 0.0
    rho: float = 0.0
    N: int = 1
    D: float = 0.0
    w_dist: float = 0.0
    E: int = 1

    def __post_init__(self):
        if not self.mu > 0:
            raise NumericalError(f"mu must be > 0, got {self.mu}")
        if self.L < self.mu:
            raise ConfigError(f"need L >= mu, got L={self.L}, mu={self.mu}")
        for name in ("sigma_L", "L_p", "rho", "D", "w_dist"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.N < 1 or self.E < 1:
            raise ConfigError("N and E must be >= 1")

    @property
    def kappa(self):
        return self.L / self.mu

    @property
    def zeta(self):
        return max(8.0 * self.kappa, float(self.E))

    @property
    def omega(self):
        return (4.0 * (1.0 + 2.0 * (self.E - 1) ** 2) * self.sigma_L ** 2
                + 4.0 * self.L * self.rho
                + self.mu ** 2 * self.zeta / 4.0 * self.w_dist ** 2)


def theorem3_bound(params, T):
    """``(2 kappa / (zeta + T - 1)) * (Omega / mu + 2 L_p D / (mu N))``."""
    if T < 1:
        raise ConfigError("T must be >= 1")
    p = params
    return (2.0 * p.kappa / (p.zeta + T - 1.0)) * (
        p.omega / p.mu + 2.0 * p.L_p * p.D / (p.mu * p.N))


def step_size(params, t):
    """``eta_t = 2 / (mu (zeta + t))``, at most ``1 / (4 L)`` for ``t >= 0``."""
    return 2.0 / (params.mu * (params.zeta + t))


def heterogeneity_rho(F_star, F_k_star, gamma):
    """``F* - sum_k gamma_k F_k*``."""
    return float(F_star - np.dot(np.asarray(gamma, float), np.asarray(F_k_star, float)))


def _propagate(A, X):
    return X.T @ A.T @ A.T @ A @ A @ X


def divergence_D(A_k, X_k, A, X, K):
    """``|| K X_k^T A_k^T A_k^T A_k A_k X_k - X^T A^T A^T A A X ||_F^2``."""
    A_k, X_k, A, X = (np.asarray(m, dtype=np.float64) for m in (A_k, X_k, A, X))
    if A_k.shape[0] != A_k.shape[1] or A.shape[0] != A.shape[1]:
        raise ValueError("adjacency matrices must be square")
    if A_k.shape[1] != X_k.shape[0] or A.shape[1] != X.shape[0]:
        raise ValueError("adjacency and feature matrices are not conformable")
    if X_k.shape[1] != X.shape[1]:
        raise ValueError("local and global feature widths differ")
    diff = K * _propagate(A_k, X_k) - _propagate(A, X)
    return float(np.sum(diff * diff))


def divergence_per_server(locals_, A, X, gamma):
    """Per-server divergences and their gamma-weighted mean."""
    K = len(locals_)
    per = np.array([divergence_D(a, x, A, X, K) for a, x in locals_])
    return per, float(np.dot(np.asarray(gamma, float), per))


# ---------------------------------------------------------------- quadratic suite

@dataclass(frozen=True, eq=False)
class QuadraticSuite:
    A: np.ndarray        # (K, d, d)
    c: np.ndarray        # (K, d)
    gamma: np.ndarray
    noise: float
    mu: float
    L: float

    @property
    def K(self):
        return len(self.gamma)

    @property
    def dim(self):
        return self.c.shape[1]

    def local_loss(self, k, w):
        d = w - self.c[k]
        return 0.5 * float(d @ self.A[k] @ d)

    def loss(self, w):
        return float(sum(g * self.local_loss(k, w) for k, g in enumerate(self.gamma)))

    def optimum(self):
        H = np.einsum("k,kij->ij", self.gamma, self.A)
        b = np.einsum("k,kij,kj->i", self.gamma, self.A, self.c)
        return np.linalg.solve(H, b)

    def rho(self):
        """Closed form: every local optimum is zero, so ``rho = F*``."""
        return heterogeneity_rho(self.loss(self.optimum()), np.zeros(self.K), self.gamma)

    def grad(self, k, w, rng):
        g = self.A[k] @ (w - self.c[k])
        if self.noise:
            g = g + rng.normal(0.0, self.noise, size=g.shape)
        return g


def quadratic_suite(K=4, dim=5, mu=1.0, L=4.0, spread=1.0, noise=0.5, seed=0):
    """Random local quadratics with eigenvalues in ``[mu, L]`` and scattered minima."""
    if not 0 < mu <= L:
        raise ConfigError("need 0 < mu <= L")
    rng = np.random.default_rng([seed, 41])
    A = np.empty((K, dim, dim))
    for k in range(K):
        q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        ev = rng.uniform(mu, L, size=dim)
        ev[0], ev[-1] = mu, L
        A[k] = (q * ev) @ q.T
    c = rng.normal(0.0, spread, size=(K, dim))
    gamma = np.full(K, 1.0 / K)
    return QuadraticSuite(A, c, gamma, float(noise), float(mu), float(L))


@dataclass
class QuadraticRun:
    T: list = field(default_factory=list)
    gap: list = field(default_factory=list)
    max_grad_sq: float = 0.0


def run_quadratic_fedavg(suite, E, T, w1, params, seed=0, log_every=None):
    """Federated local SGD with the decaying step size; logs ``F(w_bar) - F*``.

    The step counter ``t`` runs over local steps; aggregation happens after
    every ``E`` steps and logging only at aggregation points.
    """
    rng = np.random.default_rng([seed, 43])
    K = suite.K
    f_star = suite.loss(suite.optimum())
    w = [np.array(w1, dtype=np.float64) for _ in range(K)]
    run = QuadraticRun()
    every = E if log_every is None else log_every
    for t in range(T):
        eta = step_size(params, t)
        for k in range(K):
            g = suite.grad(k, w[k], rng)
            run.max_grad_sq = max(run.max_grad_sq, float(g @ g))
            w[k] = w[k] - eta * g
        if (t + 1) % E == 0:
            avg = fedavg(w, suite.gamma)
            w = [avg.copy() for _ in range(K)]
            if (t + 1) % every == 0:
                run.T.append(t + 1)
                run.gap.append(suite.loss(avg) - f_star)
    return run


def suite_bound_params(suite, E, w1, radius=None):
    """Bound constants for the suite.

    ``sigma_L^2`` bounds the expected squared stochastic gradient norm over a
    ball of radius ``radius`` around the origin, which must contain the
    iterates (``run_quadratic_fedavg`` reports the largest norm it saw).
    """
    w_star = suite.optimum()
    if radius is None:
        radius = 2.0 * max(np.abs(suite.c).max() * np.sqrt(suite.dim),
                           float(np.linalg.norm(w1)), 1.0)
    c_max = float(np.linalg.norm(suite.c, axis=1).max())
    sigma_sq = (suite.L * (radius + c_max)) ** 2 + suite.noise ** 2 * suite.dim
    return BoundParams(mu=suite.mu, L=suite.L, sigma_L=float(np.sqrt(sigma_sq)),
                       rho=suite.rho(), N=1, D=0.0,
                       w_dist=float(np.linalg.norm(np.asarray(w1) - w_star)), E=E), radius


def write_bound_csv(path, Ts, gaps, bounds):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["T", "observed_gap", "bound"])
        for t, g, b in zip(Ts, gaps, bounds):
            w.writerow([int(t), format(float(g), ".10g"), format(float(b), ".10g")])
