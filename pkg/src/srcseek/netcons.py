"""Communication graphs and the distributed primitives that run on them.

* ``gauss_step`` / ``gauss_estimate``: information-form linear Gaussian
  estimator where each node mixes its neighbours' (omega, Omega) and adds its
  own measurement.
* ``dpf_step``: distributed particle filter, a geometric average of neighbour
  weights (linear in the log domain) followed by a Bayes update.
* ``ConsensusFilter``: high-pass dynamic consensus; outputs track the network
  average of time-varying inputs.
* ``flood_states``: bounded-round relay of sensor states.

Every primitive is a synchronous per-round transition: inputs are the previous
round's snapshots.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import logsumexp

from .signal import LOG_EPS_PDF


class GraphError(ValueError):
    pass


class NotIdentifiable(np.linalg.LinAlgError):
    """The information matrix is still singular."""


class DegenerateFilter(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class CommGraph:
    n: int
    edges: tuple[tuple[int, int], ...]
    mixing: np.ndarray = field(repr=False)
    connected: bool = True

    @classmethod
    def from_edges(cls, n, edges, require_connected=True) -> "CommGraph":
        es = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j or not (0 <= i < n and 0 <= j < n):
                raise GraphError(f"bad edge ({i}, {j}) for {n} nodes")
            es.add((min(i, j), max(i, j)))
        es = tuple(sorted(es))
        adj = _adjacency(n, es)
        ncomp, _ = sparse.csgraph.connected_components(sparse.csr_matrix(adj), directed=False)
        if require_connected and ncomp > 1:
            raise GraphError(f"communication graph has {ncomp} components")
        return cls(n, es, metropolis_mixing(n, es), ncomp == 1)

    @classmethod
    def from_positions(cls, positions, radius, require_connected=True) -> "CommGraph":
        X = np.asarray(positions, float)
        d = np.sqrt(np.sum((X[:, None] - X[None]) ** 2, axis=-1))
        i, j = np.nonzero(np.triu(d <= radius, k=1))
        return cls.from_edges(len(X), zip(i, j), require_connected)

    @property
    def adjacency(self) -> np.ndarray:
        return _adjacency(self.n, self.edges)

    @property
    def laplacian(self) -> np.ndarray:
        a = self.adjacency
        return np.diag(a.sum(axis=1)) - a

    @property
    def incidence(self) -> np.ndarray:
        """n x |E| with +1 at the tail i and -1 at the head j of edge (i, j)."""
        b = np.zeros((self.n, len(self.edges)))
        for e, (i, j) in enumerate(self.edges):
            b[i, e], b[j, e] = 1.0, -1.0
        return b

    def neighbors(self, i) -> list[int]:
        return [b if a == i else a for a, b in self.edges if i in (a, b)]


def _adjacency(n, edges):
    a = np.zeros((n, n))
    for i, j in edges:
        a[i, j] = a[j, i] = 1.0
    return a


def metropolis_mixing(n, edges) -> np.ndarray:
    """Metropolis-Hastings weights: symmetric, doubly stochastic."""
    deg = np.zeros(n, dtype=int)
    for i, j in edges:
        deg[i] += 1
        deg[j] += 1
    a = np.zeros((n, n))
    for i, j in edges:
        a[i, j] = a[j, i] = 1.0 / (1 + max(deg[i], deg[j]))
    a[np.diag_indices(n)] = 1.0 - a.sum(axis=1)
    return a


# --- linear Gaussian estimator -------------------------------------------------

@dataclass
class InfoGaussian:
    omega: np.ndarray
    Omega: np.ndarray

    @classmethod
    def zeros(cls, dim):
        return cls(np.zeros(dim), np.zeros((dim, dim)))

    @classmethod
    def from_mean(cls, mean, precision):
        P = np.asarray(precision, float)
        return cls(P @ np.asarray(mean, float), P)


def information_terms(H, E):
    """``(H^T E^-1, H^T E^-1 H)`` for a linear Gaussian sensor."""
    H = np.atleast_2d(np.asarray(H, float))
    E = np.atleast_2d(np.asarray(E, float))
    try:
        c = np.linalg.cholesky(E)
    except np.linalg.LinAlgError as exc:
        raise ValueError("noise covariance must be symmetric positive definite") from exc
    if not np.allclose(E, E.T):
        raise ValueError("noise covariance must be symmetric")
    EiH = np.linalg.solve(c.T, np.linalg.solve(c, H))
    HtEi = EiH.T
    return HtEi, H.T @ EiH


def gauss_step(i, graph: CommGraph, beliefs, H_i, E_i, s_i) -> InfoGaussian:
    """One update at node ``i`` given all nodes' beliefs from the last round."""
    a = graph.mixing[i]
    nb = np.flatnonzero(a)
    HtEi, M = information_terms(H_i, E_i)
    omega = sum(a[j] * beliefs[j].omega for j in nb) + HtEi @ np.atleast_1d(s_i)
    Omega = sum(a[j] * beliefs[j].Omega for j in nb) + M
    return InfoGaussian(omega, Omega)


def gauss_step_all(mixing, omega, Omega, HtEi_s, M):
    """Vectorised round for all nodes: ``omega`` (n, d), ``Omega`` (n, d, d)."""
    return (np.einsum("ij,jd->id", mixing, omega) + HtEi_s,
            np.einsum("ij,jab->iab", mixing, Omega) + M)


def gauss_estimate(g: InfoGaussian) -> np.ndarray:
    try:
        c = np.linalg.cholesky(g.Omega)
    except np.linalg.LinAlgError as exc:
        raise NotIdentifiable("information matrix is not positive definite yet") from exc
    return np.linalg.solve(c.T, np.linalg.solve(c, g.omega))


# --- distributed particle filter ------------------------------------------------

@dataclass
class ParticleSet:
    positions: np.ndarray  # shared across nodes, never modified
    log_weights: np.ndarray
    normalized: bool = False

    @classmethod
    def uniform(cls, positions):
        positions = np.asarray(positions, float)
        n = len(positions)
        return cls(positions, np.full(n, -np.log(n)), True)

    def normalize(self) -> "ParticleSet":
        self.log_weights = self.log_weights - logsumexp(self.log_weights)
        self.normalized = True
        return self

    @property
    def weights(self) -> np.ndarray:
        lw = self.log_weights if self.normalized else self.log_weights - logsumexp(self.log_weights)
        return np.exp(lw)

    def mean(self) -> np.ndarray:
        return self.weights @ self.positions

    def ess(self) -> float:
        w = self.weights
        return float(1.0 / np.sum(w**2))


def dpf_step(i, graph: CommGraph, log_weights, log_lik_i) -> np.ndarray:
    """Geometric-average prior then local Bayes update at node ``i``.

    ``log_weights`` is (n_nodes, N_p) from the previous round and ``log_lik_i``
    the node's log-likelihood of its new signal for every particle.
    """
    lw = np.asarray(log_weights, float)
    prior = graph.mixing[i] @ lw  # log of the geometric average
    post = prior + np.asarray(log_lik_i, float)
    top = post.max()
    if not np.isfinite(top) or top < LOG_EPS_PDF * len(post):
        raise DegenerateFilter(f"node {i}: all particle weights underflowed (max log-weight {top:.3g})")
    return post - logsumexp(post)


def dpf_step_all(graph: CommGraph, log_weights, log_lik) -> np.ndarray:
    """All nodes at once; ``log_lik`` is (n_nodes, N_p)."""
    post = graph.mixing @ np.asarray(log_weights, float) + log_lik
    top = post.max(axis=1)
    bad = ~np.isfinite(top) | (top < LOG_EPS_PDF * post.shape[1])
    if bad.any():
        raise DegenerateFilter(f"nodes {np.flatnonzero(bad).tolist()}: particle weights underflowed")
    return post - logsumexp(post, axis=1, keepdims=True)


# --- dynamic consensus ---------------------------------------------------------

class ConsensusFilter:
    """High-pass dynamic consensus on a fixed graph.

    ``q_{k+1} = q_k - beta L q_k - beta L mu_k`` and ``r_k = q_k + mu_k``.
    """

    def __init__(self, graph: CommGraph, dim: int, beta: float | None = None):
        L = graph.laplacian
        lam_max = float(np.linalg.eigvalsh(L)[-1]) if graph.n > 1 else 0.0
        if beta is None:
            beta = 0.9 / lam_max if lam_max > 0 else 1.0
        if not beta > 0 or (lam_max > 0 and beta >= 1.0 / lam_max):
            raise ValueError(f"beta={beta} outside (0, 1/lambda_max={1 / lam_max if lam_max else math.inf})")
        self.graph = graph
        self.L = L
        self.beta = float(beta)
        self.q = np.zeros((graph.n, dim))

    def step(self, mu) -> np.ndarray:
        """Advance one round with inputs ``mu`` (n, dim); return outputs at the old time."""
        mu = np.asarray(mu, float).reshape(self.q.shape)
        r = self.q + mu
        self.q = self.q - self.beta * (self.L @ self.q) - self.beta * (self.L @ mu)
        return r

    def output(self, mu) -> np.ndarray:
        return self.q + np.asarray(mu, float).reshape(self.q.shape)

    @property
    def contraction(self) -> float:
        """Second largest |eigenvalue| of ``I - beta L``."""
        ev = np.sort(np.abs(1.0 - self.beta * np.linalg.eigvalsh(self.L)))
        return float(ev[-2]) if len(ev) > 1 else 0.0


def consensus_step(q, graph: CommGraph, mu, beta):
    """Functional form; returns ``(q_next, r)``."""
    L = graph.laplacian
    q = np.asarray(q, float)
    mu = np.asarray(mu, float)
    return q - beta * (L @ q) - beta * (L @ mu), q + mu


# --- state flooding ------------------------------------------------------------

def flood_rounds(n, r_c, r_s) -> int:
    if not (r_c > 0 and r_s > 0):
        raise ValueError("radii must be positive")
    if math.isinf(r_s):
        return n
    return min(math.ceil(2 * r_s / r_c), n)


def flood_states(graph: CommGraph, states, r_c, r_s):
    """Synchronous flooding for every node.

    Returns a list ``a`` where ``a[i][j]`` is sensor j's state as known to
    node i after the rounds, or None.
    """
    n = graph.n
    known = [[states[i] if j == i else None for j in range(n)] for i in range(n)]
    nbrs = [graph.neighbors(i) for i in range(n)]
    for _ in range(flood_rounds(n, r_c, r_s)):
        snapshot = [list(row) for row in known]
        for i in range(n):
            for j in nbrs[i]:
                for l in range(n):
                    if known[i][l] is None and snapshot[j][l] is not None:
                        known[i][l] = snapshot[j][l]
    return known
