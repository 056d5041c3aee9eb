"""Model-free source seeking.

The centralized step moves the formation centroid along ``W(x) z``. The
distributed version runs, at each measurement location, a fast loop in which
every sensor

1. refines its estimate of the whole formation (in sensor 0's frame) from
   noisy relative measurements with the information-form estimator,
2. recomputes the FD weights from that estimate and forms its own term
   ``col_i(W) * mean(z_i)``,
3. feeds that term into the dynamic consensus filter.

``n * r_i`` then estimates the gradient at the centroid and sensor i moves by
``gamma_t * n * r_i``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .netcons import CommGraph, ConsensusFilter, gauss_step_all, information_terms
from .rbffd import fd_weights, fd_weights_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepSchedule:
    """``gamma_t = gamma0 / (t + 1) ** exponent``.

    ``exponent`` in (0.5, 1] keeps sum(gamma) infinite and sum(gamma^2) finite.
    """

    gamma0: float
    exponent: float = 1.0

    def __post_init__(self):
        if not 0.5 < self.exponent <= 1.0:
            raise ValueError(f"step-size exponent must be in (0.5, 1], got {self.exponent}")
        if self.gamma0 < 0:
            raise ValueError("gamma0 must be >= 0")

    def __call__(self, t: int) -> float:
        return self.gamma0 / (t + 1) ** self.exponent


@dataclass(frozen=True)
class RelMeasModel:
    cov: np.ndarray = field(default_factory=lambda: 0.4 * np.eye(2))

    def __post_init__(self):
        c = np.asarray(self.cov, float)
        if c.shape != (2, 2) or not np.allclose(c, c.T) or np.linalg.eigvalsh(c)[0] < 0:
            raise ValueError("relative-measurement covariance must be a symmetric PSD 2x2 matrix")
        object.__setattr__(self, "cov", c)


def directed_edges(graph: CommGraph) -> np.ndarray:
    """(i, j) for every node i and neighbour j, grouped by i."""
    return np.array([(i, j) for i in range(graph.n) for j in graph.neighbors(i)], dtype=int).reshape(-1, 2)


def sample_relative_measurements(positions, graph: CommGraph, model: RelMeasModel, rng):
    """``s_ij = x_j - x_i + noise`` for every directed edge; returns (pairs, values)."""
    X = np.asarray(positions, float)
    pairs = directed_edges(graph)
    diff = X[pairs[:, 1]] - X[pairs[:, 0]]
    if np.any(model.cov):
        noise = rng.multivariate_normal(np.zeros(2), model.cov, size=len(pairs), method="cholesky")
    else:
        noise = np.zeros_like(diff)
    return pairs, diff + noise


def centralized_mf_step(positions, z, schedule: StepSchedule, t: int, delta: float):
    """Translate the whole formation by ``gamma_t W(x) z``.

    Returns ``(new_positions, increment)``; a formation that does not span the
    plane gives a zero increment.
    """
    X = np.asarray(positions, float)
    fw = fd_weights(X, delta)
    if fw.in_subspace:
        log.warning("formation does not span the plane at t=%d; skipping the step", t)
        return X.copy(), np.zeros(X.shape[1])
    inc = schedule(t) * (fw.w @ np.asarray(z, float))
    return X + inc, inc


class DistributedMfEstimator:
    """Fast-time-scale state for all nodes at one measurement location.

    Per-node quantities are stacked along axis 0: ``omega[i]``, ``Omega[i]``
    hold node i's information-form belief over the other sensors' positions
    relative to sensor 0, ``z_sum[i] / z_count[i]`` its running signal mean and
    ``g_local[i]`` its own gradient term.
    """

    def __init__(self, positions, source, field, graph: CommGraph, rel_model: RelMeasModel,
                 delta: float, nominal, rng, k_meas: int | None = 10,
                 prior_precision: float = 1e-6, beta: float | None = None,
                 freeze_after_meas: bool = True):
        self.X = np.asarray(positions, float)
        self.n = len(self.X)
        self.source = np.asarray(source, float)
        self.field = field
        self.graph = graph
        self.rel_model = rel_model
        self.delta = delta
        self.rng = rng
        self.k_meas = k_meas
        # after k_meas rounds stop measuring altogether so the consensus
        # inputs are constant; False keeps refining poses on relative data
        self.freeze_after_meas = freeze_after_meas
        self.k = 0
        n, D = self.n, 2 * (self.n - 1)
        self.pairs = directed_edges(graph)

        # node i observes x_j - x_i for its neighbours; x_0 is pinned to 0
        self.HtEi, M = [], []
        for i in range(n):
            nb = self.pairs[self.pairs[:, 0] == i, 1]
            H = np.zeros((2 * len(nb), D))
            for r, j in enumerate(nb):
                if j > 0:
                    H[2 * r:2 * r + 2, 2 * (j - 1):2 * j] += np.eye(2)
                if i > 0:
                    H[2 * r:2 * r + 2, 2 * (i - 1):2 * i] -= np.eye(2)
            E = np.kron(np.eye(len(nb)), rel_model.cov)
            a, b = information_terms(H, E) if len(nb) else (np.zeros((D, 0)), np.zeros((D, D)))
            self.HtEi.append(a)
            M.append(b)
        self.M = np.stack(M)

        nominal = np.asarray(nominal, float)
        theta0 = (nominal[1:] - nominal[0]).ravel()
        P0 = prior_precision * np.eye(D)
        self.omega = np.tile(P0 @ theta0, (n, 1))
        self.Omega = np.tile(P0, (n, 1, 1))
        self.z_sum = np.zeros(n)
        self.z_count = np.zeros(n, dtype=int)
        self.consensus = ConsensusFilter(graph, 2, beta)
        self.g_local = np.zeros((n, 2))
        self.r = np.zeros((n, 2))
        self.x_hat = np.tile(nominal - nominal[0], (n, 1, 1))

    @property
    def x_true_frame(self) -> np.ndarray:
        return self.X - self.X[0]

    def round(self) -> np.ndarray:
        """One synchronous fast round; returns the consensus outputs ``r_k``."""
        measuring = self.k_meas is None or self.k < self.k_meas
        if measuring or not self.freeze_after_meas:
            self._update_local_terms(measuring)
        # (iv) dynamic consensus on the local terms
        self.r = self.consensus.step(self.g_local)
        self.k += 1
        return self.r

    def _update_local_terms(self, measuring):
        n = self.n
        # (i) relative-state estimation
        _, s = sample_relative_measurements(self.X, self.graph, self.rel_model, self.rng)
        innov = np.zeros_like(self.omega)
        for i in range(n):
            rows = self.pairs[:, 0] == i
            if rows.any():
                innov[i] = self.HtEi[i] @ s[rows].ravel()
        self.omega, self.Omega = gauss_step_all(self.graph.mixing, self.omega, self.Omega, innov, self.M)
        theta = np.linalg.solve(self.Omega, self.omega[..., None])[..., 0]
        self.x_hat = np.concatenate([np.zeros((n, 1, 2)), theta.reshape(n, n - 1, 2)], axis=1)

        # (ii) each node's own FD column from its estimate
        W = fd_weights_batch(self.x_hat, self.delta)  # (n, 2, n)
        col = W[np.arange(n), :, np.arange(n)]  # (n, 2)

        # (iii) signal running mean, frozen after k_meas samples
        if measuring:
            self.z_sum += self.field.sample_field(self.X, self.source, self.rng)
            self.z_count += 1
        self.g_local = col * (self.z_sum / self.z_count)[:, None]

    def gradient_estimates(self) -> np.ndarray:
        """``n * r_i`` per node."""
        return self.n * self.r

    def pose_rmse(self) -> float:
        err = self.x_hat - self.x_true_frame[None]
        return float(np.sqrt(np.mean(np.sum(err**2, axis=-1))))

    def centroid_rmse(self) -> float:
        err = self.x_hat.mean(axis=1) - self.x_true_frame.mean(axis=0)
        return float(np.sqrt(np.mean(np.sum(err**2, axis=-1))))


def fast_round(est: DistributedMfEstimator) -> np.ndarray:
    return est.round()


def reference_gradient(positions, source, field, delta) -> np.ndarray:
    """Noise-free centralized FD gradient ``W(x) E[z]``, the target of the fast loop."""
    X = np.asarray(positions, float)
    return fd_weights(X, delta).w @ field.mean_field(X, source)


def gradient_errors(estimates, reference):
    """Per-node magnitude error and direction error (degrees)."""
    est = np.atleast_2d(estimates)
    mag = np.linalg.norm(est, axis=1) - np.linalg.norm(reference)
    ang = np.degrees(np.arctan2(est[:, 1], est[:, 0]) - np.arctan2(reference[1], reference[0]))
    ang = (ang + 180.0) % 360.0 - 180.0
    return mag, ang


def distributed_mf_step(est: DistributedMfEstimator, schedule: StepSchedule, t: int) -> np.ndarray:
    """Per-sensor controls ``gamma_t * n * r_i`` after the fast loop."""
    return schedule(t) * est.gradient_estimates()
