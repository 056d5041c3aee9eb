"""Model-based source seeking by stochastic mutual-information gradient ascent.

For a group of sensors at ``x`` and a weighted particle set over the source,
one simulated joint measurement ``z`` gives the unbiased gradient sample::

    pi(z, x)_k = sum_m post_m(z) * score_km(z) * log(p(z | y_m, x) / p(z | x))

where ``post_m = w_m p(z | y_m, x) / p(z | x)`` and ``score_km`` is
``d/dx_k p(z_k | y_m, x_k) / p(z_k | y_m, x_k)``. Averaging over ``n_z``
simulated measurements gives the Monte-Carlo MI gradient.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .netcons import ParticleSet
from .signal import LOG_EPS_PDF, MeasurementModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MiSampleBudget:
    n_z: int = 10

    def __post_init__(self):
        if self.n_z < 1:
            raise ValueError("n_z must be >= 1")


class GroupBinding:
    """Measurement model bound to every sensor of a group and one particle set."""

    def __init__(self, model: MeasurementModel, x_group, particle_positions, bound=None):
        self.model = model
        self.x = np.asarray(x_group, float).reshape(-1, model.dim_x)
        self.Y = np.asarray(particle_positions, float)
        self.bound = bound if bound is not None else [model.bind(x, self.Y) for x in self.x]

    @property
    def size(self) -> int:
        return len(self.bound)

    def log_joint(self, z):
        """``sum_j log p(z_j | y_m, x_j)`` and a mask of particle terms on the floor."""
        z = np.asarray(z, float)
        lls = [b.log_likelihood(z[..., j]) for j, b in enumerate(self.bound)]
        floored = np.zeros(lls[0].shape, dtype=bool)
        for ll in lls:
            floored |= ll <= LOG_EPS_PDF
        return np.sum(lls, axis=0), floored

    def sample(self, idx, rng):
        """Joint measurements for hypotheses ``idx``; column j is sensor j."""
        return np.stack([b.sample(idx, rng) for b in self.bound], axis=-1)


def predictive_density(z, x_group, particles: ParticleSet, model: MeasurementModel, binding=None):
    """``p_t(z | x) = sum_m w_m prod_j p(z_j | y_m, x_j)``."""
    binding = binding or GroupBinding(model, x_group, particles.positions)
    logp, _ = binding.log_joint(np.asarray(z, float))
    return np.exp(logsumexp(particles.log_weights + logp, axis=-1))


def pi_sample(z, x_group, particles: ParticleSet, model: MeasurementModel,
              binding=None, blocks=None) -> np.ndarray:
    """Particle approximation of pi(z, x).

    ``z`` is (n_g,) or (N, n_g); the result is (n_g, d_x) or (N, n_g, d_x).
    ``blocks`` restricts the computation to some sensors' blocks (others
    are returned as zeros).
    """
    binding = binding or GroupBinding(model, x_group, particles.positions)
    z = np.asarray(z, float)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    lw = particles.log_weights - logsumexp(particles.log_weights)
    logp, floored = binding.log_joint(z)  # (N, N_p)
    logpt = logsumexp(lw + logp, axis=-1, keepdims=True)
    post = np.exp(lw + logp - logpt)
    coef = np.where(floored, 0.0, post * (logp - logpt))  # (N, N_p)

    out = np.zeros(z.shape + (binding.model.dim_x,))
    for k in range(binding.size) if blocks is None else blocks:
        _, score = binding.bound[k].log_likelihood_and_score(z[:, k])  # (N, N_p, d)
        out[:, k] = np.einsum("nm,nmd->nd", coef, score)
    return out[0] if single else out


def simulate_measurements(binding: GroupBinding, particles: ParticleSet, n_z, rng):
    """Draw hypotheses from the weights, then a joint measurement for each."""
    w = particles.weights
    idx = rng.choice(len(w), size=n_z, p=w / w.sum())
    return binding.sample(idx, rng)


def mi_gradient_estimate(x_group, particles: ParticleSet, model: MeasurementModel,
                         budget: MiSampleBudget, rng, binding=None, blocks=None) -> np.ndarray:
    """Monte-Carlo MI gradient, shape (n_g, d_x)."""
    binding = binding or GroupBinding(model, x_group, particles.positions)
    zbar = simulate_measurements(binding, particles, budget.n_z, rng)
    return pi_sample(zbar, None, particles, model, binding=binding, blocks=blocks).mean(axis=0)


def centralized_mb_step(positions, particles: ParticleSet, model, schedule, t, budget, rng,
                        binding=None):
    """All sensors ascend the joint MI gradient; returns ``(new_positions, controls)``."""
    X = np.asarray(positions, float)
    gamma = schedule(t)
    if gamma == 0:
        return X.copy(), np.zeros_like(X)
    u = gamma * mi_gradient_estimate(X, particles, model, budget, rng, binding=binding)
    u = u.reshape(X.shape)
    return X + u, u


def overlap_set(i, known_states, r_s) -> list[int]:
    """Sensors other than ``i`` whose fields of view (radius ``r_s``) overlap i's."""
    xi = np.asarray(known_states[i], float)
    out = []
    for j, xj in enumerate(known_states):
        if j == i:
            continue
        if xj is None:
            log.debug("sensor %d: state of %d unknown, excluded", i, j)
            continue
        if np.linalg.norm(np.asarray(xj, float) - xi) <= 2 * r_s:
            out.append(j)
    return out


def distributed_mb_step(i, known_states, particles_i: ParticleSet, model, schedule, t, budget,
                        rng, r_s, bound_cache=None):
    """Control for sensor ``i`` from the MI gradient of the group {i} + overlap.

    The group is ordered by sensor index so that, given the same random
    stream, the result equals the matching block of the centralized step.
    ``bound_cache`` maps sensor index to a bound model for ``particles_i.positions``.
    """
    group = sorted([i] + overlap_set(i, known_states, r_s))
    gamma = schedule(t)
    if gamma == 0:
        return np.zeros(model.dim_x)
    xg = np.array([known_states[j] for j in group], float)
    bound = [bound_cache[j] for j in group] if bound_cache is not None else None
    binding = GroupBinding(model, xg, particles_i.positions, bound=bound)
    k = group.index(i)
    g = mi_gradient_estimate(xg, particles_i, model, budget, rng, binding=binding, blocks=[k])
    return gamma * g[k]
