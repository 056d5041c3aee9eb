"""Gaussian-RBF finite-difference weights for the gradient at a formation centroid.

For sensors at ``x_1..x_n`` the weights ``W`` (2 x n) are chosen so that
``W @ [psi_j(x_1) .. psi_j(x_n)] = grad psi_j(m)`` for the Gaussian test
functions ``psi_j(x) = exp(-delta^2 ||x - x_j||^2)`` centred on the sensors,
with ``m`` the centroid. The gradient of any field ``h`` is then estimated as
``W @ h(x)``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.optimize import brentq

log = logging.getLogger(__name__)

COND_WARN = 1e12
MIN_SEPARATION = 1e-9
SUBSPACE_RTOL = 1e-6


class DegenerateConfiguration(ValueError):
    """Two sensors share a position, so the RBF system is singular."""


@dataclass(frozen=True)
class FdWeights:
    w: np.ndarray  # (d_x, n)
    centroid: np.ndarray
    shape_delta: float
    condition_estimate: float
    ill_conditioned: bool
    in_subspace: bool  # formation spans fewer than d_x directions

    @property
    def degenerate(self) -> bool:
        return self.ill_conditioned or self.in_subspace


def rbf_matrix(positions, delta):
    """``Phi[i, j] = exp(-delta^2 ||x_j - x_i||^2)``."""
    X = np.asarray(positions, dtype=float)
    sq = np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=-1)
    return np.exp(-(delta**2) * sq)


def rbf_rhs(positions, delta):
    """Row i is the gradient of the RBF centred at x_i, evaluated at the centroid."""
    X = np.asarray(positions, dtype=float)
    c = X - X.mean(axis=0)
    return 2 * delta**2 * np.exp(-(delta**2) * np.sum(c**2, axis=1))[:, None] * c


def spans_space(positions, rtol=SUBSPACE_RTOL) -> bool:
    X = np.asarray(positions, dtype=float)
    if len(X) <= X.shape[1]:
        return False
    sv = np.linalg.svd(X - X.mean(axis=0), compute_uv=False)
    return bool(sv[0] > 0 and np.sum(sv > rtol * sv[0]) >= X.shape[1])


def fd_weights(positions, delta: float) -> FdWeights:
    X = np.atleast_2d(np.asarray(positions, dtype=float))
    n = len(X)
    if n < 1:
        raise ValueError("need at least one sensor")
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    if n > 1:
        sep = np.sqrt(np.sum((X[:, None] - X[None]) ** 2, axis=-1))
        sep[np.diag_indices(n)] = np.inf
        if sep.min() <= MIN_SEPARATION:
            i, j = np.unravel_index(np.argmin(sep), sep.shape)
            raise DegenerateConfiguration(f"sensors {i} and {j} are {sep[i, j]:.3g} m apart")

    phi = rbf_matrix(X, delta)
    rhs = rbf_rhs(X, delta)
    lu, piv = linalg.lu_factor(phi, check_finite=False)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        wt = linalg.lu_solve((lu, piv), rhs, trans=1, check_finite=False)  # Phi^T W^T = R
    rcond = _rcond_1norm(phi, lu, piv)
    cond = np.inf if rcond == 0 else 1.0 / rcond
    ill = not cond < COND_WARN
    if ill:
        log.warning("RBF system condition estimate %.3g exceeds %.0e", cond, COND_WARN)
    return FdWeights(wt.T.copy(), X.mean(axis=0), float(delta), float(cond), ill,
                     not spans_space(X))


def _rcond_1norm(a, lu, piv):
    # LAPACK gecon on the LU factors
    gecon, = linalg.get_lapack_funcs(("gecon",), (lu,))
    rcond, info = gecon(lu, np.linalg.norm(a, 1), norm="1")
    return rcond if info == 0 else 0.0


def gradient_estimate(weights: FdWeights, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (weights.w.shape[1],):
        raise ValueError(f"expected {weights.w.shape[1]} measurements, got shape {z.shape}")
    return weights.w @ z


def ring_formation(n: int, radius: float, center=(0.0, 0.0), phase: float = 0.0) -> np.ndarray:
    """Sensors evenly spaced on a circle."""
    ang = phase + 2 * np.pi * np.arange(n) / n
    return np.asarray(center, float) + radius * np.column_stack([np.cos(ang), np.sin(ang)])


def fd_weights_batch(positions, delta: float) -> np.ndarray:
    """Weights for a stack of formations, shape (B, d_x, n).

    No conditioning diagnostics; callers that need them use ``fd_weights``.
    """
    X = np.asarray(positions, dtype=float)
    sq = np.sum((X[:, :, None, :] - X[:, None, :, :]) ** 2, axis=-1)
    phi = np.exp(-(delta**2) * sq)
    c = X - X.mean(axis=1, keepdims=True)
    rhs = 2 * delta**2 * np.exp(-(delta**2) * np.sum(c**2, axis=-1))[..., None] * c
    return np.swapaxes(np.linalg.solve(np.swapaxes(phi, 1, 2), rhs), 1, 2)


def ring_gain(n: int, radius: float, delta: float) -> float:
    """Factor by which a regular n-ring stencil scales the gradient of a linear field."""
    X = ring_formation(n, radius)
    return float((fd_weights(X, delta).w @ X[:, 0])[0])


def tuned_delta(n: int, radius: float) -> float:
    """Shape parameter that makes the regular ring stencil exact on linear fields.

    Searches the largest root of ``ring_gain = 1`` in ``delta * radius`` in
    [1, 3], i.e. the well-conditioned branch rather than the flat limit.
    """
    if n < 3:
        return 1.0 / radius
    grid = np.linspace(1.0, 3.0, 81)
    vals = [ring_gain(n, 1.0, s) - 1.0 for s in grid]
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa > 0 >= fb:
            return brentq(lambda s: ring_gain(n, 1.0, s) - 1.0, a, b, xtol=1e-12) / radius
    return 1.0 / radius
