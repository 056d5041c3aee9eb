"""Measurement models ``z = h(x, y) + v``.

``MeasurementModel`` is the contract used by the particle filter and the
mutual-information gradient. Besides pointwise queries it can be *bound* to a
sensor position and a batch of source hypotheses so that geometry (distances,
wall lengths) is computed once and reused for many simulated measurements.

The concrete model is ``RssModel``: received signal strength in dBm with
free-space loss, a multi-wall term and Rician/Rayleigh fading subtracted in the
dB domain, so the mean RSS sits below the deterministic link budget by the
mean of the fading law.
"""
from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import optimize, special

from .env import OccupancyGrid, wall_distances

log = logging.getLogger(__name__)

EPS_PDF = 1e-300
LOG_EPS_PDF = np.log(EPS_PDF)
D_MIN = 0.01  # m, distance clamp for the log singularity
H_FD = 1e-3  # m, finite-difference step for the wall term
DB_PER_NEPER = 20.0 / np.log(10.0)


class BoundModel(ABC):
    """A model bound to one sensor position ``x`` and hypotheses ``Y``."""

    n_hyp: int

    @abstractmethod
    def sample(self, idx, rng) -> np.ndarray:
        """One measurement per entry of ``idx`` (indices into the hypotheses)."""

    @abstractmethod
    def log_likelihood(self, z) -> np.ndarray:
        """``log p(z | Y[m], x)``, shape ``z.shape + (n_hyp,)``, floored at log(EPS_PDF)."""

    @abstractmethod
    def log_likelihood_and_score(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Log-likelihood plus ``grad_x p / p``, shape ``z.shape + (n_hyp, dim_x)``.

        The score is zero wherever the density sits on the floor.
        """


class MeasurementModel(ABC):
    dim_x: int = 2

    @abstractmethod
    def bind(self, x, Y) -> BoundModel: ...

    @abstractmethod
    def mean(self, x, y) -> float: ...

    def sample(self, x, y, rng) -> float:
        return float(self.bind(x, np.atleast_2d(y)).sample(np.zeros(1, dtype=int), rng)[0])

    def likelihood(self, z, x, y) -> float:
        return float(np.exp(self.bind(x, np.atleast_2d(y)).log_likelihood(np.asarray(z, float))[..., 0]))

    def likelihood_grad_x(self, z, x, y) -> np.ndarray:
        ll, score = self.bind(x, np.atleast_2d(y)).log_likelihood_and_score(np.asarray(z, float))
        return np.exp(ll[..., 0, None]) * score[..., 0, :]


@dataclass(frozen=True)
class RssParams:
    p_tx: float = 18.0
    g_tx: float = 1.5
    l_tx: float = 0.0
    g_rx: float = 1.5
    l_rx: float = 0.0
    freq_mhz: float = 2400.0
    alpha_multiwall: float = 30.0
    beta_wall: float = 15.0
    rician_mu: float = 4.0
    sigma: float = 20.0
    # "noncentrality": rician_mu is the Rice noncentrality parameter.
    # "mean": rician_mu is the mean of the Rician law (needs mu >= sigma*sqrt(pi/2)).
    rician_mu_is: str = "noncentrality"

    def __post_init__(self):
        if not self.freq_mhz > 0:
            raise ValueError("freq_mhz must be > 0")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if self.beta_wall < 0 or self.alpha_multiwall < 0:
            raise ValueError("alpha_multiwall and beta_wall must be >= 0")
        if self.rician_mu_is not in ("noncentrality", "mean"):
            raise ValueError(f"rician_mu_is must be 'noncentrality' or 'mean', got {self.rician_mu_is!r}")
        if self.rician_mu < 0:
            raise ValueError("rician_mu must be >= 0")

    @property
    def link_budget(self) -> float:
        return self.p_tx + self.g_tx - self.l_tx + self.g_rx - self.l_rx


class RicianFading:
    """Rice(nu, sigma) law on r >= 0; nu = 0 is Rayleigh(sigma)."""

    def __init__(self, nu: float, sigma: float):
        self.nu = float(nu)
        self.sigma = float(sigma)

    @classmethod
    def with_mean(cls, mean: float, sigma: float) -> "RicianFading":
        floor = sigma * np.sqrt(np.pi / 2)
        if mean < floor:
            raise ValueError(f"a Rician law with sigma={sigma} has mean >= {floor:.3f}, got {mean}")
        if mean == floor:
            return cls(0.0, sigma)
        nu = optimize.brentq(lambda v: cls(v, sigma).mean - mean, 0.0, mean + sigma)
        return cls(nu, sigma)

    @cached_property
    def mean(self) -> float:
        # sigma sqrt(pi/2) L_{1/2}(-nu^2 / 2 sigma^2) with scaled Bessel functions
        a = self.nu**2 / (4 * self.sigma**2)
        lag = (1 + 2 * a) * special.i0e(a) + 2 * a * special.i1e(a)
        return float(self.sigma * np.sqrt(np.pi / 2) * lag)

    @cached_property
    def var(self) -> float:
        return float(max(2 * self.sigma**2 + self.nu**2 - self.mean**2, 0.0))

    def sample(self, rng, size=None):
        a = self.nu + self.sigma * rng.standard_normal(size)
        b = self.sigma * rng.standard_normal(size)
        return np.hypot(a, b)

    def logpdf(self, r):
        r = np.asarray(r, dtype=float)
        s2 = self.sigma**2
        with np.errstate(divide="ignore", invalid="ignore"):
            rp = np.where(r > 0, r, 1.0)
            out = (np.log(rp) - np.log(s2) - (rp - self.nu) ** 2 / (2 * s2)
                   + np.log(special.i0e(rp * self.nu / s2)))
        return np.where(r > 0, out, -np.inf)

    def dlogpdf(self, r):
        """d/dr log f(r); 0 outside the support."""
        r = np.asarray(r, dtype=float)
        s2 = self.sigma**2
        rp = np.where(r > 0, r, 1.0)
        a = rp * self.nu / s2
        out = 1.0 / rp - (rp - self.nu) / s2 + (self.nu / s2) * (special.i1e(a) / special.i0e(a) - 1.0)
        return np.where(r > 0, out, 0.0)


def free_space_loss(x, y, freq_mhz=2400.0):
    """Free-space path loss in dB; distances below D_MIN are clamped."""
    d = np.linalg.norm(np.asarray(x, float) - np.asarray(y, float), axis=-1)
    if np.any(d < D_MIN):
        log.debug("clamping %d distance(s) below %.3g m", np.count_nonzero(d < D_MIN), D_MIN)
    d = np.maximum(d, D_MIN)
    return -27.55 + 20.0 * np.log10(freq_mhz) + 20.0 * np.log10(d)


def multipath_loss_from_lambda(lam, params: RssParams):
    lam = np.asarray(lam, dtype=float)
    return np.where(lam > 0, params.alpha_multiwall + params.beta_wall * lam, 0.0)


def multipath_loss(x, y, grid: OccupancyGrid | None, params: RssParams):
    lam = wall_distances(grid, np.atleast_2d(x), np.atleast_2d(y))
    out = multipath_loss_from_lambda(lam, params)
    return float(out[0, 0]) if np.ndim(x) == 1 and np.ndim(y) == 1 else out


class _BoundRss(BoundModel):
    def __init__(self, model: "RssModel", x, Y):
        self.model = model
        p = model.params
        self.x = np.asarray(x, dtype=float)
        self.Y = np.atleast_2d(np.asarray(Y, dtype=float))
        self.n_hyp = len(self.Y)
        grid = model.grid

        diff = self.x[None, :] - self.Y
        d = np.linalg.norm(diff, axis=1)
        lfs = free_space_loss(self.x, self.Y, p.freq_mhz)
        far = d >= D_MIN
        grad_lfs = np.zeros_like(diff)
        grad_lfs[far] = DB_PER_NEPER * diff[far] / d[far, None] ** 2

        if grid is not None and grid.has_walls:
            offsets = np.array([[0, 0], [H_FD, 0], [-H_FD, 0], [0, H_FD], [0, -H_FD]])
            pts = self.x[None, :] + offsets
            lam = wall_distances(grid, pts, self.Y)  # (5, n_hyp)
            lm = multipath_loss_from_lambda(lam, p)
            los_all = lam == 0.0
            self.los = los_all[0]
            self.boundary = np.any(los_all != los_all[0], axis=0)
            grad_lm = np.stack([(lm[1] - lm[2]), (lm[3] - lm[4])], axis=1) / (2 * H_FD)
            lfs_off = free_space_loss(pts[:, None, :], self.Y[None], p.freq_mhz)
            self._det_off = p.link_budget - lfs_off - lm  # (5, n_hyp)
            self._los_off = los_all
        else:
            lm = np.zeros((1, self.n_hyp))
            self.los = np.ones(self.n_hyp, dtype=bool)
            self.boundary = np.zeros(self.n_hyp, dtype=bool)
            grad_lm = np.zeros_like(diff)
        self.det = p.link_budget - lfs - lm[0]
        self.grad_det = -grad_lfs - grad_lm

    def _fade(self, los):
        return self.model.los_fading if los else self.model.nlos_fading

    def rss_mean(self):
        fm = np.where(self.los, self.model.los_fading.mean, self.model.nlos_fading.mean)
        return self.det - fm

    def sample(self, idx, rng):
        idx = np.asarray(idx)
        los = self.los[idx]
        r = np.where(los, self.model.los_fading.sample(rng, idx.shape),
                     self.model.nlos_fading.sample(rng, idx.shape))
        return self.det[idx] - r

    def _logpdf(self, r, los):
        return np.where(los, self.model.los_fading.logpdf(r), self.model.nlos_fading.logpdf(r))

    def _dlogpdf(self, r, los):
        return np.where(los, self.model.los_fading.dlogpdf(r), self.model.nlos_fading.dlogpdf(r))

    def log_likelihood(self, z):
        z = np.asarray(z, dtype=float)
        r = self.det - z[..., None]
        return np.maximum(self._logpdf(r, self.los), LOG_EPS_PDF)

    def log_likelihood_and_score(self, z):
        z = np.asarray(z, dtype=float)
        r = self.det - z[..., None]
        raw = self._logpdf(r, self.los)
        ll = np.maximum(raw, LOG_EPS_PDF)
        live = raw > LOG_EPS_PDF
        # f'(r)/f(r) * grad r, with r = det(x) - z
        score = (np.where(live, self._dlogpdf(r, self.los), 0.0)[..., None] * self.grad_det)
        if self.boundary.any():
            b = np.flatnonzero(self.boundary)
            rb = self._det_off[:, b] - z[..., None, None]  # (..., 5, nb)
            lik = np.exp(np.maximum(self._logpdf(rb, self._los_off[:, b]), LOG_EPS_PDF))
            grad = np.stack([lik[..., 1, :] - lik[..., 2, :], lik[..., 3, :] - lik[..., 4, :]], axis=-1)
            grad /= 2 * H_FD
            score[..., b, :] = np.where(live[..., b, None], grad / lik[..., 0, :, None], 0.0)
        return ll, score


class RssModel(MeasurementModel):
    """Received signal strength (dBm) of a source at ``y`` seen from ``x``."""

    dim_x = 2

    def __init__(self, params: RssParams | None = None, grid: OccupancyGrid | None = None):
        self.params = params or RssParams()
        self.grid = grid
        p = self.params
        if p.rician_mu_is == "mean":
            self.los_fading = RicianFading.with_mean(p.rician_mu, p.sigma)
        else:
            self.los_fading = RicianFading(p.rician_mu, p.sigma)
        self.nlos_fading = RicianFading(0.0, p.sigma)

    def bind(self, x, Y) -> _BoundRss:
        return _BoundRss(self, x, Y)

    def received_power(self, x, y) -> float:
        """Deterministic part: link budget minus free-space and wall losses."""
        return float(self.bind(x, np.atleast_2d(y)).det[0])

    def mean(self, x, y) -> float:
        return float(self.bind(x, np.atleast_2d(y)).rss_mean()[0])

    def mean_field(self, X, y) -> np.ndarray:
        """rss_mean for many sensor positions and one source."""
        return np.array([self.mean(x, y) for x in np.atleast_2d(X)])

    def sample_field(self, X, y, rng) -> np.ndarray:
        return np.array([self.sample(x, y, rng) for x in np.atleast_2d(X)])

    def fading_for(self, x, y) -> RicianFading:
        return self.los_fading if self.bind(x, np.atleast_2d(y)).los[0] else self.nlos_fading

    def likelihood_grad_x(self, z, x, y, return_flag=False):
        b = self.bind(x, np.atleast_2d(y))
        ll, score = b.log_likelihood_and_score(np.asarray(z, float))
        g = np.exp(ll[..., 0, None]) * score[..., 0, :]
        return (g, bool(b.boundary[0])) if return_flag else g


class _BoundQuadratic(BoundModel):
    def __init__(self, model, x, Y):
        self.model = model
        self.x = np.asarray(x, float)
        self.Y = np.atleast_2d(np.asarray(Y, float))
        self.n_hyp = len(self.Y)
        self.h = -model.scale * np.sum((self.x - self.Y) ** 2, axis=1)
        self.grad = -2 * model.scale * (self.x - self.Y)

    def sample(self, idx, rng):
        idx = np.asarray(idx)
        noise = self.model.noise_sd * rng.standard_normal(idx.shape) if self.model.noise_sd > 0 else 0.0
        return self.h[idx] + noise

    def _require_noise(self):
        if self.model.noise_sd <= 0:
            raise ValueError("likelihood is undefined for a noise-free field")

    def log_likelihood(self, z):
        self._require_noise()
        s = self.model.noise_sd
        e = np.asarray(z, float)[..., None] - self.h
        return np.maximum(-0.5 * (e / s) ** 2 - np.log(s * np.sqrt(2 * np.pi)), LOG_EPS_PDF)

    def log_likelihood_and_score(self, z):
        ll = self.log_likelihood(z)
        e = np.asarray(z, float)[..., None] - self.h
        score = (e / self.model.noise_sd**2)[..., None] * self.grad
        return ll, np.where((ll > LOG_EPS_PDF)[..., None], score, 0.0)


class QuadraticField(MeasurementModel):
    """``h(x, y) = -scale * ||x - y||^2`` with optional Gaussian noise."""

    dim_x = 2

    def __init__(self, scale: float = 1.0, noise_sd: float = 0.0):
        self.scale = scale
        self.noise_sd = noise_sd

    def bind(self, x, Y):
        return _BoundQuadratic(self, x, Y)

    def mean(self, x, y):
        return float(-self.scale * np.sum((np.asarray(x, float) - np.asarray(y, float)) ** 2))

    def mean_field(self, X, y):
        return -self.scale * np.sum((np.atleast_2d(X) - np.asarray(y, float)) ** 2, axis=1)

    def sample_field(self, X, y, rng):
        h = self.mean_field(X, y)
        return h + self.noise_sd * rng.standard_normal(h.shape) if self.noise_sd > 0 else h


class _BoundLinearGaussian(BoundModel):
    def __init__(self, model, x, Y):
        self.model = model
        self.x = np.atleast_1d(np.asarray(x, float))
        Y = np.asarray(Y, float)
        self.Y = Y.reshape(len(Y), -1)
        self.n_hyp = len(self.Y)
        self.h = self.Y @ self.x

    def sample(self, idx, rng):
        idx = np.asarray(idx)
        return self.h[idx] + self.model.noise_sd * rng.standard_normal(idx.shape)

    def log_likelihood(self, z):
        s = self.model.noise_sd
        e = np.asarray(z, float)[..., None] - self.h
        return np.maximum(-0.5 * (e / s) ** 2 - np.log(s * np.sqrt(2 * np.pi)), LOG_EPS_PDF)

    def log_likelihood_and_score(self, z):
        ll = self.log_likelihood(z)
        e = np.asarray(z, float)[..., None] - self.h
        score = (e / self.model.noise_sd**2)[..., None] * self.Y
        return ll, np.where((ll > LOG_EPS_PDF)[..., None], score, 0.0)


class LinearGaussianModel(MeasurementModel):
    """``z = <x, y> + v`` with ``v ~ N(0, noise_sd^2)``.

    With scalar ``y ~ N(0, 1)`` and unit noise the mutual information is
    ``0.5 * log(1 + x^2)``, which makes it a convenient closed-form check.
    """

    def __init__(self, dim_x: int = 1, noise_sd: float = 1.0):
        self.dim_x = dim_x
        self.noise_sd = noise_sd

    def bind(self, x, Y):
        return _BoundLinearGaussian(self, x, Y)

    def mean(self, x, y):
        return float(np.dot(np.atleast_1d(x), np.atleast_1d(y)))
