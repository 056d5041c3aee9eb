import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate

from srcseek.netcons import CommGraph, ParticleSet, dpf_step_all
from srcseek.seek_mb import (GroupBinding, MiSampleBudget, centralized_mb_step, distributed_mb_step,
                             mi_gradient_estimate, overlap_set, pi_sample, predictive_density,
                             simulate_measurements)
from srcseek.seek_mf import StepSchedule
from srcseek.signal import LinearGaussianModel, RssModel


def gaussian_prior(n, dim=1, seed=0):
    return ParticleSet.uniform(np.random.default_rng(seed).standard_normal((n, dim)))


def pi_draws(x_group, particles, model, n, rng, blocks=None):
    """Individual gradient samples, shape (n, n_g, d_x)."""
    b = GroupBinding(model, x_group, particles.positions)
    out = []
    for chunk in np.array_split(np.arange(n), max(n // 1000, 1)):
        z = simulate_measurements(b, particles, len(chunk), rng)
        out.append(pi_sample(z, None, particles, model, binding=b, blocks=blocks))
    return np.concatenate(out)


def test_budget_validation():
    with pytest.raises(ValueError):
        MiSampleBudget(0)


def test_single_particle_density_is_likelihood():
    m = RssModel()
    p = ParticleSet.uniform([[6.0, 8.0]])
    for z in [-80.0, -60.0, -45.0]:
        assert predictive_density([z], [[0.0, 0.0]], p, m) == pytest.approx(m.likelihood(z, (0, 0), (6, 8)), rel=1e-12)


def test_colocated_particles_match_single():
    m = RssModel()
    one = ParticleSet.uniform([[6.0, 8.0]])
    two = ParticleSet.uniform([[6.0, 8.0], [6.0, 8.0]])
    x = [[0.0, 0.0], [3.0, 1.0]]
    z = np.array([-60.0, -55.0])
    assert predictive_density(z, x, two, m) == pytest.approx(predictive_density(z, x, one, m), rel=1e-12)
    assert_allclose(pi_sample(z, x, two, m), pi_sample(z, x, one, m), atol=1e-15)


def test_predictive_density_normalizes():
    m = RssModel()
    p = ParticleSet(np.array([[6.0, 8.0], [20.0, 3.0], [2.0, 2.0]]), np.log([0.5, 0.3, 0.2]))
    val, _ = integrate.quad(lambda z: predictive_density([z], [[0.0, 0.0]], p, m), -250, 50, limit=400)
    assert val == pytest.approx(1.0, abs=1e-3)


def test_single_particle_has_zero_gradient():
    m = RssModel()
    p = ParticleSet.uniform([[6.0, 8.0]])
    z = np.random.default_rng(0).uniform(-90, -40, (20, 2))
    assert np.all(pi_sample(z, [[0.0, 0.0], [4.0, 4.0]], p, m) == 0.0)
    X = np.array([[0.0, 0.0], [4.0, 4.0]])
    X2, u = centralized_mb_step(X, p, m, StepSchedule(10.0), 0, MiSampleBudget(5), np.random.default_rng(0))
    assert_allclose(X2, X)


@pytest.mark.parametrize("z", [-70.0, -55.0, -48.0])
def test_mirror_symmetric_particles(z):
    # particles mirrored about x = 0, sensor on the mirror line
    m = RssModel()
    p = ParticleSet.uniform([[-5.0, 10.0], [5.0, 10.0]])
    g = pi_sample([z], [[0.0, 2.0]], p, m)
    assert abs(g[0, 0]) <= 1e-9


def test_zero_gain_no_motion():
    m = RssModel()
    p = ParticleSet.uniform(np.random.default_rng(0).uniform(0, 20, (50, 2)))
    X = np.array([[1.0, 1.0]])
    X2, u = centralized_mb_step(X, p, m, StepSchedule(0.0), 0, MiSampleBudget(), np.random.default_rng(0))
    assert_allclose(X2, X)
    assert np.all(u == 0)


def test_linear_gaussian_gradient():
    # I(x) = 0.5 log(1 + x^2); dI/dx = 0.5 at x = 1
    m = LinearGaussianModel()
    g = pi_draws([[1.0]], gaussian_prior(2000), m, 10**4, np.random.default_rng(1))
    assert g.mean() == pytest.approx(0.5, rel=0.1)


def test_gradient_vanishes_at_stationary_point():
    m = LinearGaussianModel()
    g = mi_gradient_estimate([[0.0]], gaussian_prior(500), m, MiSampleBudget(200), np.random.default_rng(0))
    assert abs(g[0, 0]) <= 1e-12


def test_single_samples_average_to_large_budget():
    m = LinearGaussianModel()
    p = gaussian_prior(50, seed=3)
    rng = np.random.default_rng(2)
    singles = np.array([mi_gradient_estimate([[1.0]], p, m, MiSampleBudget(1), rng)[0, 0] for _ in range(10**5)])
    big = mi_gradient_estimate([[1.0]], p, m, MiSampleBudget(10**5), np.random.default_rng(3))[0, 0]
    se = singles.std() / np.sqrt(len(singles))
    assert abs(singles.mean() - big) <= 4 * np.sqrt(2) * se


def test_variance_shrinks_with_budget():
    m = LinearGaussianModel()
    p = gaussian_prior(300)
    rng = np.random.default_rng(4)
    budgets = np.array([1, 4, 16, 64])
    var = [np.var([mi_gradient_estimate([[1.0]], p, m, MiSampleBudget(n), rng)[0, 0] for _ in range(400)])
           for n in budgets]
    slope = np.polyfit(np.log(budgets), np.log(var), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.2)


def test_drift_toward_higher_information():
    m = LinearGaussianModel()
    p = gaussian_prior(500)
    sched = StepSchedule(1.0, 0.7)
    checkpoints = (0, 5, 10, 20)
    mags = np.zeros((50, len(checkpoints)))
    for rep in range(50):
        rng = np.random.default_rng(rep)
        x = np.array([[0.5]])
        for t in range(21):
            if t in checkpoints:
                mags[rep, checkpoints.index(t)] = abs(x[0, 0])
            x, _ = centralized_mb_step(x, p, m, sched, t, MiSampleBudget(10), rng)
    assert np.all(np.diff(mags.mean(axis=0)) > 0)


def test_overlap_set_examples():
    assert overlap_set(0, [(0.0, 0.0), (5.0, 0.0)], 2.0) == []
    assert overlap_set(0, [(0.0, 0.0), (3.9, 0.0)], 2.0) == [1]
    assert overlap_set(1, [(0.0, 0.0), (1e3, 0.0), None, (-1e3, 5.0)], np.inf) == [0, 3]


def test_empty_overlap_is_single_sensor_gradient():
    m = RssModel()
    p = ParticleSet.uniform(np.random.default_rng(0).uniform(0, 20, (300, 2)))
    states = [(0.0, 0.0), (30.0, 0.0)]
    u = distributed_mb_step(0, states, p, m, StepSchedule(2.0), 0, MiSampleBudget(10),
                            np.random.default_rng(9), r_s=5.0)
    g = mi_gradient_estimate([states[0]], p, m, MiSampleBudget(10), np.random.default_rng(9))
    assert_allclose(u, 2.0 * g[0], rtol=1e-12, atol=0)


def test_distributed_matches_centralized_blocks():
    m = RssModel()
    p = ParticleSet.uniform(np.random.default_rng(0).uniform(0, 30, (400, 2)))
    X = np.array([[2.0, 3.0], [5.0, 1.0], [4.0, 6.0], [8.0, 8.0]])
    sched, budget = StepSchedule(100.0), MiSampleBudget(10)
    _, u = centralized_mb_step(X, p, m, sched, 3, budget, np.random.default_rng(11))
    for i in range(len(X)):
        ui = distributed_mb_step(i, list(X), p, m, sched, 3, budget, np.random.default_rng(11), r_s=np.inf)
        assert_allclose(ui, u[i], rtol=1e-12, atol=1e-15)


def test_far_sensor_does_not_change_block():
    # product prior; the far sensor only observes the second coordinate of the source
    m = LinearGaussianModel(dim_x=2)
    p = gaussian_prior(2000, dim=2, seed=5)
    near, far = [1.0, 0.0], [0.0, 2.0]
    solo = pi_draws([near], p, m, 2 * 10**4, np.random.default_rng(6))[:, 0]
    pair = pi_draws([near, far], p, m, 2 * 10**4, np.random.default_rng(7), blocks=[0])[:, 0]
    se = np.sqrt(solo.var(axis=0) / len(solo) + pair.var(axis=0) / len(pair))
    assert np.all(np.abs(solo.mean(axis=0) - pair.mean(axis=0)) <= 4 * se)
    assert overlap_set(0, [near, far], 1.0) == []


def test_single_node_filter_converges():
    m = RssModel()
    src = np.array([20.0, 12.0])
    path = np.array([[2.0, 2.0], [28.0, 2.0], [28.0, 28.0], [2.0, 28.0]])
    g = CommGraph.from_edges(1, [])
    checks = (5, 20, 80)
    err = np.zeros((50, len(checks)))
    Y = np.random.default_rng(100).uniform(0, 30, (2000, 2))
    bound = [m.bind(x, Y) for x in path]
    for rep in range(50):
        rng = np.random.default_rng(rep)
        lw = np.full((1, len(Y)), -np.log(len(Y)))
        for k in range(1, 81):
            b = bound[k % len(path)]
            z = m.sample(path[k % len(path)], src, rng)
            lw = dpf_step_all(g, lw, b.log_likelihood(z)[None, :])
            if k in checks:
                est = ParticleSet(Y, lw[0]).mean()
                err[rep, checks.index(k)] = np.sum((est - src) ** 2)
    rmse = np.sqrt(err.mean(axis=0))
    assert rmse[0] > rmse[1] > rmse[2]
