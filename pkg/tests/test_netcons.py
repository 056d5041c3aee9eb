import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.special import logsumexp

from srcseek.netcons import (CommGraph, ConsensusFilter, DegenerateFilter, GraphError, InfoGaussian,
                             NotIdentifiable, ParticleSet, consensus_step, dpf_step, dpf_step_all,
                             flood_rounds, flood_states, gauss_estimate, gauss_step, gauss_step_all,
                             information_terms, metropolis_mixing)


def path_graph(n):
    return CommGraph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


@st.composite
def connected_graphs(draw, max_n=20):
    n = draw(st.integers(2, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    # random spanning tree plus extra edges
    edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    extra = rng.random((n, n)) < draw(st.floats(0.0, 0.5))
    edges += [(i, j) for i in range(n) for j in range(i + 1, n) if extra[i, j]]
    return CommGraph.from_edges(n, edges)


# --- graphs and mixing ---------------------------------------------------------

def test_single_node_mixing():
    assert_allclose(CommGraph.from_edges(1, []).mixing, [[1.0]])


def test_two_node_mixing():
    assert_allclose(path_graph(2).mixing, [[0.5, 0.5], [0.5, 0.5]])


def test_metropolis_path_by_hand():
    A = metropolis_mixing(3, [(0, 1), (1, 2)])
    assert_allclose(A, [[2 / 3, 1 / 3, 0], [1 / 3, 1 / 3, 1 / 3], [0, 1 / 3, 2 / 3]])


@settings(max_examples=50, deadline=None)
@given(connected_graphs())
def test_mixing_properties(g):
    A = g.mixing
    assert_allclose(A.sum(axis=1), 1.0, atol=1e-12)
    assert_allclose(A, A.T)
    assert np.all(A >= 0)
    support = (g.adjacency + np.eye(g.n)) > 0
    assert np.array_equal(A > 0, support)


def test_disconnected_graph_rejected():
    with pytest.raises(GraphError):
        CommGraph.from_edges(3, [(0, 1)])
    g = CommGraph.from_edges(3, [(0, 1)], require_connected=False)
    assert not g.connected


@pytest.mark.parametrize("edge", [(0, 0), (0, 5), (-1, 1)])
def test_bad_edges_rejected(edge):
    with pytest.raises(GraphError):
        CommGraph.from_edges(3, [(0, 1), (1, 2), edge])


def test_graph_from_positions():
    X = np.array([[0.0, 0.0], [5.0, 0.0], [10.0, 0.0]])
    g = CommGraph.from_positions(X, 6.0)
    assert g.edges == ((0, 1), (1, 2))
    assert g.neighbors(1) == [0, 2]
    with pytest.raises(GraphError):
        CommGraph.from_positions(X, 4.0)


def test_laplacian_and_incidence():
    g = path_graph(3)
    B = g.incidence
    assert_allclose(B @ B.T, g.laplacian)


# --- Gaussian estimator ----------------------------------------------------------

def test_single_node_sample_mean():
    g = CommGraph.from_edges(1, [])
    rng = np.random.default_rng(0)
    s = rng.normal(size=(25, 2))
    beliefs = [InfoGaussian.zeros(2)]
    for k in range(25):
        beliefs = [gauss_step(0, g, beliefs, np.eye(2), np.eye(2), s[k])]
    assert_allclose(gauss_estimate(beliefs[0]), s.mean(axis=0), rtol=1e-12)


def test_gauss_estimate_examples():
    assert_allclose(gauss_estimate(InfoGaussian(np.zeros(2), np.eye(2))), 0.0)
    assert_allclose(gauss_estimate(InfoGaussian(np.array([2.0, 4.0]), 2 * np.eye(2))), [1.0, 2.0])
    with pytest.raises(NotIdentifiable):
        gauss_estimate(InfoGaussian.zeros(2))


def test_singular_noise_rejected():
    with pytest.raises(ValueError):
        information_terms(np.eye(2), np.zeros((2, 2)))


def test_info_from_mean():
    g = InfoGaussian.from_mean([1.0, -1.0], 3 * np.eye(2))
    assert_allclose(gauss_estimate(g), [1.0, -1.0])


def _two_node_setup():
    g = path_graph(2)
    H = [np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])]
    E = [np.eye(1), np.eye(1)]
    return g, H, E


def test_gauss_step_all_matches_per_node():
    g, H, E = _two_node_setup()
    rng = np.random.default_rng(1)
    beliefs = [InfoGaussian(rng.normal(size=2), np.eye(2) * (i + 1)) for i in range(2)]
    s = [rng.normal(size=1) for _ in range(2)]
    one = [gauss_step(i, g, beliefs, H[i], E[i], s[i]) for i in range(2)]
    terms = [information_terms(H[i], E[i]) for i in range(2)]
    om, Om = gauss_step_all(g.mixing, np.stack([b.omega for b in beliefs]),
                            np.stack([b.Omega for b in beliefs]),
                            np.stack([terms[i][0] @ s[i] for i in range(2)]),
                            np.stack([t[1] for t in terms]))
    assert_allclose(om, [b.omega for b in one])
    assert_allclose(Om, [b.Omega for b in one])


def test_information_matrix_closed_form():
    g, H, E = _two_node_setup()
    terms = [information_terms(H[i], E[i]) for i in range(2)]
    M = np.concatenate([t[1] for t in terms])  # stacked (n d) x d
    A = np.kron(g.mixing, np.eye(2))
    Om0 = np.concatenate([np.eye(2) * 0.1, np.eye(2) * 0.3])
    Om = np.stack([Om0[:2], Om0[2:]])
    k = 17
    for _ in range(k):
        Om = np.einsum("ij,jab->iab", g.mixing, Om) + np.stack([t[1] for t in terms])
    expected = np.linalg.matrix_power(A, k) @ Om0 + sum(np.linalg.matrix_power(A, k - 1 - t) @ M for t in range(k))
    assert_allclose(np.concatenate(Om), expected, atol=1e-9)


def test_noise_free_consistency():
    g, H, E = _two_node_setup()
    theta = np.array([1.5, -0.5])
    beliefs = [InfoGaussian.zeros(2), InfoGaussian.zeros(2)]
    for _ in range(5):
        beliefs = [gauss_step(i, g, beliefs, H[i], E[i], H[i] @ theta) for i in range(2)]
    for b in beliefs:
        assert_allclose(gauss_estimate(b), theta, atol=1e-12)


def test_two_node_mse_decreases():
    g, H, E = _two_node_setup()
    theta = np.array([1.0, -2.0])
    terms = [information_terms(H[i], E[i]) for i in range(2)]
    M = np.stack([t[1] for t in terms])
    rng = np.random.default_rng(0)
    runs = 500
    om, Om = np.zeros((runs, 2, 2)), np.zeros((2, 2, 2))
    mse = {}
    for k in range(1, 1001):
        s = rng.normal(size=(runs, 2)) + theta  # node i sees coordinate i
        inn = np.stack([s[:, [i]] @ terms[i][0].T for i in range(2)], axis=1)
        om = np.einsum("ij,rjd->rid", g.mixing, om) + inn
        Om = np.einsum("ij,jab->iab", g.mixing, Om) + M
        if k in (100, 1000):
            est = np.linalg.solve(Om[None], om[..., None])[..., 0]
            mse[k] = np.mean(np.sum((est - theta) ** 2, axis=-1))
    assert mse[1000] <= mse[100] / 5


# --- particle filter --------------------------------------------------------------

def test_particle_set_basics():
    p = ParticleSet(np.array([[0.0, 0.0], [2.0, 0.0]]), np.log([1.0, 3.0]))
    assert_allclose(p.weights, [0.25, 0.75])
    assert_allclose(p.mean(), [1.5, 0.0])
    assert p.ess() == pytest.approx(1 / (0.25**2 + 0.75**2))
    p.normalize()
    assert np.exp(p.log_weights).sum() == pytest.approx(1.0, abs=1e-9)
    assert ParticleSet.uniform(np.zeros((4, 2))).ess() == pytest.approx(4.0)


def test_flat_likelihood_keeps_uniform():
    g = CommGraph.from_edges(1, [])
    lw = np.full((1, 5), -np.log(5))
    assert_allclose(dpf_step(0, g, lw, np.zeros(5)), lw[0])


def test_single_node_is_bayes_update():
    g = CommGraph.from_edges(1, [])
    rng = np.random.default_rng(3)
    Y = rng.normal(size=(200, 2))
    w = np.full(200, 1 / 200)
    lw = np.log(w)[None]
    for _ in range(10):
        z = rng.normal()
        lik = np.exp(-0.5 * (z - Y[:, 0]) ** 2)
        w = w * lik / np.sum(w * lik)  # sequential importance weights
        lw = dpf_step(0, g, lw, np.log(lik))[None]
    assert_allclose(np.exp(lw[0]), w, rtol=1e-10)


def test_identical_priors_give_own_update():
    g = path_graph(2)
    rng = np.random.default_rng(4)
    prior = np.log(rng.dirichlet(np.ones(50)))
    ll = rng.normal(size=50)
    own = prior + ll - logsumexp(prior + ll)
    assert_allclose(dpf_step(1, g, np.stack([prior, prior]), ll), own, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(connected_graphs(max_n=8), st.integers(0, 10**6))
def test_log_domain_matches_linear_domain(g, seed):
    rng = np.random.default_rng(seed)
    W = rng.dirichlet(np.ones(30), size=g.n)
    L = rng.uniform(0.1, 1.0, size=(g.n, 30))
    lin = np.prod(W[None] ** g.mixing[:, :, None], axis=1) * L
    lin /= lin.sum(axis=1, keepdims=True)
    out = dpf_step_all(g, np.log(W), np.log(L))
    assert_allclose(np.exp(out), lin, atol=1e-12)
    for i in range(g.n):
        assert_allclose(dpf_step(i, g, np.log(W), np.log(L[i])), out[i], atol=1e-12)


def test_underflow_raises():
    g = CommGraph.from_edges(1, [])
    with pytest.raises(DegenerateFilter):
        dpf_step(0, g, np.zeros((1, 3)), np.full(3, -np.inf))
    with pytest.raises(DegenerateFilter):
        dpf_step_all(g, np.zeros((1, 3)), np.full((1, 3), -1e6))


# --- consensus filter -------------------------------------------------------------

def test_identical_constant_inputs():
    f = ConsensusFilter(path_graph(4), 2)
    mu = np.tile([1.5, -2.0], (4, 1))
    for _ in range(20):
        assert_allclose(f.step(mu), mu, atol=1e-15)


def test_two_node_average():
    f = ConsensusFilter(path_graph(2), 1)
    mu = np.array([[0.0], [2.0]])
    for _ in range(100):
        r = f.step(mu)
    assert_allclose(r, 1.0, atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(connected_graphs(), st.integers(0, 10**6))
def test_sum_conservation(g, seed):
    mu = np.random.default_rng(seed).normal(size=(g.n, 2))
    f = ConsensusFilter(g, 2)
    for _ in range(10):
        f.step(mu)
        assert_allclose(f.q.sum(axis=0), 0.0, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(connected_graphs(), st.integers(0, 10**6))
def test_geometric_decay(g, seed):
    mu = np.random.default_rng(seed).uniform(size=(g.n, 1))
    f = ConsensusFilter(g, 1)
    rho = f.contraction
    e0 = np.max(np.abs(mu - mu.mean()))
    for k in range(1, 40):
        err = np.max(np.abs(f.step(mu) - mu.mean()))
        # max-norm bound from the 2-norm contraction
        assert err <= np.sqrt(g.n) * rho ** (k - 1) * e0 + 1e-12


def test_beta_bounds():
    g = path_graph(3)
    lam = np.linalg.eigvalsh(g.laplacian)[-1]
    assert ConsensusFilter(g, 1).beta == pytest.approx(0.9 / lam)
    for beta in (0.0, -0.1, 1.0 / lam, 2.0 / lam):
        with pytest.raises(ValueError):
            ConsensusFilter(g, 1, beta)


def test_functional_step_matches_filter():
    g = path_graph(4)
    rng = np.random.default_rng(0)
    f = ConsensusFilter(g, 2)
    q = np.zeros((4, 2))
    for _ in range(5):
        mu = rng.normal(size=(4, 2))
        r = f.step(mu)
        q, r2 = consensus_step(q, g, mu, f.beta)
        assert_allclose(r, r2)
        assert_allclose(f.q, q)


# --- flooding ---------------------------------------------------------------------

def test_flood_rounds():
    assert flood_rounds(10, 6.0, 3.0) == 1
    assert flood_rounds(10, 6.0, 1.0) == 1
    assert flood_rounds(3, 6.0, 6.0) == 2
    assert flood_rounds(4, 1.0, 100.0) == 4
    assert flood_rounds(7, 10.0, np.inf) == 7
    with pytest.raises(ValueError):
        flood_rounds(3, 0.0, 1.0)


def test_one_round_knows_neighbours():
    g = path_graph(4)
    known = flood_states(g, ["a", "b", "c", "d"], r_c=6.0, r_s=3.0)
    assert known[1] == ["a", "b", "c", None]
    assert known[0] == ["a", "b", None, None]


def test_three_node_path_two_rounds():
    g = path_graph(3)
    states = [np.array([0.0, 0.0]), np.array([5.0, 0.0]), np.array([10.0, 0.0])]
    known = flood_states(g, states, r_c=6.0, r_s=6.0)
    assert known[0][2] is states[2]
    one_round = flood_states(g, states, r_c=6.0, r_s=3.0)
    assert one_round[0][2] is None


@settings(max_examples=30, deadline=None)
@given(connected_graphs(max_n=10))
def test_infinite_radius_floods_everything(g):
    known = flood_states(g, list(range(g.n)), r_c=1.0, r_s=np.inf)
    assert all(row == list(range(g.n)) for row in known)
