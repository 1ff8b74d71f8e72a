import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptquant.algorithms import (
    DecentralizedGD,
    DualDecomposition,
    ProjectedDecentralizedGD,
    estimate_lipschitz,
    local_argmin,
    recommended_bits,
)
from adaptquant.errors import EmptySample, InnerSolverFailure, KappaTooSmall, NotInImage
from adaptquant.framework import QuantizedRunConfig, alpha, min_bits, run_exact, run_quantized
from adaptquant.graph import complete_graph, path_graph, random_geometric_graph
from adaptquant.problems import LogisticProblem, QuadraticNode, QuadraticProblem, synthetic_dataset

from conftest import horizon_to_floor


def _scalar_quadratics(n):
    return QuadraticProblem(np.ones((n, 1, 1)), np.zeros((n, 1)))


def _live_ratios(errors, scale=1.0):
    """Per-step ratios, skipping steps whose error is close enough to the
    rounding level of ``||x*||`` that a 1e-9 comparison becomes meaningless."""
    e = np.asarray(errors)
    live = e[:-1] > 1e-5 * max(1.0, scale)
    assert live.sum() >= 1
    return e[1:][live] / e[:-1][live]


# --- gradient descent -----------------------------------------------------


def test_gd_apply_examples():
    m = DecentralizedGD(_scalar_quadratics(2), gamma=0.25)
    assert m.apply(np.ones((2, 1)), np.array([1.0]))[0] == 0.5
    np.testing.assert_array_equal(m.apply(np.zeros((2, 1)), np.array([0.7])), [0.7])


def test_gd_fixed_point(quad_gd):
    c = quad_gd.extract_all(quad_gd.fixed_point)
    np.testing.assert_allclose(c.sum(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(quad_gd.step(quad_gd.fixed_point), quad_gd.fixed_point, atol=1e-13)


def test_gd_constants():
    H = np.where(np.arange(20) % 2 == 0, 1.0, 3.0).reshape(20, 1, 1)
    m = DecentralizedGD(QuadraticProblem(H, np.ones((20, 1))))
    assert m.gamma == pytest.approx(2 / (20 * 4))
    assert m.sigma == pytest.approx(0.5)
    assert m.lip_A == pytest.approx(0.5)
    assert m.lip_C == pytest.approx(3.0)
    assert m.gain == pytest.approx(6.0)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 20), d=st.integers(1, 30), kappa=st.floats(1.5, 50))
def test_gd_contraction(seed, n, d, kappa):
    prob = QuadraticProblem.random(n, d, mu=1.0, L=kappa, seed=seed)
    m = DecentralizedGD(prob)
    sigma = 1 - 2 / (m.kappa + 1)
    assert m.sigma == pytest.approx(sigma)
    x0 = np.random.default_rng(seed).normal(size=d) * 5
    tr = run_exact(m, x0=x0, horizon=min(horizon_to_floor(sigma), 400))
    assert np.all(_live_ratios(tr.errors, np.linalg.norm(m.fixed_point)) <= sigma + 1e-9)


def test_pgd_box_and_rate():
    prob = QuadraticProblem.random(6, 4, mu=1.0, L=8.0, seed=2)
    prob.g[:] *= 20.0  # push the unconstrained optimum out of the box
    prob = QuadraticProblem(prob.H, prob.g)
    m = ProjectedDecentralizedGD(prob)
    assert m.sigma == pytest.approx(math.sqrt(1 - 1 / m.kappa))
    assert m.D == 2.0
    tr = run_exact(m, horizon=300, keep_states=True)
    for s in tr.states:
        assert np.all((s >= 0) & (s <= 1))
    assert np.all(_live_ratios(tr.errors, np.linalg.norm(m.fixed_point)) <= m.sigma + 1e-9)
    assert np.any((m.fixed_point == 0) | (m.fixed_point == 1))


def test_pgd_clamps():
    m = ProjectedDecentralizedGD(_scalar_quadratics(2), gamma=0.25)
    assert m.apply(np.array([[0.4], [0.4]]), np.array([0.5]))[0] == pytest.approx(0.3)
    assert m.apply(np.array([[-10.0], [0.0]]), np.array([0.5]))[0] == 1.0
    assert m.apply(np.array([[10.0], [0.0]]), np.array([0.0]))[0] == 0.0


def test_pgd_quantized_within_box():
    prob = QuadraticProblem.random(5, 3, mu=1.0, L=4.0, seed=8)
    m = ProjectedDecentralizedGD(prob)
    b = min_bits(m.gain, m.sigma) + 2
    tr = run_quantized(m, QuantizedRunConfig(bits=b, horizon=horizon_to_floor(alpha(b, m.gain, m.sigma)),
                                             D=m.D, x0=np.full(3, 0.5)))
    assert tr.envelope_violations(atol=0.0) == []


# --- dual decomposition ----------------------------------------------------


def test_dd_apply_examples():
    m = DualDecomposition(_scalar_quadratics(2), path_graph(2), gamma=1.0)
    np.testing.assert_allclose(m.apply(np.array([[1.0], [0.0]]), np.zeros((2, 1))), [[1.0], [-1.0]])
    x = np.array([[0.3], [-0.3]])
    np.testing.assert_allclose(m.apply(np.full((2, 1), 4.0), x), x)
    m0 = DualDecomposition(_scalar_quadratics(2), path_graph(2), gamma=0.0)
    np.testing.assert_array_equal(m0.apply(np.array([[1.0], [5.0]]), x), x)
    with pytest.raises(NotInImage):
        m.apply(np.zeros((2, 1)), np.ones((2, 1)))


def test_local_argmin_closed_forms():
    v = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(local_argmin(QuadraticNode(np.eye(3), np.zeros(3)), v), -v, atol=1e-14)
    H = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 3.0]])
    np.testing.assert_allclose(local_argmin(QuadraticNode(H, np.zeros(3)), v), -np.linalg.solve(H, v), atol=1e-13)


def test_local_argmin_logistic():
    V, y = synthetic_dataset(200, 4, seed=0)
    prob = LogisticProblem(V, y, rho=0.1, n_nodes=4)
    rng = np.random.default_rng(0)
    for i in range(4):
        fn = prob.node(i)
        shift = rng.normal(size=4) * 0.1
        c = local_argmin(fn, shift)
        assert np.linalg.norm(fn.grad(c) + shift) <= 1e-10
        # central differences of the inner objective vanish at the minimiser
        h = 1e-5
        obj = lambda z: fn.value(z) + shift @ z
        fd = np.array([(obj(c + h * e) - obj(c - h * e)) / (2 * h) for e in np.eye(4)])
        assert np.max(np.abs(fd)) < 1e-8


def test_local_argmin_cap():
    V, y = synthetic_dataset(50, 2, seed=1)
    prob = LogisticProblem(V, y, rho=1e-3, n_nodes=1)
    with pytest.raises(InnerSolverFailure):
        local_argmin(prob.node(0), np.array([5.0, -3.0]), max_iter=1)


def _dual_instances():
    yield "P2", QuadraticProblem.random(2, 3, mu=1.0, L=4.0, seed=10), path_graph(2)
    yield "K3", QuadraticProblem.random(3, 3, mu=1.0, L=4.0, seed=11), complete_graph(3)
    yield "RGG20", QuadraticProblem.random(20, 2, mu=1.0, L=2.0, seed=12), random_geometric_graph(20, 0.3, seed=1)


@pytest.mark.parametrize("name,prob,graph", list(_dual_instances()), ids=lambda v: v if isinstance(v, str) else "")
def test_dd_contraction_and_consensus(name, prob, graph):
    m = DualDecomposition(prob, graph)
    s = m.spectral
    kappa_w = s.lambda_max * m.L / (m.mu * s.lambda_min_plus)
    assert m.sigma == pytest.approx(1 - 2 / (kappa_w + 1))
    h = min(horizon_to_floor(m.sigma, 1e-10), 3000)
    tr = run_exact(m, horizon=h, keep_states=True)
    assert np.all(_live_ratios(tr.errors, m.norm(m.fixed_point)) <= m.sigma + 1e-9)
    c = m.extract_all(tr.states[-1])
    assert m.consensus_residual(c) < 1e-6
    np.testing.assert_allclose(c, np.broadcast_to(c[0], c.shape), atol=1e-6)
    np.testing.assert_allclose(c[0], prob.optimum(), atol=1e-6)
    np.testing.assert_allclose(prob.grad(c[0]), 0.0, atol=1e-6)


def test_dd_states_stay_in_image():
    prob = QuadraticProblem.random(20, 2, mu=1.0, L=2.0, seed=12)
    m = DualDecomposition(prob, random_geometric_graph(20, 0.3, seed=1))
    tr = run_exact(m, horizon=50, keep_states=True)
    for x in tr.states:
        assert m.factor.image_residual(x) <= 1e-10 * max(1.0, np.linalg.norm(x))


def _dual_value(m, lam):
    """Dual function at multiplier ``lam``: sum_i min_c f_i(c) + <c, (W lam)_i>."""
    x = m.W @ lam
    return sum(m.problem.node(i).value(c) + c @ x[i] for i, c in enumerate(m.extract_all(x)))


def test_dual_curvature_constants():
    prob = QuadraticProblem.random(8, 2, mu=1.0, L=3.0, seed=4)
    g = random_geometric_graph(8, 0.6, seed=2)
    m = DualDecomposition(prob, g)
    lo = m.spectral.lambda_min_plus / m.L
    hi = m.spectral.lambda_max / m.mu
    rng = np.random.default_rng(0)
    h = 1e-2
    for _ in range(100):
        lam = rng.normal(size=(8, 2))
        u = rng.normal(size=(8, 2))
        u -= u.mean(axis=0)  # drop the null-space part
        quad = float(np.sum(u * (m.W @ u)))
        curv = -(_dual_value(m, lam + h * u) - 2 * _dual_value(m, lam) + _dual_value(m, lam - h * u)) / h**2
        assert lo * (1 - 1e-6) <= curv / quad <= hi * (1 + 1e-6)


def test_dd_quantized_envelope():
    prob = QuadraticProblem.random(20, 2, mu=1.0, L=2.0, seed=12)
    m = DualDecomposition(prob, random_geometric_graph(20, 0.3, seed=1))
    D = m.error(m.initial_state())
    b = min_bits(m.gain, m.sigma) + 2
    a = alpha(b, m.gain, m.sigma)
    tr = run_quantized(m, QuantizedRunConfig(bits=b, horizon=400, D=D))
    assert tr.status == "ok" and tr.guaranteed
    assert tr.envelope_violations(atol=0.0) == []
    assert a < 1


# --- Lipschitz estimates and bit recommendations --------------------------------


def test_estimate_lipschitz_gd():
    prob = QuadraticProblem.random(10, 4, mu=1.0, L=6.0, seed=5)
    m = DecentralizedGD(prob)
    la, lc = estimate_lipschitz(m, sample_count=300, seed=0, safety=1.0)
    assert 0.5 * m.lip_A <= la <= m.lip_A * (1 + 1e-9)
    assert 0.5 * m.lip_C <= lc <= m.lip_C * (1 + 1e-9)
    la2, lc2 = estimate_lipschitz(m, sample_count=300, seed=0)
    assert (la2, lc2) == pytest.approx((2 * la, 2 * lc))
    with pytest.raises(EmptySample):
        estimate_lipschitz(m, sample_count=0)


def test_estimate_lipschitz_dual_below_analytic():
    prob = QuadraticProblem.random(20, 3, mu=1.0, L=2.0, seed=6)
    m = DualDecomposition(prob, random_geometric_graph(20, 0.3, seed=1))
    la, lc = estimate_lipschitz(m, sample_count=200, seed=1, safety=1.0)
    assert la <= m.lip_A * (1 + 1e-9)
    assert lc <= m.lip_C * (1 + 1e-9)
    override = DualDecomposition(prob, m.graph, lipschitz=(2 * la, 2 * lc))
    assert override.lip_A == 2 * la and override.lip_C == 2 * lc


def test_recommended_bits():
    assert recommended_bits(2.0, 1) == 7
    assert recommended_bits(3.0, 4) == 8
    assert recommended_bits(2.0, 1, projected=True) == math.ceil(math.log2(32 * math.sqrt(2)))
    with pytest.raises(KappaTooSmall):
        recommended_bits(1.9, 1)


def test_recommended_bits_keeps_rate():
    # the recommended width keeps alpha within (1 + sigma)/2 of the unquantized rate
    for kappa in (2.0, 5.0, 20.0):
        for d in (2, 4, 16):
            prob = QuadraticProblem.random(4, d, mu=1.0, L=kappa, seed=0)
            m = DecentralizedGD(prob)
            b = recommended_bits(m.kappa, d)
            assert alpha(b, m.gain, m.sigma) < 1.0
