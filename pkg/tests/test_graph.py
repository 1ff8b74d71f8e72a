import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptquant.errors import ConnectivityError, ConnectivityTimeout, NoConvergence, NotInImage, ParseError, RankDeficiency
from adaptquant.graph import (
    GraphSpec,
    SpectralData,
    complete_graph,
    eig_sym,
    laplacian,
    m_norm,
    path_graph,
    random_geometric_graph,
    read_edgelist,
    sqrt_factor,
    write_edgelist,
)


def test_p2_laplacian_and_spectrum():
    W = laplacian(path_graph(2))
    np.testing.assert_array_equal(W, [[1, -1], [-1, 1]])
    s = eig_sym(W)
    np.testing.assert_allclose(s.eigenvalues, [2.0, 0.0], atol=1e-14)


def test_k3_spectrum():
    s = eig_sym(laplacian(complete_graph(3)))
    np.testing.assert_allclose(s.eigenvalues, [3.0, 3.0, 0.0], atol=1e-13)


@pytest.mark.parametrize("n", [2, 4, 7])
def test_complete_graph_extremes(n):
    s = eig_sym(laplacian(complete_graph(n)))
    assert s.lambda_max == pytest.approx(n)
    assert s.lambda_min_plus == pytest.approx(n)


def test_diagonal_closed_form():
    D = np.diag([5.0, -1.0, 2.0, 0.5])
    s = eig_sym(D + 1e-3 * np.eye(4))
    np.testing.assert_allclose(s.eigenvalues, [5.001, 2.001, 0.501, -0.999], atol=1e-14)


def test_disconnected_rejected():
    with pytest.raises(ConnectivityError):
        GraphSpec(4, ((0, 1), (2, 3)))
    with pytest.raises(ValueError):
        GraphSpec(3, ((0, 0), (1, 2)))
    with pytest.raises(ValueError):
        GraphSpec(3, ((0, 3),))


def test_edges_normalised():
    g = GraphSpec(3, ((1, 0), (0, 1), (2, 1)))
    assert g.edges == ((0, 1), (1, 2))
    assert g.link_count == 4
    assert g.neighbors() == [[1], [0, 2], [1]]


def test_no_convergence():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(12, 12))
    with pytest.raises(NoConvergence):
        eig_sym(A + A.T, max_sweeps=1)


def test_rank_deficiency():
    s = SpectralData(np.array([2.0, 0.0, 0.0]), np.eye(3))
    with pytest.raises(RankDeficiency):
        sqrt_factor(s)


def _random_connected(seed, n):
    rng = np.random.default_rng(seed)
    edges = [(i, int(rng.integers(i))) for i in range(1, n)]  # random tree
    extra = rng.integers(0, n, size=(n, 2))
    edges += [(int(a), int(b)) for a, b in extra if a != b]
    return GraphSpec(n, tuple(edges))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 25))
def test_spectral_invariants(seed, n):
    g = _random_connected(seed, n)
    W = laplacian(g)
    np.testing.assert_allclose(W.sum(axis=1), 0.0, atol=1e-12)
    s = eig_sym(W)
    assert np.all(np.diff(s.eigenvalues) <= 0)
    np.testing.assert_allclose(s.eigenvalues, np.linalg.eigvalsh(W)[::-1], atol=1e-10 * n)
    recon = s.Q @ np.diag(s.eigenvalues) @ s.Q.T
    assert np.linalg.norm(recon - W) <= 1e-10 * n * s.lambda_max
    np.testing.assert_allclose(s.Q.T @ s.Q, np.eye(n), atol=1e-12)
    assert np.count_nonzero(s.zero_mask) == 1
    null = s.Q[:, s.zero_mask][:, 0]
    np.testing.assert_allclose(np.abs(null), 1 / np.sqrt(n), atol=1e-10)

    f = sqrt_factor(s)
    np.testing.assert_allclose(f.A_bar.T @ f.A_bar, W, atol=1e-9)
    np.testing.assert_allclose(f.M @ f.A_bar.T, np.eye(n - 1), atol=1e-9)


def test_p2_factor_and_norm():
    f = sqrt_factor(eig_sym(laplacian(path_graph(2))))
    np.testing.assert_allclose(np.abs(f.A_bar), [[1.0, 1.0]], atol=1e-14)
    np.testing.assert_allclose(f.A_bar[0, 0] * f.A_bar[0, 1], -1.0, atol=1e-14)
    np.testing.assert_allclose(np.abs(f.M), [[0.5, 0.5]], atol=1e-14)
    assert m_norm(np.array([1.0, -1.0]), f) == pytest.approx(1.0)
    assert m_norm(np.zeros(2), f) == 0.0
    with pytest.raises(NotInImage):
        m_norm(np.array([1.0, 1.0]), f)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 15), d=st.integers(1, 4))
def test_m_norm_axioms(seed, n, d):
    rng = np.random.default_rng(seed)
    g = _random_connected(seed, n)
    W = laplacian(g)
    f = sqrt_factor(eig_sym(W))
    x = W @ rng.normal(size=(n, d))
    y = W @ rng.normal(size=(n, d))
    nx, ny = m_norm(x, f), m_norm(y, f)
    assert nx > 0
    c = rng.normal()
    assert m_norm(c * x, f) == pytest.approx(abs(c) * nx, rel=1e-12)
    assert m_norm(x + y, f) <= nx + ny + 1e-12
    # equivalence with the 2-norm
    assert nx <= f.M1 * np.linalg.norm(x) * (1 + 1e-12)
    assert np.linalg.norm(x) <= f.M2 * nx * (1 + 1e-12)


def test_geometric_graph():
    g = random_geometric_graph(20, 0.3, seed=1)
    assert g == random_geometric_graph(20, 0.3, seed=1)
    # regression pin
    assert len(g.edges) == 36
    s = eig_sym(laplacian(g))
    assert s.lambda_max == pytest.approx(7.535, abs=1e-3)
    assert s.lambda_min_plus == pytest.approx(0.0941, abs=1e-4)
    full = random_geometric_graph(6, 1.5, seed=0)
    assert full.edges == complete_graph(6).edges
    with pytest.raises(ConnectivityTimeout):
        random_geometric_graph(5, 0.0, seed=0, max_tries=20)


def test_edgelist_roundtrip(tmp_path):
    g = random_geometric_graph(12, 0.5, seed=4)
    p = tmp_path / "g.txt"
    write_edgelist(g, p)
    assert read_edgelist(p) == g
    assert p.read_text().splitlines()[0] == "12"


@pytest.mark.parametrize("text,line", [("", 1), ("x\n", 1), ("3\n0 1\n1\n", 3), ("3\n0 1\n1 b\n", 3)])
def test_edgelist_errors(tmp_path, text, line):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(ParseError) as info:
        read_edgelist(p)
    assert info.value.line == line
