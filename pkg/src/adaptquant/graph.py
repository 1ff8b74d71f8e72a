"""Graph Laplacians, a cyclic Jacobi eigensolver and the dual-space M-norm.

Stacked node vectors are stored as ``(N, d)`` arrays.  ``W (x) I_d`` acting on
such an array is simply ``W @ X``, so the Kronecker product is never formed.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConnectivityError,
    ConnectivityTimeout,
    NoConvergence,
    NotInImage,
    ParseError,
    RankDeficiency,
)

ZERO_EIG_RTOL = 1e-9
IMAGE_RTOL = 1e-8


@dataclass(frozen=True)
class GraphSpec:
    n: int
    edges: tuple

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise ValueError("graph needs at least one node")
        clean = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) references a node outside 0..{n - 1}")
            clean.add((min(i, j), max(i, j)))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", tuple(sorted(clean)))
        if not _is_connected(n, self.edges):
            raise ConnectivityError(f"graph on {n} nodes with {len(self.edges)} edges is disconnected")

    def neighbors(self) -> list[list[int]]:
        nbrs = [[] for _ in range(self.n)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return nbrs

    @property
    def link_count(self) -> int:
        """Directed sender/receiver pairs used when every node talks to its neighbours."""
        return 2 * len(self.edges)


def _is_connected(n: int, edges) -> bool:
    nbrs = [[] for _ in range(n)]
    for i, j in edges:
        nbrs[i].append(j)
        nbrs[j].append(i)
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in nbrs[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == n


def path_graph(n: int) -> GraphSpec:
    return GraphSpec(n, tuple((i, i + 1) for i in range(n - 1)))


def complete_graph(n: int) -> GraphSpec:
    return GraphSpec(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def laplacian(g: GraphSpec) -> np.ndarray:
    W = np.zeros((g.n, g.n))
    for i, j in g.edges:
        W[i, j] = W[j, i] = -1.0
        W[i, i] += 1.0
        W[j, j] += 1.0
    return W


@dataclass(frozen=True)
class SpectralData:
    """Eigen-decomposition ``W = Q diag(eigenvalues) Q^T``, eigenvalues descending."""

    eigenvalues: np.ndarray
    Q: np.ndarray

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def zero_mask(self) -> np.ndarray:
        lam = self.eigenvalues
        return lam < ZERO_EIG_RTOL * max(lam[0], 0.0)

    @property
    def lambda_min_plus(self) -> float:
        """Smallest eigenvalue above the zero threshold (algebraic connectivity)."""
        return float(self.eigenvalues[~self.zero_mask][-1])

    @property
    def condition(self) -> float:
        return self.lambda_max / self.lambda_min_plus


def eig_sym(W, max_sweeps: int = 100, tol: float = 1e-15) -> SpectralData:
    """Symmetric eigen-decomposition by cyclic Jacobi rotations.

    Rotations are applied in a fixed row-by-row order, so the result is
    reproducible bit for bit.  Eigenvector signs are normalised so that the
    first entry with non-negligible magnitude is positive.
    """
    A = np.array(W, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("eig_sym needs a square matrix")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max(initial=0.0))):
        raise ValueError("eig_sym needs a symmetric matrix")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    scale = np.linalg.norm(A)
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(A, 1) ** 2))
        if off <= tol * scale or scale == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                ap = A[:, p].copy()
                aq = A[:, q]
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :]
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q]
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")

    lam = np.diag(A).copy()
    order = np.argsort(-lam, kind="stable")
    lam = lam[order]
    V = V[:, order]
    for k in range(n):
        col = V[:, k]
        lead = np.flatnonzero(np.abs(col) > 1e-8)
        if lead.size and col[lead[0]] < 0:
            V[:, k] = -col
    # clean rounding noise on the null space of PSD inputs
    lam[np.abs(lam) < 1e-13 * max(scale, 1.0)] = 0.0
    return SpectralData(eigenvalues=lam, Q=V)


@dataclass(frozen=True)
class SqrtFactor:
    """Non-zero rows of ``sqrt(Lambda) Q^T`` and the left inverse map ``M``.

    Both act per dimension on ``(N, d)`` stacked arrays.
    """

    A_bar: np.ndarray
    M: np.ndarray
    spectral: SpectralData

    @property
    def M1(self) -> float:
        """``||M||_2``; bounds the M-norm by the 2-norm."""
        return 1.0 / np.sqrt(self.spectral.lambda_min_plus)

    @property
    def M2(self) -> float:
        """``||A_bar^T||_2``; bounds the 2-norm by the M-norm."""
        return np.sqrt(self.spectral.lambda_max)

    def image_residual(self, x) -> float:
        x = _as_stacked(x, self.A_bar.shape[1])
        Qp = self.spectral.Q[:, ~self.spectral.zero_mask]
        return float(np.linalg.norm(x - Qp @ (Qp.T @ x)))


def sqrt_factor(s: SpectralData) -> SqrtFactor:
    keep = ~s.zero_mask
    if np.count_nonzero(~keep) > 1:
        raise RankDeficiency(f"{np.count_nonzero(~keep)} zero eigenvalues; graph is not connected")
    lam = s.eigenvalues[keep]
    Qp = s.Q[:, keep]
    A_bar = np.sqrt(lam)[:, None] * Qp.T
    # A_bar A_bar^T = diag(lam), so (A_bar A_bar^T)^{-1} A_bar is a row scaling
    M = (1.0 / np.sqrt(lam))[:, None] * Qp.T
    return SqrtFactor(A_bar=A_bar, M=M, spectral=s)


def _as_stacked(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(n, -1)
    if x.shape[0] != n:
        raise ValueError(f"expected {n} node blocks, got array of shape {x.shape}")
    return x


def m_norm(x, factor: SqrtFactor, atol: float = 0.0) -> float:
    """``||M x||_2`` for ``x`` in the image of the Laplacian.

    ``atol`` admits an absolute null-space residual, for differences of
    nearly equal states where cancellation leaves pure rounding noise.
    """
    x = _as_stacked(x, factor.M.shape[1])
    size = np.linalg.norm(x)
    if factor.image_residual(x) > max(IMAGE_RTOL * size, atol):
        raise NotInImage("vector has a component along the Laplacian null space")
    return float(np.linalg.norm(factor.M @ x))


def random_geometric_graph(n: int, radius: float, seed=None, max_tries: int = 1000) -> GraphSpec:
    """Uniform points in the unit square, joined when closer than ``radius``.

    Resamples until the graph is connected.
    """
    if n < 2:
        raise ValueError("random geometric graph needs at least two nodes")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    for _ in range(max_tries):
        pts = rng.random((n, 2))
        dist = np.linalg.norm(pts[iu] - pts[ju], axis=1)
        mask = dist < radius
        edges = tuple(zip(iu[mask].tolist(), ju[mask].tolist()))
        if _is_connected(n, edges):
            return GraphSpec(n, edges)
    raise ConnectivityTimeout(f"no connected graph with N={n}, radius={radius} after {max_tries} draws")


def read_edgelist(path) -> GraphSpec:
    lines = Path(path).read_text().splitlines()
    rows = [(k + 1, ln.split()) for k, ln in enumerate(lines) if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise ParseError("empty edge-list file", line=1)
    lineno, head = rows[0]
    try:
        n = int(head[0])
    except (ValueError, IndexError):
        raise ParseError(f"expected node count, got {' '.join(head)!r}", line=lineno) from None
    edges = []
    for lineno, parts in rows[1:]:
        if len(parts) != 2:
            raise ParseError(f"expected 'i j', got {' '.join(parts)!r}", line=lineno)
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ParseError(f"non-integer node id in {' '.join(parts)!r}", line=lineno) from None
    return GraphSpec(n, tuple(edges))


def write_edgelist(g: GraphSpec, path) -> None:
    body = "\n".join(f"{i} {j}" for i, j in g.edges)
    Path(path).write_text(f"{g.n}\n{body}\n" if body else f"{g.n}\n")
