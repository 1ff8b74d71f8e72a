"""Objective functions split across nodes: l2-regularised logistic regression
and quadratics with a closed-form optimum.

``F = sum_i f_i``.  Each problem exposes the global value/gradient/Hessian,
per-node functions via ``node(i)``, the strong convexity ``mu`` of ``F`` and
per-node constants ``node_mu`` / ``node_L`` valid for every ``f_i``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatch, NegativeObjective, NonFiniteState, ParseError


def _finite(z):
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise NonFiniteState("objective evaluated at a non-finite point")
    return z


@dataclass(frozen=True)
class LogisticNode:
    V: np.ndarray
    y: np.ndarray
    m_total: int
    reg: float  # coefficient of ||z||^2 / 2 held by this node

    def value(self, z) -> float:
        z = _finite(z)
        t = self.y * (self.V @ z)
        return float(np.logaddexp(0.0, -t).sum() / self.m_total + 0.5 * self.reg * z @ z)

    def grad(self, z) -> np.ndarray:
        z = _finite(z)
        t = self.y * (self.V @ z)
        w = -self.y * expit(-t)
        return self.V.T @ w / self.m_total + self.reg * z

    def hess(self, z) -> np.ndarray:
        z = _finite(z)
        t = self.y * (self.V @ z)
        s = expit(t) * expit(-t)
        return (self.V.T * s) @ self.V / self.m_total + self.reg * np.eye(z.size)

    @property
    def mu(self) -> float:
        return self.reg

    @property
    def L(self) -> float:
        return self.reg + float(np.sum(self.V * self.V)) / (4.0 * self.m_total)


class LogisticProblem:
    """``F(z) = (1/m) sum_j log(1 + exp(-y_j z.v_j)) + (rho/2)||z||^2``.

    Rows are split into ``n_nodes`` contiguous shards.  Every node divides its
    loss by the global ``m`` and carries ``rho / N`` of the regulariser, so the
    node functions sum exactly to ``F``.
    """

    def __init__(self, features, labels, rho: float, n_nodes: int = 1):
        V = np.asarray(features, dtype=float)
        y = np.asarray(labels, dtype=float).reshape(-1)
        if V.ndim != 2 or V.shape[0] != y.size:
            raise ValueError("features must be (m, d) with one label per row")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        if rho <= 0:
            raise ValueError("rho must be positive")
        if not 1 <= n_nodes <= y.size:
            raise ValueError("need between 1 and m nodes")
        self.V, self.y, self.rho = V, y, float(rho)
        self.m, self.dim = V.shape
        self.n_nodes = n_nodes
        self.shards = np.array_split(np.arange(self.m), n_nodes)
        self._global = LogisticNode(V, y, self.m, self.rho)
        self.nodes = [LogisticNode(V[s], y[s], self.m, self.rho / n_nodes) for s in self.shards]

    def value(self, z) -> float:
        return self._global.value(z)

    def grad(self, z) -> np.ndarray:
        return self._global.grad(z)

    def hess(self, z) -> np.ndarray:
        return self._global.hess(z)

    def node(self, i: int) -> LogisticNode:
        return self.nodes[i]

    @property
    def mu(self) -> float:
        return self.rho

    @property
    def smoothness_V(self) -> float:
        return float(np.sum(self.V * self.V)) / (4.0 * self.m)

    @property
    def L(self) -> float:
        return self.rho + self.smoothness_V

    @property
    def node_mu(self) -> float:
        return self.rho / self.n_nodes

    @property
    def node_L(self) -> float:
        return max(nd.L for nd in self.nodes)

    def optimum(self, tol: float = 1e-13, max_iter: int = 100) -> np.ndarray:
        return newton_minimize(self, np.zeros(self.dim), tol=tol, max_iter=max_iter)


@dataclass(frozen=True)
class QuadraticNode:
    H: np.ndarray
    g: np.ndarray

    def value(self, z) -> float:
        z = _finite(z)
        return float(0.5 * z @ self.H @ z + self.g @ z)

    def grad(self, z) -> np.ndarray:
        return self.H @ _finite(z) + self.g

    def hess(self, z) -> np.ndarray:
        return self.H

    @property
    def mu(self) -> float:
        return float(np.linalg.eigvalsh(self.H)[0])

    @property
    def L(self) -> float:
        return float(np.linalg.eigvalsh(self.H)[-1])


class QuadraticProblem:
    """``f_i(z) = z.H_i.z / 2 + g_i.z`` with ``x* = -(sum H_i)^{-1} sum g_i``."""

    def __init__(self, hessians, linear):
        H = np.asarray(hessians, dtype=float)
        g = np.asarray(linear, dtype=float)
        if H.ndim != 3 or H.shape[1] != H.shape[2] or g.shape != H.shape[:2]:
            raise ValueError("need hessians (N, d, d) and linear terms (N, d)")
        if not np.allclose(H, np.transpose(H, (0, 2, 1))):
            raise ValueError("hessians must be symmetric")
        self.H, self.g = H, g
        self.n_nodes, self.dim = g.shape
        self.nodes = [QuadraticNode(H[i], g[i]) for i in range(self.n_nodes)]
        eig = np.linalg.eigvalsh(H)
        if eig[:, 0].min() <= 0:
            raise ValueError("every node hessian must be positive definite")
        self.node_mu = float(eig[:, 0].min())
        self.node_L = float(eig[:, -1].max())
        total = np.linalg.eigvalsh(H.sum(axis=0))
        self.mu, self.L = float(total[0]), float(total[-1])

    def value(self, z) -> float:
        return sum(nd.value(z) for nd in self.nodes)

    def grad(self, z) -> np.ndarray:
        return self.H.sum(axis=0) @ _finite(z) + self.g.sum(axis=0)

    def hess(self, z) -> np.ndarray:
        return self.H.sum(axis=0)

    def node(self, i: int) -> QuadraticNode:
        return self.nodes[i]

    def optimum(self) -> np.ndarray:
        return np.linalg.solve(self.H.sum(axis=0), -self.g.sum(axis=0))

    @classmethod
    def random(cls, n_nodes: int, dim: int, mu: float = 1.0, L: float = 10.0, seed=None):
        """Random node hessians with spectra in ``[mu, L]``; both ends are attained."""
        rng = np.random.default_rng(seed)
        Hs = []
        for _ in range(n_nodes):
            Q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
            lam = rng.uniform(mu, L, size=dim)
            lam[0] = mu
            if dim > 1:
                lam[-1] = L
            Hs.append((Q * lam) @ Q.T)
        H = np.array(Hs)
        H = 0.5 * (H + np.transpose(H, (0, 2, 1)))
        return cls(H, rng.normal(size=(n_nodes, dim)))


def newton_minimize(fn, z0, tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
    """Damped Newton for a smooth strongly convex function with value/grad/hess."""
    z = np.array(z0, dtype=float)
    for _ in range(max_iter):
        g = fn.grad(z)
        if np.linalg.norm(g) <= tol:
            return z
        step = np.linalg.solve(fn.hess(z), g)
        t, f0, slope = 1.0, fn.value(z), g @ step
        while fn.value(z - t * step) > f0 - 0.25 * t * slope and t > 1e-12:
            t *= 0.5
        z = z - t * step
    return z


def synthetic_dataset(m: int, d: int, seed=None):
    """Two Gaussian clouds at ``+1`` and ``-1`` (all coordinates), unit variance.

    Returns ``(features, labels)``.
    """
    if m < 1 or d < 1:
        raise ValueError("m and d must be positive")
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(m) < 0.5, 1.0, -1.0)
    V = y[:, None] + rng.normal(size=(m, d))
    return V, y


def load_csv(path):
    """Read rows ``y,v_1,...,v_d`` with ``y`` in ``{-1, 1}``.

    Blank lines and lines starting with ``#`` are skipped.  Returns
    ``(features, labels)``.
    """
    rows, labels = [], []
    d = None
    with open(Path(path), newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise ParseError(f"non-numeric field in {row!r}", line=lineno) from None
            if vals[0] not in (-1.0, 1.0):
                raise ParseError(f"label must be -1 or 1, got {row[0].strip()!r}", line=lineno)
            if len(vals) < 2:
                raise ParseError("row has a label but no features", line=lineno)
            if d is None:
                d = len(vals) - 1
            elif len(vals) - 1 != d:
                raise DimensionMismatch(f"expected {d} features, got {len(vals) - 1}", line=lineno)
            if not all(math.isfinite(v) for v in vals):
                raise ParseError("non-finite value", line=lineno)
            labels.append(vals[0])
            rows.append(vals[1:])
    if not rows:
        raise ParseError("no data rows", line=None)
    return np.array(rows), np.array(labels)


def bound_D(problem, x0) -> float:
    """Distance bound ``sqrt((2 / mu) F(x0))``, valid when ``F >= 0`` everywhere."""
    f0 = problem.value(x0)
    if f0 < 0:
        raise NegativeObjective(f"F(x0) = {f0:.6g} < 0; the bound needs a non-negative objective")
    return math.sqrt(2.0 * f0 / problem.mu)
