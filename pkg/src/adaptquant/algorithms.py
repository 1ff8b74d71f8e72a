"""Concrete linearly convergent algorithms: master/worker gradient descent,
its projected variant on the unit box, and dual decomposition over a graph.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import EmptySample, InnerSolverFailure, KappaTooSmall, NotInImage
from .framework import AlgorithmModel
from .graph import IMAGE_RTOL, GraphSpec, eig_sym, laplacian, m_norm, sqrt_factor

INNER_TOL = 1e-10
INNER_MAX_ITER = 100
# rounding allowance when measuring differences of O(1) dual states
NORM_ATOL = 1e-12


def _unit(v):
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


class DecentralizedGD(AlgorithmModel):
    """``x+ = x - gamma * sum_i c_i`` with ``c_i = grad f_i(x)``.

    With the default step ``2 / (N (mu + L))`` the contraction factor is
    ``1 - 2 / (kappa + 1)``.  ``L_A = gamma N sqrt(d)`` and ``L_C = L``.
    """

    def __init__(self, problem, gamma=None, fixed_point="auto"):
        self.problem = problem
        self.n_nodes = problem.n_nodes
        self.dim = problem.dim
        self.mu = problem.node_mu
        self.L = problem.node_L
        self.kappa = self.L / self.mu
        N = self.n_nodes
        self.gamma = 2.0 / (N * (self.mu + self.L)) if gamma is None else float(gamma)
        if gamma is None:
            self.sigma = 1.0 - 2.0 / (self.kappa + 1.0)
        else:
            self.sigma = max(abs(1.0 - self.gamma * N * self.mu), abs(1.0 - self.gamma * N * self.L))
        self.lip_A = self.gamma * N * math.sqrt(self.dim)
        self.lip_C = self.L
        if isinstance(fixed_point, str):
            fixed_point = problem.optimum() if hasattr(problem, "optimum") else None
        self.fixed_point = None if fixed_point is None else np.asarray(fixed_point, dtype=float)

    def apply(self, c, x):
        c = np.asarray(c, dtype=float).reshape(self.n_nodes, self.dim)
        return np.asarray(x, dtype=float) - self.gamma * c.sum(axis=0)

    def extract(self, i, x):
        return self.problem.node(i).grad(x)

    def norm(self, x):
        return float(np.linalg.norm(x))

    def initial_state(self):
        return np.zeros(self.dim)

    def random_state(self, rng, scale=1.0):
        return rng.normal(size=self.dim) * scale

    def random_direction(self, rng):
        if rng.random() < 0.5:
            e = np.zeros(self.dim)
            e[rng.integers(self.dim)] = 1.0
            return e
        return _unit(rng.normal(size=self.dim))

    def objective(self, x) -> float:
        return self.problem.value(x)


class ProjectedDecentralizedGD(DecentralizedGD):
    """Gradient step followed by clipping to ``[0, 1]^d``.

    Uses ``gamma = 1 / (N L)`` for which the factor is ``sqrt(1 - 1/kappa)``;
    the box diameter ``sqrt(d)`` serves as the distance bound ``D``.
    """

    def __init__(self, problem, gamma=None, fixed_point="auto"):
        N = problem.n_nodes
        step = 1.0 / (N * problem.node_L) if gamma is None else gamma
        super().__init__(problem, gamma=step, fixed_point=None)
        if gamma is None:
            self.sigma = math.sqrt(1.0 - 1.0 / self.kappa)
        if isinstance(fixed_point, str):
            fixed_point = self._solve_fixed_point()
        self.fixed_point = None if fixed_point is None else np.asarray(fixed_point, dtype=float)

    @property
    def D(self) -> float:
        return math.sqrt(self.dim)

    def apply(self, c, x):
        return np.clip(super().apply(c, x), 0.0, 1.0)

    def initial_state(self):
        return np.full(self.dim, 0.5)

    def random_state(self, rng, scale=1.0):
        return rng.random(self.dim)

    def _solve_fixed_point(self, tol=1e-15, max_iter=100_000):
        x = self.initial_state()
        for _ in range(max_iter):
            nxt = self.step(x)
            if np.max(np.abs(nxt - x)) <= tol:
                return nxt
            x = nxt
        return x


class DualDecomposition(AlgorithmModel):
    """Dual gradient ascent on the consensus constraint ``(W (x) I) c = 0``.

    State ``x`` is an ``(N, d)`` array of dual variables kept inside the image
    of the Laplacian; node ``i`` sends ``c_i = argmin f_i(c) + <c, x_i>``.
    Contraction holds in the M-norm with factor ``1 - 2/(kappa_W + 1)``,
    ``kappa_W = lambda_max L / (mu lambda_min^+)``.

    ``L_A`` and ``L_C`` default to the bounds ``gamma sqrt(lambda_max N d)``
    and ``sqrt(lambda_max) / mu``; pass ``lipschitz=(L_A, L_C)`` to override
    (for instance with :func:`estimate_lipschitz`).
    """

    def __init__(self, problem, graph: GraphSpec, gamma=None, lipschitz=None, fixed_point="auto"):
        if graph.n != problem.n_nodes:
            raise ValueError(f"graph has {graph.n} nodes, problem has {problem.n_nodes}")
        self.problem = problem
        self.graph = graph
        self.n_nodes = problem.n_nodes
        self.dim = problem.dim
        self.W = laplacian(graph)
        self.spectral = eig_sym(self.W)
        self.factor = sqrt_factor(self.spectral)
        lam_max = self.spectral.lambda_max
        lam_min = self.spectral.lambda_min_plus
        self.mu = problem.node_mu
        self.L = problem.node_L
        self.kappa = lam_max * self.L / (self.mu * lam_min)
        self.gamma = (2.0 * self.L * self.mu / (self.mu * lam_min + self.L * lam_max)
                      if gamma is None else float(gamma))
        self.sigma = 1.0 - 2.0 / (self.kappa + 1.0)
        if lipschitz is None:
            self.lip_A = self.gamma * math.sqrt(lam_max * self.n_nodes * self.dim)
            self.lip_C = math.sqrt(lam_max) / self.mu
        else:
            self.lip_A, self.lip_C = map(float, lipschitz)
        if isinstance(fixed_point, str):
            fixed_point = self._dual_optimum()
        self.fixed_point = None if fixed_point is None else np.asarray(fixed_point, dtype=float)

    def _dual_optimum(self):
        if not hasattr(self.problem, "optimum"):
            return None
        z = self.problem.optimum()
        return -np.stack([self.problem.node(i).grad(z) for i in range(self.n_nodes)])

    def _check_image(self, x):
        if self.factor.image_residual(x) > IMAGE_RTOL * max(np.linalg.norm(x), 1e-300):
            raise NotInImage("dual state left the image of the Laplacian")

    def apply(self, c, x):
        x = np.asarray(x, dtype=float).reshape(self.n_nodes, self.dim)
        self._check_image(x)
        c = np.asarray(c, dtype=float).reshape(self.n_nodes, self.dim)
        return x + self.gamma * (self.W @ c)

    def extract(self, i, x):
        x = np.asarray(x, dtype=float).reshape(self.n_nodes, self.dim)
        return local_argmin(self.problem.node(i), x[i])

    def norm(self, x):
        return m_norm(np.asarray(x).reshape(self.n_nodes, self.dim), self.factor, atol=NORM_ATOL)

    def initial_state(self):
        return np.zeros((self.n_nodes, self.dim))

    def random_state(self, rng, scale=1.0):
        return self.W @ rng.normal(size=(self.n_nodes, self.dim)) * scale

    def random_direction(self, rng):
        z = np.zeros((self.n_nodes, self.dim))
        if rng.random() < 0.5:
            z[rng.integers(self.n_nodes), rng.integers(self.dim)] = 1.0
        else:
            z = rng.normal(size=z.shape)
        return _unit(self.W @ z)

    def consensus_residual(self, c) -> float:
        return float(np.linalg.norm(self.W @ np.asarray(c).reshape(self.n_nodes, self.dim)))

    def primal(self, x) -> np.ndarray:
        return self.extract_all(x)


def local_argmin(fn, shift, start=None, tol=INNER_TOL, max_iter=INNER_MAX_ITER):
    """Minimise ``fn(c) + <c, shift>`` by damped Newton.

    Once the gradient norm is below ``tol`` one more undamped Newton step is
    taken, which puts smooth problems at rounding level.
    """
    shift = np.asarray(shift, dtype=float)
    c = np.zeros_like(shift) if start is None else np.array(start, dtype=float)
    obj = lambda z: fn.value(z) + shift @ z
    for _ in range(max_iter):
        g = fn.grad(c) + shift
        if np.linalg.norm(g) <= tol:
            break
        step = np.linalg.solve(fn.hess(c), g)
        f0, slope = obj(c), g @ step
        t = 1.0
        while obj(c - t * step) > f0 - 1e-4 * t * slope and t > 1e-8:
            t *= 0.5
        c = c - t * step
    else:
        raise InnerSolverFailure(
            f"inner solve stalled at gradient norm {np.linalg.norm(fn.grad(c) + shift):.3e}")
    return c - np.linalg.solve(fn.hess(c), fn.grad(c) + shift)


def _message_perturbation(rng, n, d):
    kind = rng.integers(3)
    if kind == 0:
        # same sign pattern at every node: worst case for summing updates
        return np.tile(rng.choice([-1.0, 1.0], size=d), (n, 1))
    if kind == 1:
        return rng.choice([-1.0, 1.0], size=(n, d))
    return rng.normal(size=(n, d))


def estimate_lipschitz(model: AlgorithmModel, sample_count: int = 200, seed=None, safety: float = 2.0):
    """Sampled estimates of ``L_A`` and ``L_C``, inflated by ``safety``.

    ``L_A`` is the largest observed ``||A(c1, x) - A(c2, x)|| / ||c1 - c2||_inf``
    and ``L_C`` the largest ``||C(x1) - C(x2)||_inf / ||x1 - x2||``.
    """
    if sample_count < 1:
        raise EmptySample("need at least one sample pair")
    rng = np.random.default_rng(seed)
    N, d = model.n_nodes, model.dim
    la = lc = 0.0
    for _ in range(sample_count):
        x = model.random_state(rng)
        c1 = rng.normal(size=(N, d))
        dc = _message_perturbation(rng, N, d) * 10.0 ** rng.uniform(-3, 0)
        num = model.norm(model.apply(c1, x) - model.apply(c1 + dc, x))
        la = max(la, num / np.abs(dc).max())

        u = model.random_direction(rng) * 10.0 ** rng.uniform(-3, 0)
        x2 = x + u
        den = model.norm(x2 - x)
        if den > 0:
            diff = np.abs(model.extract_all(x) - model.extract_all(x2)).max()
            lc = max(lc, diff / den)
    return safety * la, safety * lc


def recommended_bits(kappa: float, d: int, projected: bool = False) -> int:
    """Bit width that keeps the quantized gradient method within a constant
    factor of its unquantized rate.

    ``ceil(log2(24 (kappa+1) sqrt(d)))``, or ``ceil(log2(16 kappa sqrt(2d)))``
    for the projected variant.
    """
    if kappa < 2:
        raise KappaTooSmall(f"kappa={kappa} < 2; use 2 as an upper bound instead")
    if projected:
        return math.ceil(math.log2(16.0 * kappa * math.sqrt(2.0 * d)))
    return math.ceil(math.log2(24.0 * (kappa + 1.0) * math.sqrt(d)))
