"""Linearly convergent iteration ``x <- A(c, x)``, ``c_i <- C_i(x)`` and its
quantized counterpart with a geometrically shrinking grid.

Also hosts the closed-form budget formulas (gain, effective rate, iterations
and total bits to reach a target accuracy).
"""
from __future__ import annotations

import csv
import io
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import (
    Divergent,
    EmptyRange,
    GridOverflow,
    InvalidEps,
    InvalidSigma,
    NonFiniteState,
)
from .quantizer import MAX_BITS, GridSpec, quantize

FLOAT_BITS = 64
# errors below this multiple of eps * max(1, ||x*||) are rounding noise
NOISE_FLOOR_ULPS = 1024
TRACE_HEADER = ("k", "err", "r_k", "bits_cum", "t_seconds")


class AlgorithmModel(ABC):
    """An algorithm ``x+ = A(c, x)`` with communicated messages ``c_i = C_i(x)``.

    Subclasses supply the maps, the norm in which ``x -> A(C(x), x)``
    contracts, and the constants ``sigma``, ``lip_A``, ``lip_C``.  Messages are
    handled as ``(N, d)`` arrays, one row per node.
    """

    n_nodes: int
    dim: int
    sigma: float
    lip_A: float
    lip_C: float
    fixed_point: Optional[np.ndarray] = None

    @abstractmethod
    def apply(self, c: np.ndarray, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def extract(self, i: int, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def norm(self, x: np.ndarray) -> float: ...

    def extract_all(self, x) -> np.ndarray:
        return np.stack([np.asarray(self.extract(i, x), dtype=float).reshape(self.dim)
                         for i in range(self.n_nodes)])

    def step(self, x) -> np.ndarray:
        return self.apply(self.extract_all(x), x)

    def initial_state(self) -> np.ndarray:
        raise NotImplementedError

    def random_state(self, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
        """A random point of the state set, used for sampling-based checks."""
        raise NotImplementedError

    def random_direction(self, rng: np.random.Generator) -> np.ndarray:
        """A random unit direction that keeps states inside the state set."""
        raise NotImplementedError

    def error(self, x) -> Optional[float]:
        if self.fixed_point is None:
            return None
        return self.norm(np.asarray(x) - self.fixed_point)

    @property
    def gain(self) -> float:
        return contraction_gain(self.lip_A, self.lip_C, self.sigma)


# --- closed-form budgets -------------------------------------------------


def _check_sigma(sigma: float) -> None:
    if not 0.0 < sigma < 1.0:
        raise InvalidSigma(f"sigma must lie in (0, 1), got {sigma}")


def contraction_gain(lip_A: float, lip_C: float, sigma: float) -> float:
    """``K = max(1, 2 L_A L_C / sigma)``."""
    _check_sigma(sigma)
    return max(1.0, 2.0 * lip_A * lip_C / sigma)


def alpha(b: int, K: float, sigma: float) -> float:
    """Effective contraction factor of the ``b``-bit quantized iteration."""
    if b < 1:
        raise ValueError(f"bits must be positive, got {b}")
    return K / float(2**b - 1) + sigma


def min_bits(K: float, sigma: float) -> int:
    """Smallest ``b`` for which ``alpha(b) < 1``."""
    _check_sigma(sigma)
    b = 1
    while alpha(b, K, sigma) >= 1.0:
        b += 1
    return b


def radius_schedule(k: int, K: float, lip_A: float, alpha_value: float, D: float) -> float:
    return (K / lip_A) * alpha_value ** (k + 1) * D


def iterations_to_eps(b: int, K: float, sigma: float, D: float, eps: float) -> float:
    """Iteration count after which the error is guaranteed below ``eps`` (real valued)."""
    a = alpha(b, K, sigma)
    if a >= 1.0:
        raise Divergent(f"alpha({b}) = {a:.6g} >= 1; need at least {min_bits(K, sigma)} bits",
                        min_bits=min_bits(K, sigma))
    if not 0.0 < eps <= D:
        raise InvalidEps(f"eps must lie in (0, D={D}], got {eps}")
    return math.log(D / eps) / (1.0 - a)


def total_bits(b: int, K: float, sigma: float, D: float, eps: float) -> float:
    """Bits per dimension and node sent until ``eps`` accuracy is guaranteed."""
    return b * iterations_to_eps(b, K, sigma, D, eps)


def optimal_bits(K: float, sigma: float, D: float, eps: float, b_max: int) -> int:
    lo = min_bits(K, sigma)
    if b_max < lo:
        raise EmptyRange(f"b_max={b_max} is below the minimum usable width {lo}")
    costs = [(total_bits(b, K, sigma, D, eps), b) for b in range(lo, b_max + 1)]
    return min(costs)[1]


def bound_from_first_step(step_norm: float, sigma: float) -> float:
    """Convert ``||x1 - x0||`` into a bound on ``||x0 - x*||``."""
    _check_sigma(sigma)
    return step_norm / (1.0 - sigma)


# --- traces -------------------------------------------------------------


@dataclass(frozen=True)
class TraceRecord:
    k: int
    err: Optional[float]
    r_k: Optional[float]
    bits_cum: int
    t_seconds: Optional[float] = None


@dataclass(frozen=True)
class RunTrace:
    records: tuple
    status: str = "ok"
    bits: int = FLOAT_BITS
    alpha: Optional[float] = None
    guaranteed: bool = True
    D: Optional[float] = None
    states: Optional[tuple] = None
    max_containment: float = 0.0
    max_precision: float = 0.0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    @property
    def errors(self) -> np.ndarray:
        return np.array([np.nan if r.err is None else r.err for r in self.records])

    @property
    def radii(self) -> np.ndarray:
        return np.array([np.nan if r.r_k is None else r.r_k for r in self.records])

    @property
    def times(self) -> np.ndarray:
        return np.array([np.nan if r.t_seconds is None else r.t_seconds for r in self.records])

    def envelope_violations(self, rtol: float = 1e-9, atol: Optional[float] = None) -> list:
        """Iterations where the error exceeds ``alpha**k * D``.

        ``atol`` defaults to the run's rounding floor (``meta["noise_floor"]``),
        below which double precision cannot follow the envelope.
        """
        if self.alpha is None or self.D is None:
            return []
        atol = self.meta.get("noise_floor", 0.0) if atol is None else atol
        return [r.k for r in self.records
                if r.err is not None and r.err > max(self.alpha**r.k * self.D * (1.0 + rtol), atol)]

    def first_below(self, eps: float) -> Optional[int]:
        for r in self.records:
            if r.err is not None and r.err <= eps:
                return r.k
        return None

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in self.records:
            w.writerow([r.k, _fmt(r.err), _fmt(r.r_k), r.bits_cum, _fmt(r.t_seconds)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def with_times(self, times) -> "RunTrace":
        recs = tuple(replace(r, t_seconds=float(t)) for r, t in zip(self.records, times))
        return replace(self, records=recs)


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


# --- run loops ----------------------------------------------------------


@dataclass
class QuantizedRunConfig:
    bits: int
    horizon: int
    D: float
    gain: Optional[float] = None
    alpha_override: Optional[float] = None
    x0: Optional[np.ndarray] = None
    seed: int = 0
    keep_states: bool = False

    def __post_init__(self):
        if not 1 <= self.bits <= MAX_BITS:
            raise ValueError(f"bits must lie in [1, {MAX_BITS}], got {self.bits}")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if not self.D > 0:
            raise ValueError("D must be positive")
        if self.alpha_override is not None and not 0.0 < self.alpha_override < 1.0:
            raise ValueError("alpha_override must lie in (0, 1)")


def _check_finite(x, k):
    if not np.all(np.isfinite(x)):
        raise NonFiniteState(f"non-finite iterate at k={k}")


def noise_floor(model: AlgorithmModel) -> float:
    scale = 1.0 if model.fixed_point is None else max(1.0, model.norm(model.fixed_point))
    return NOISE_FLOOR_ULPS * np.finfo(float).eps * scale


def run_exact(model: AlgorithmModel, x0=None, horizon: int = 100, keep_states: bool = False) -> RunTrace:
    """Unquantized iteration; messages are charged as 64-bit floats."""
    x = np.array(model.initial_state() if x0 is None else x0, dtype=float)
    _check_finite(x, 0)
    per_iter = model.n_nodes * model.dim * FLOAT_BITS
    records = [TraceRecord(0, model.error(x), None, 0)]
    states = [x.copy()] if keep_states else None
    c = model.extract_all(x)
    for k in range(horizon):
        x = model.apply(c, x)
        _check_finite(x, k + 1)
        c = model.extract_all(x)
        records.append(TraceRecord(k + 1, model.error(x), None, (k + 1) * per_iter))
        if keep_states:
            states.append(x.copy())
    return RunTrace(records=tuple(records), bits=FLOAT_BITS, alpha=model.sigma,
                    states=None if states is None else tuple(states),
                    meta={"noise_floor": noise_floor(model)})


def run_quantized(model: AlgorithmModel, cfg: QuantizedRunConfig) -> RunTrace:
    """Run the ``b``-bit quantized iteration with the shrinking-grid radius.

    Grid ``i`` at iteration ``k`` is centred at the last decoded message
    ``q_i`` and has radius ``r_k = (K / L_A) alpha**(k+1) D``.  A message that
    falls outside its grid raises :class:`GridOverflow` carrying the partial
    trace.
    """
    K = model.gain if cfg.gain is None else cfg.gain
    b = cfg.bits
    a_thm = alpha(b, K, model.sigma)
    a = a_thm if cfg.alpha_override is None else cfg.alpha_override
    guaranteed = cfg.alpha_override is None and a_thm < 1.0
    levels = float(2**b - 1)

    x = np.array(model.initial_state() if cfg.x0 is None else cfg.x0, dtype=float)
    _check_finite(x, 0)
    c = model.extract_all(x)
    q = c.copy()
    per_iter = model.n_nodes * model.dim * b
    radius = lambda k: radius_schedule(k, K, model.lip_A, a, cfg.D)

    records = [TraceRecord(0, model.error(x), radius(0), 0)]
    states = [x.copy()] if cfg.keep_states else None
    max_cont = 0.0
    max_prec = 0.0

    def partial(status):
        return RunTrace(records=tuple(records), status=status, bits=b, alpha=a,
                        guaranteed=guaranteed, D=cfg.D,
                        states=None if states is None else tuple(states),
                        max_containment=max_cont, max_precision=max_prec,
                        meta={"gain": K, "lip_A": model.lip_A, "sigma": model.sigma,
                              "noise_floor": noise_floor(model)})

    for k in range(cfg.horizon):
        r = radius(k)
        x = model.apply(q, x)
        _check_finite(x, k + 1)
        c = model.extract_all(x)
        dev = np.abs(c - q)
        max_cont = max(max_cont, float(dev.max()) / r)
        try:
            msg = quantize(c.ravel(), GridSpec(q.ravel(), r, b))
        except GridOverflow as exc:
            node = int(np.argmax(dev.max(axis=1)))
            raise GridOverflow(f"iteration {k + 1}, node {node}: {exc}",
                               iteration=k + 1, node=node, trace=partial("overflow")) from None
        q = msg.value.reshape(c.shape)
        max_prec = max(max_prec, float(np.abs(c - q).max()) * levels / r)
        records.append(TraceRecord(k + 1, model.error(x), radius(k + 1), (k + 1) * per_iter))
        if cfg.keep_states:
            states.append(x.copy())
    return partial("ok")
