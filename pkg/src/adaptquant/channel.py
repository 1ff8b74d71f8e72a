"""Transmission-time layer: rate models, per-iteration delay, and the cost of
retransmitting lost packets.

A packet of ``n = b*d + theta`` bits travels at ``R(n, p)`` bits/second, so
one iteration takes ``delay = n / R(n, p)`` seconds when nothing is lost.
With per-link loss probability ``p`` an iteration takes ``M`` rounds, where
``M`` is the largest of ``|L|`` independent geometric variables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np
from scipy import stats
from scipy.special import erfc

from .errors import DegenerateP, Divergent, DomainError, NonPositiveRate
from .framework import (
    QuantizedRunConfig,
    RunTrace,
    alpha,
    iterations_to_eps,
    min_bits,
    run_quantized,
)

SWEEP_HEADER = ("b", "theta", "p", "rate_model", "k_eps", "T_eps", "LB", "UB", "rho")


# --- rate models --------------------------------------------------------


def q_function(x):
    """Gaussian tail probability ``P(Z > x)``."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def q_inverse(p: float) -> float:
    """Solve ``Q(x) = p`` by bisection."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"Q^-1 needs p in (0, 1), got {p}")
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if q_function(mid) > p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class ConstantRate:
    C: float

    name = "constant"

    def __call__(self, n, p=0.0):
        return self.C


@dataclass(frozen=True)
class FiniteBlocklengthRate:
    """``C - sqrt(V / n) Q^{-1}(p)``; the ``O(log n / n)`` term is dropped."""

    C: float
    V: float

    name = "finite_blocklength"

    def __call__(self, n, p=0.0):
        return self.C - math.sqrt(self.V / n) * q_inverse(p)


@dataclass(frozen=True)
class BellShapeRate:
    """``max_rate * (n/A) * exp(1 - n/A)``, peaking at ``n = A``.

    The defaults give ``(n/5) exp(-n/5)``.
    """

    max_rate: float = math.exp(-1.0)
    A: float = 5.0

    name = "bell"

    def __call__(self, n, p=0.0):
        u = n / self.A
        return self.max_rate * u * math.exp(1.0 - u)


RateModel = Union[ConstantRate, FiniteBlocklengthRate, BellShapeRate]


def rate(model: RateModel, n: float, p: float = 0.0) -> float:
    if n < 1:
        raise ValueError(f"packet must carry at least one bit, got n={n}")
    if not 0.0 <= p < 1.0:
        raise DomainError(f"failure probability must lie in [0, 1), got {p}")
    value = model(n, p)
    if not value > 0:
        raise NonPositiveRate(f"{model.name} rate is {value:.6g} at n={n}, p={p}")
    return float(value)


def delay(model: RateModel, n: float, p: float = 0.0) -> float:
    """Seconds needed to push one ``n``-bit packet."""
    return n / rate(model, n, p)


# --- packets and policies -----------------------------------------------


@dataclass(frozen=True)
class PacketSpec:
    bits: int
    dim: int
    theta: float = 0.0
    p: float = 0.0
    link_count: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("packet size must be at least one bit")
        if not 0.0 <= self.p < 1.0:
            raise DomainError(f"failure probability must lie in [0, 1), got {self.p}")
        if self.link_count < 1:
            raise ValueError("need at least one link")

    @property
    def n(self) -> float:
        return self.bits * self.dim + self.theta

    @classmethod
    def affine_overhead(cls, bits, dim, slope, offset, p=0.0, link_count=1):
        """Overhead ``theta = slope * (b d) + offset``."""
        return cls(bits, dim, slope * bits * dim + offset, p, link_count)


@dataclass(frozen=True)
class UntilSuccess:
    pass


@dataclass(frozen=True)
class FixedRounds:
    m: int


# --- transmission-time formulas -----------------------------------------


def _packet_bits(b, theta, d):
    return b * d + theta


def time_rate_rho(b, theta, d, K, sigma, model: RateModel, p: float = 0.0) -> float:
    """Linear rate per second, ``alpha(b) ** (R(n)/n)``."""
    a = alpha(b, K, sigma)
    if a >= 1.0:
        raise Divergent(f"alpha({b}) = {a:.6g} >= 1", min_bits=min_bits(K, sigma))
    n = _packet_bits(b, theta, d)
    return a ** (rate(model, n, p) / n)


def time_to_eps(b, theta, d, K, sigma, D, eps, model: RateModel, p: float = 0.0) -> float:
    """Seconds of loss-free transmission until ``eps`` accuracy is guaranteed."""
    return iterations_to_eps(b, K, sigma, D, eps) * delay(model, _packet_bits(b, theta, d), p)


def round_factor_bounds(link_count: int, p: float):
    """Lower and upper bounds on the expected number of rounds per iteration."""
    if p == 0.0:
        raise DegenerateP("p = 0: every packet arrives in one round")
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    inv = math.log(1.0 / p)
    ln_l = math.log(link_count)
    return ln_l / inv, (1.0 + ln_l) / inv + 1.0


def until_success_bounds(b, theta, d, p, link_count, K, sigma, D, eps, model: RateModel):
    """Bounds ``(LB, UB)`` on the expected time when every packet is resent until delivered."""
    lo, hi = round_factor_bounds(link_count, p)
    base = time_to_eps(b, theta, d, K, sigma, D, eps, model, p)
    return base * lo, base * hi


def fixed_rounds(b, p, link_count, K, sigma, D, eps, delta, model: RateModel = None, theta=0.0, d=1):
    """Rounds per iteration that make all of the first ``ceil(k_eps)``
    iterations succeed with probability at least ``delta``.

    Returns ``(m, T)`` with ``T = k_eps * delay * m`` seconds.  Without a rate
    model a unit-rate channel is assumed (``delay = n``).
    """
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta must lie in [0, 1), got {delta}")
    if p == 0.0:
        raise DegenerateP("p = 0: a single round always suffices")
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    k_eps = iterations_to_eps(b, K, sigma, D, eps)
    k = math.ceil(k_eps)
    m = math.ceil(link_count * k / ((1.0 - delta) * math.log(1.0 / p)))
    n = _packet_bits(b, theta, d)
    step = n if model is None else delay(model, n, p)
    return m, k_eps * step * m


# --- retransmission sampling ---------------------------------------------


def sample_retransmissions(link_count: int, p: float, seed=None) -> int:
    """Rounds until every one of ``link_count`` links has delivered once."""
    if not 0.0 <= p < 1.0:
        raise DomainError(f"p must lie in [0, 1), got {p}")
    rng = np.random.default_rng(seed)
    return int(rng.geometric(1.0 - p, size=link_count).max())


def sample_max_rounds(link_count: int, p: float, rng: np.random.Generator, size) -> np.ndarray:
    """Vectorised draws of the same variable by inverting
    ``P(M <= m) = (1 - p**m) ** link_count``."""
    if p == 0.0:
        return np.ones(size, dtype=np.int64)
    u = rng.random(size)
    # 1 - u**(1/L), computed without cancellation
    tail = -np.expm1(np.log(u) / link_count)
    m = np.ceil(np.log(tail) / math.log(p))
    return np.maximum(m, 1).astype(np.int64)


def expected_rounds(link_count: int, p: float, tol: float = 1e-17) -> float:
    """``E[M] = sum_{m >= 0} P(M > m)`` summed until the terms vanish."""
    if p == 0.0:
        return 1.0
    total, m = 1.0, 1
    while True:
        term = -math.expm1(link_count * math.log1p(-(p**m)))
        total += term
        if term < tol:
            return total
        m += 1


def _batches(total: int, batch: int):
    sizes = [batch] * (total // batch)
    if total % batch:
        sizes.append(total % batch)
    return sizes


def simulate_round_totals(iterations: int, link_count: int, p: float, replicas: int,
                          seed=None, batch: int = 4096) -> np.ndarray:
    """Total rounds over ``iterations`` iterations, one entry per replica.

    Replicas are drawn in batches with child seeds spawned from ``seed`` so
    the result does not depend on how batches are scheduled.
    """
    sizes = _batches(replicas, batch)
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    out = [sample_max_rounds(link_count, p, np.random.default_rng(ss), (sz, iterations)).sum(axis=1)
           for ss, sz in zip(children, sizes)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def fixed_rounds_success(iterations: int, m: int, link_count: int, p: float, trials: int,
                         seed=None, batch: int = 4096) -> np.ndarray:
    """Per trial, whether every link delivered within ``m`` rounds at every iteration."""
    sizes = _batches(trials, batch)
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    out = [(sample_max_rounds(link_count, p, np.random.default_rng(ss), (sz, iterations)) <= m).all(axis=1)
           for ss, sz in zip(children, sizes)]
    return np.concatenate(out) if out else np.zeros(0, dtype=bool)


def bootstrap_mean_ci(samples, level: float = 0.99, n_resamples: int = 2000, seed=None):
    res = stats.bootstrap((np.asarray(samples, dtype=float),), np.mean, confidence_level=level,
                          n_resamples=n_resamples, method="percentile", vectorized=True,
                          batch=100, random_state=np.random.default_rng(seed))
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


# --- lossy runs ---------------------------------------------------------


def simulate_lossy_run(model, cfg: QuantizedRunConfig, packet: PacketSpec,
                       policy=UntilSuccess(), rate_model: RateModel = None, seed=None) -> RunTrace:
    """Quantized run with a wall-clock axis under packet loss.

    Iterates do not depend on the channel (the algorithm is synchronous), so
    the time axis is sampled after the run.  Under :class:`FixedRounds` the
    first iteration with an undelivered packet ends the run with status
    ``"failed"``.
    """
    trace = run_quantized(model, cfg)
    step = delay(rate_model or ConstantRate(1.0), packet.n, packet.p)
    rng = np.random.default_rng(seed)
    iters = len(trace.records) - 1
    rounds = sample_max_rounds(packet.link_count, packet.p, rng, iters)
    if isinstance(policy, FixedRounds):
        failed = np.flatnonzero(rounds > policy.m)
        times = step * policy.m * np.arange(iters + 1)
        if failed.size:
            stop = int(failed[0]) + 1  # iteration that could not complete
            trace = replace(trace, records=trace.records[:stop], status="failed",
                            states=None if trace.states is None else trace.states[:stop])
            times = times[:stop]
        return replace(trace.with_times(times), meta={**trace.meta, "rounds": policy.m, "delay": step})
    times = step * np.concatenate(([0], np.cumsum(rounds)))
    return replace(trace.with_times(times), meta={**trace.meta, "rounds": rounds.tolist(), "delay": step})


# --- sweeps -------------------------------------------------------------


def sweep_rows(b_values, theta, d, p, link_count, K, sigma, D, eps, model: RateModel):
    """One dict per ``b`` with the columns of :data:`SWEEP_HEADER`.

    Widths with ``alpha(b) >= 1`` get empty budget fields.  For ``p = 0`` the
    bounds collapse to the deterministic time.
    """
    rows = []
    for b in b_values:
        row = dict(b=b, theta=theta, p=p, rate_model=model.name,
                   k_eps=None, T_eps=None, LB=None, UB=None, rho=None)
        try:
            row["k_eps"] = iterations_to_eps(b, K, sigma, D, eps)
            row["T_eps"] = time_to_eps(b, theta, d, K, sigma, D, eps, model, p)
            row["rho"] = time_rate_rho(b, theta, d, K, sigma, model, p)
            if p == 0.0:
                row["LB"] = row["UB"] = row["T_eps"]
            else:
                row["LB"], row["UB"] = until_success_bounds(b, theta, d, p, link_count, K, sigma, D, eps, model)
        except (Divergent, NonPositiveRate):
            pass
        rows.append(row)
    return rows
