"""Command-line harness: ``adaptquant {run,sweep-bits,ttc,retrans}``.

Exit codes: 0 success, 2 configuration or input error, 3 grid overflow,
4 bit width too small for the contraction to hold.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import channel as ch
from .algorithms import DecentralizedGD, DualDecomposition, ProjectedDecentralizedGD, recommended_bits
from .config import ExperimentConfig, load_config
from .errors import AdaptQuantError, ConfigError, Divergent, GridOverflow
from .framework import (
    QuantizedRunConfig,
    alpha,
    bound_from_first_step,
    iterations_to_eps,
    min_bits,
    optimal_bits,
    run_quantized,
)
from .graph import random_geometric_graph, read_edgelist
from .problems import LogisticProblem, QuadraticProblem, bound_D, load_csv, synthetic_dataset

SWEEP_BITS_HEADER = ("b", "k_eps", "B_eps", "T_eps", "empirical_bits", "argmin")
RETRANS_HEADER = ("p", "LB", "UB", "sim_mean", "ci_low", "ci_high", "m", "success_rate")

EXIT_OK, EXIT_CONFIG, EXIT_OVERFLOW, EXIT_DIVERGENT = 0, 2, 3, 4


# --- building blocks from a config ----------------------------------------


class Experiment:
    """Problem, model and derived constants for one configuration."""

    def __init__(self, cfg: ExperimentConfig, base_dir: Path = Path(".")):
        self.cfg = cfg
        self.base_dir = base_dir
        self.problem = self._problem()
        self.graph = None
        self.model = self._model()
        self.K = self.model.gain
        self.sigma = self.model.sigma
        self.D = self._distance_bound()

    def _path(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def _problem(self):
        pr = self.cfg.problem
        seed = self.cfg.seed if pr.seed is None else pr.seed
        if pr.kind == "quadratic":
            return QuadraticProblem.random(pr.n_nodes, pr.dim, pr.mu, pr.L, seed=seed)
        if pr.kind == "synthetic":
            V, y = synthetic_dataset(pr.m, pr.dim, seed=seed)
        else:
            V, y = load_csv(self._path(pr.path))
        return LogisticProblem(V, y, pr.rho, pr.n_nodes)

    def _model(self):
        name = self.cfg.algorithm.name
        if name == "gd":
            return DecentralizedGD(self.problem)
        if name == "pgd":
            return ProjectedDecentralizedGD(self.problem)
        topo = self.cfg.topology
        if topo.kind == "edgelist":
            self.graph = read_edgelist(self._path(topo.path))
        else:
            seed = self.cfg.seed if topo.seed is None else topo.seed
            self.graph = random_geometric_graph(self.problem.n_nodes, topo.radius, seed=seed)
        return DualDecomposition(self.problem, self.graph)

    def _distance_bound(self) -> float:
        if self.cfg.algorithm.D is not None:
            return self.cfg.algorithm.D
        if isinstance(self.model, ProjectedDecentralizedGD):
            return self.model.D
        x0 = self.model.initial_state()
        if isinstance(self.problem, LogisticProblem) and not isinstance(self.model, DualDecomposition):
            return bound_D(self.problem, x0)
        step = self.model.norm(self.model.step(x0) - x0)
        return bound_from_first_step(step, self.sigma)

    @property
    def link_count(self) -> int:
        if self.cfg.channel.link_count is not None:
            return self.cfg.channel.link_count
        return self.graph.link_count if self.graph is not None else self.model.n_nodes

    @property
    def rate_model(self):
        c = self.cfg.channel
        if c.rate == "constant":
            return ch.ConstantRate(c.C)
        if c.rate == "finite_blocklength":
            return ch.FiniteBlocklengthRate(c.C, c.V)
        return ch.BellShapeRate(c.max_rate, c.A)

    def bits(self) -> int:
        b = self.cfg.algorithm.bits
        if isinstance(b, int):
            return b
        if b == "auto":
            if isinstance(self.model, DualDecomposition):
                return optimal_bits(self.K, self.sigma, self.D, self.cfg.algorithm.eps, 64)
            return recommended_bits(max(self.model.kappa, 2.0), self.model.dim,
                                    projected=isinstance(self.model, ProjectedDecentralizedGD))
        raise ConfigError("a bit sweep is only valid for sweep-bits, ttc and retrans")

    def bit_range(self):
        rng = self.cfg.bit_range()
        if rng:
            return rng
        sw = self.cfg.sweep
        lo = sw.b_min if sw.b_min is not None else min_bits(self.K, self.sigma)
        return lo, max(lo, sw.b_max)

    def k_eps(self, b):
        return iterations_to_eps(b, self.K, self.sigma, self.D, self.cfg.algorithm.eps)


# --- output helpers -----------------------------------------------------


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row.get(h)) for h in header])


def _out_dir(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _json_ready(v):
    if isinstance(v, (np.floating, float)):
        return None if not math.isfinite(v) else float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


# --- subcommands ----------------------------------------------------------


def cmd_run(exp: Experiment) -> int:
    cfg = exp.cfg
    b = exp.bits()
    a_thm = alpha(b, exp.K, exp.sigma)
    if a_thm >= 1.0 and cfg.algorithm.alpha is None:
        need = min_bits(exp.K, exp.sigma)
        raise Divergent(f"b={b} gives alpha={a_thm:.6g} >= 1; need at least min_bits={need}", min_bits=need)
    c = cfg.channel
    packet = ch.PacketSpec(b, exp.model.dim, c.theta, c.p, exp.link_count)
    policy = ch.UntilSuccess()
    k_eps = exp.k_eps(b) if a_thm < 1.0 else None
    if c.policy == "fixed_rounds":
        m = 1
        if c.p > 0 and k_eps is not None:
            m = ch.fixed_rounds(b, c.p, packet.link_count, exp.K, exp.sigma, exp.D, cfg.algorithm.eps,
                                c.delta, exp.rate_model, c.theta, exp.model.dim)[0]
        policy = ch.FixedRounds(m)
    run_cfg = QuantizedRunConfig(bits=b, horizon=cfg.algorithm.horizon, D=exp.D, gain=exp.K,
                                 alpha_override=cfg.algorithm.alpha, seed=cfg.seed)
    out = _out_dir(cfg)
    try:
        trace = ch.simulate_lossy_run(exp.model, run_cfg, packet, policy, exp.rate_model, seed=cfg.seed)
    except GridOverflow as exc:
        if exc.trace is not None:
            exc.trace.to_csv(out / "trace.csv")
        raise
    trace.to_csv(out / "trace.csv")
    errs = trace.errors
    summary = {
        "status": trace.status,
        "bits": b,
        "alpha": a_thm,
        "alpha_used": trace.alpha,
        "K": exp.K,
        "sigma": exp.sigma,
        "D": exp.D,
        "min_bits": min_bits(exp.K, exp.sigma),
        "k_eps": k_eps,
        "B_eps": None if k_eps is None else b * k_eps,
        "T_eps": None if k_eps is None else k_eps * ch.delay(exp.rate_model, packet.n, c.p),
        "envelope_held": bool(trace.guaranteed and not trace.envelope_violations()) if not np.all(np.isnan(errs)) else None,
        "final_err": None if np.isnan(errs[-1]) else float(errs[-1]),
        "iterations": len(trace) - 1,
    }
    summary = {k: _json_ready(v) for k, v in summary.items()}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for k in sorted(summary):
        print(f"{k}: {summary[k]}")
    return EXIT_OK


def _empirical_bits(exp: Experiment, b: int):
    """``b * (first iteration with error <= eps)`` for a quantized run."""
    k_eps = exp.k_eps(b)
    cfg = QuantizedRunConfig(bits=b, horizon=math.ceil(k_eps) + 1, D=exp.D, gain=exp.K)
    k = run_quantized(exp.model, cfg).first_below(exp.cfg.algorithm.eps)
    return None if k is None else b * k


def sweep_bits_rows(exp: Experiment):
    lo, hi = exp.bit_range()
    c = exp.cfg.channel
    rows = []
    for b in range(lo, hi + 1):
        row = {"b": b, "argmin": 0}
        if alpha(b, exp.K, exp.sigma) < 1.0:
            k = exp.k_eps(b)
            row.update(k_eps=k, B_eps=b * k,
                       T_eps=k * ch.delay(exp.rate_model, b * exp.model.dim + c.theta, c.p))
        rows.append(row)
    valid = [r for r in rows if "B_eps" in r]
    if not valid:
        need = min_bits(exp.K, exp.sigma)
        raise Divergent(f"no width in {lo}..{hi} converges; need at least min_bits={need}", min_bits=need)
    min(valid, key=lambda r: (r["B_eps"], r["b"]))["argmin"] = 1
    if exp.cfg.sweep.empirical and exp.model.fixed_point is not None:
        with ThreadPoolExecutor() as pool:
            results = list(pool.map(lambda r: _empirical_bits(exp, r["b"]), valid))
        for r, bits in zip(valid, results):
            r["empirical_bits"] = bits
    return rows


def cmd_sweep_bits(exp: Experiment) -> int:
    rows = sweep_bits_rows(exp)
    write_csv(_out_dir(exp.cfg) / "sweep_bits.csv", SWEEP_BITS_HEADER, rows)
    best = next(r for r in rows if r["argmin"])
    print(f"optimal b = {best['b']} with B_eps = {best['B_eps']:.6g}")
    return EXIT_OK


def cmd_ttc(exp: Experiment) -> int:
    lo, hi = exp.bit_range()
    c = exp.cfg.channel
    rows = ch.sweep_rows(range(lo, hi + 1), c.theta, exp.model.dim, c.p, exp.link_count,
                         exp.K, exp.sigma, exp.D, exp.cfg.algorithm.eps, exp.rate_model)
    write_csv(_out_dir(exp.cfg) / "ttc.csv", ch.SWEEP_HEADER, rows)
    timed = [r for r in rows if r["T_eps"] is not None]
    if timed:
        best = min(timed, key=lambda r: (r["T_eps"], r["b"]))
        print(f"fastest b = {best['b']} with T_eps = {best['T_eps']:.6g} s")
    return EXIT_OK


def retrans_rows(exp: Experiment, replicas: int):
    cfg, c = exp.cfg, exp.cfg.channel
    rng = exp.cfg.bit_range()
    b = optimal_bits(exp.K, exp.sigma, exp.D, cfg.algorithm.eps, rng[1]) if rng else exp.bits()
    k_eps = exp.k_eps(b)
    k = math.ceil(k_eps)
    n = b * exp.model.dim + c.theta
    L = exp.link_count
    rows = []
    for idx, p in enumerate(c.p_grid):
        lb, ub = ch.until_success_bounds(b, c.theta, exp.model.dim, p, L, exp.K, exp.sigma, exp.D,
                                         cfg.algorithm.eps, exp.rate_model)
        row = {"p": p, "LB": lb, "UB": ub}
        seed = [cfg.seed, idx]
        if replicas > 0:
            # E[T] = k_eps * delay * E[M]; E[M] is estimated from k iterations per replica
            scale = k_eps * ch.delay(exp.rate_model, n, p) / k
            totals = ch.simulate_round_totals(k, L, p, replicas, seed=seed) * scale
            row["sim_mean"] = float(np.mean(totals))
            if replicas > 1:
                row["ci_low"], row["ci_high"] = ch.bootstrap_mean_ci(totals, seed=seed)
        if c.policy == "fixed_rounds":
            m, _ = ch.fixed_rounds(b, p, L, exp.K, exp.sigma, exp.D, cfg.algorithm.eps, c.delta,
                                   exp.rate_model, c.theta, exp.model.dim)
            row["m"] = m
            if replicas > 0:
                row["success_rate"] = float(np.mean(ch.fixed_rounds_success(k, m, L, p, replicas, seed=seed)))
        rows.append(row)
    return rows


def cmd_retrans(exp: Experiment, replicas=None) -> int:
    replicas = exp.cfg.channel.replicas if replicas is None else replicas
    rows = retrans_rows(exp, replicas)
    write_csv(_out_dir(exp.cfg) / "retrans.csv", RETRANS_HEADER, rows)
    print(f"wrote {len(rows)} rows")
    return EXIT_OK


# --- entry point ----------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment file")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--replicas", type=int, help="Monte Carlo replicas (retrans)")
    parser = argparse.ArgumentParser(prog="adaptquant", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("run", "single quantized run with trace"),
                       ("sweep-bits", "iterations and bits to eps across bit widths"),
                       ("ttc", "transmission time to eps across bit widths"),
                       ("retrans", "retransmission bounds and Monte Carlo")):
        sub.add_parser(name, parents=[common], help=text)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.config is not None:
            cfg = load_config(args.config)
            base = args.config.parent
        else:
            cfg, base = ExperimentConfig(), Path(".")
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg = replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = replace(cfg, out=str(args.out))
        if args.replicas is not None and args.replicas < 0:
            raise ConfigError("--replicas must be non-negative")
        exp = Experiment(cfg, base)
        if args.command == "run":
            return cmd_run(exp)
        if args.command == "sweep-bits":
            return cmd_sweep_bits(exp)
        if args.command == "ttc":
            return cmd_ttc(exp)
        return cmd_retrans(exp, args.replicas)
    except GridOverflow as exc:
        print(f"grid overflow: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW
    except Divergent as exc:
        print(f"divergent: {exc}", file=sys.stderr)
        return EXIT_DIVERGENT
    except (AdaptQuantError, OSError, ValueError) as exc:
        # bad config, unreadable inputs, infeasible operating points
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
