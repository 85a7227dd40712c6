"""CMA-ES and a finite-difference gradient-descent tracer.

The CMA-ES here is the textbook (mu/mu_w, lambda) variant: log-linear
positive recombination weights, cumulative step-size adaptation, and
rank-one plus rank-mu covariance updates, with the usual default learning
rates derived from the dimension and population size.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgument
from .objectives import ObjectiveHandle

DEFAULT_POPULATION = 100
DIVERGENCE_RADIUS = 1e6


@dataclass(frozen=True)
class CmaesConfig:
    population: int = DEFAULT_POPULATION
    sigma0: float = 0.5
    max_evals: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.population < 4:
            raise InvalidArgument("population must be at least 4")
        if not self.sigma0 > 0:
            raise InvalidArgument("sigma0 must be positive")
        if self.max_evals < 1:
            raise InvalidArgument("max_evals must be positive")


@dataclass(frozen=True)
class HistoryPoint:
    evals: int
    best_f: float
    dist: float
    best_x: np.ndarray = field(repr=False, compare=False)


@dataclass
class OptimizerRun:
    best_x: np.ndarray
    best_f: float
    history: list[HistoryPoint]
    config: Optional[CmaesConfig] = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.config is not None:
            for key in ("population", "sigma0", "max_evals", "seed"):
                buf.write(f"# {key}={getattr(self.config, key)!r}\n")
        buf.write(f"# dimension={len(self.best_x)}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["evals", "best_f", "dist"])
        for h in self.history:
            writer.writerow([h.evals, f"{h.best_f:.17g}", f"{h.dist:.17g}"])
        return buf.getvalue()


class _Strategy:
    """Static CMA-ES parameters for a given dimension and population size."""

    def __init__(self, n: int, lam: int):
        self.n, self.lam = n, lam
        self.mu = lam // 2
        raw = math.log((lam + 1) / 2) - np.log(np.arange(1, self.mu + 1))
        self.weights = raw / raw.sum()
        self.mueff = 1.0 / float(np.sum(self.weights ** 2))
        mueff = self.mueff
        self.cs = (mueff + 2) / (n + mueff + 5)
        self.ds = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (n + 1)) - 1) + self.cs
        self.cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
        self.c1 = 2 / ((n + 1.3) ** 2 + mueff)
        self.cmu = min(1 - self.c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))


def _fitness(f: ObjectiveHandle, xs: np.ndarray) -> np.ndarray:
    values = f.evaluate_many(xs)
    return np.where(np.isfinite(values), values, np.inf)


def cmaes_minimize(f: ObjectiveHandle, x0, cfg: CmaesConfig = CmaesConfig()) -> OptimizerRun:
    """Minimize ``f`` (its raw values, whatever its ``sense``) from ``x0``.

    Runs whole generations while the budget allows; the first generation
    always runs. History gets one entry per generation with the best-so-far
    value and its distance to ``f.known_optimum`` (NaN when unknown).
    """
    mean = np.array(x0, dtype=float)
    n = f.dimension
    if mean.shape != (n,):
        raise InvalidArgument(f"x0 must have dimension {n}, got shape {mean.shape}")
    lam = cfg.population
    s = _Strategy(n, lam)
    rng = np.random.default_rng(cfg.seed)
    sigma = cfg.sigma0
    cov = np.eye(n)
    basis, scales = np.eye(n), np.ones(n)
    ps, pc = np.zeros(n), np.zeros(n)
    opt = f.known_optimum

    best_x, best_f = mean.copy(), math.inf
    history: list[HistoryPoint] = []
    evals, gen = 0, 0
    while gen == 0 or evals + lam <= cfg.max_evals:
        z = rng.standard_normal((lam, n))
        y = (z * scales) @ basis.T
        xs = mean + sigma * y
        fit = _fitness(f, xs)
        evals += lam
        gen += 1

        order = np.argsort(fit, kind="stable")
        if fit[order[0]] < best_f:
            best_f = float(fit[order[0]])
            best_x = xs[order[0]].copy()
        dist = float(np.linalg.norm(best_x - opt)) if opt is not None else math.nan
        history.append(HistoryPoint(evals, best_f, dist, best_x.copy()))

        elite = order[: s.mu]
        y_w = s.weights @ y[elite]
        mean = mean + sigma * y_w

        # C^{-1/2} y_w = B D^{-1} B^T y_w
        c_inv_sqrt_yw = basis @ ((basis.T @ y_w) / scales)
        ps = (1 - s.cs) * ps + math.sqrt(s.cs * (2 - s.cs) * s.mueff) * c_inv_sqrt_yw
        ps_norm = float(np.linalg.norm(ps))
        hsig = ps_norm / math.sqrt(1 - (1 - s.cs) ** (2 * gen)) < (1.4 + 2 / (n + 1)) * s.chi_n
        pc = (1 - s.cc) * pc + hsig * math.sqrt(s.cc * (2 - s.cc) * s.mueff) * y_w

        y_elite = y[elite]
        rank_mu = (y_elite * s.weights[:, None]).T @ y_elite
        delta_h = (1 - hsig) * s.cc * (2 - s.cc)
        cov = ((1 - s.c1 - s.cmu + s.c1 * delta_h) * cov
               + s.c1 * np.outer(pc, pc) + s.cmu * rank_mu)
        cov = 0.5 * (cov + cov.T)
        sigma *= math.exp((s.cs / s.ds) * (ps_norm / s.chi_n - 1))

        eigvals, basis = np.linalg.eigh(cov)
        eigvals = np.maximum(eigvals, 1e-300)
        scales = np.sqrt(eigvals)
        if not (math.isfinite(sigma) and sigma * scales.max() > 1e-300):
            break
    return OptimizerRun(best_x=best_x, best_f=best_f, history=history, config=cfg)


@dataclass
class GradientPath:
    points: np.ndarray
    diverged: bool = False


def fd_gradient(f: ObjectiveHandle, x: np.ndarray, h: float) -> np.ndarray:
    eye = h * np.eye(len(x))
    vals = f.evaluate_many(np.concatenate([x + eye, x - eye]))
    d = len(x)
    return (vals[:d] - vals[d:]) / (2 * h)


def gradient_descent_path(f: ObjectiveHandle, x0, step: float, iters: int,
                          h: float = 1e-6) -> GradientPath:
    """Plain gradient descent, recording every iterate.

    Uses ``f.gradient`` when available, central differences otherwise. The
    path stops early, flagged as diverged, once an iterate leaves the ball
    of radius 1e6.
    """
    if not step > 0:
        raise InvalidArgument("step must be positive")
    x = np.array(x0, dtype=float)
    points = [x.copy()]
    for _ in range(iters):
        grad = f.gradient(x) if f.gradient is not None else fd_gradient(f, x, h)
        x = x - step * np.asarray(grad, dtype=float)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_RADIUS:
            return GradientPath(np.array(points), diverged=True)
        points.append(x.copy())
    return GradientPath(np.array(points))


@dataclass
class ComparisonTable:
    evals: np.ndarray
    mean_dist: np.ndarray
    std_dist: np.ndarray
    n_runs: int

    def to_csv(self, label: str = "") -> str:
        buf = io.StringIO()
        if label:
            buf.write(f"# variant={label}\n")
        buf.write(f"# runs={self.n_runs}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["evals", "mean_dist", "std_dist"])
        for e, m, sd in zip(self.evals, self.mean_dist, self.std_dist):
            writer.writerow([int(e), f"{m:.17g}", f"{sd:.17g}"])
        return buf.getvalue()


def compare_runs(runs: Sequence[OptimizerRun], known_optimum=None) -> ComparisonTable:
    """Mean and standard deviation of distance-to-optimum per generation."""
    if not runs:
        raise InvalidArgument("compare_runs needs at least one run")
    length = len(runs[0].history)
    evals = np.array([h.evals for h in runs[0].history])
    for run in runs[1:]:
        if len(run.history) != length or any(
                h.evals != e for h, e in zip(run.history, evals)):
            raise InvalidArgument("runs do not share an evaluation axis")
    if known_optimum is not None:
        opt = np.asarray(known_optimum, dtype=float)
        dists = np.array([[np.linalg.norm(h.best_x - opt) for h in run.history] for run in runs])
    else:
        dists = np.array([[h.dist for h in run.history] for run in runs])
    return ComparisonTable(evals=evals, mean_dist=dists.mean(axis=0),
                           std_dist=dists.std(axis=0), n_runs=len(runs))
