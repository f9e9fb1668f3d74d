"""Baseline and refit MCMC: single chains on (possibly case-deleted) targets.

The baseline run provides the sampler's initial particles and the scale
information reused downstream at no extra cost: marginal variances feed
the HMC inverse mass and the random-walk proposal scales, lag-one
autocorrelations suggest rejuvenation iteration counts. Refits run the
same machinery against a case-deleted target and serve as the brute-force
reference estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import UnitIndex
from .kernels import KernelConfig, KernelStats, hmc_step, rwm_step, tune_step_size
from .models.base import Model

__all__ = ["BaselineConfig", "BaselineStats", "run_mcmc", "run_baseline_mcmc"]


@dataclass(frozen=True)
class BaselineConfig:
    """Iteration bookkeeping: ``(iterations - burn_in) // thin`` draws are kept."""

    iterations: int = 4000
    burn_in: int = 1000
    thin: int = 3

    def __post_init__(self):
        if self.burn_in < 0 or self.thin < 1 or self.iterations <= self.burn_in:
            raise ValueError("need iterations > burn_in >= 0 and thin >= 1")

    @property
    def retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass(frozen=True)
class BaselineStats:
    """Summaries of the retained chain, reused by the particle sampler."""

    mean: np.ndarray
    variance: np.ndarray
    lag1_autocorr: np.ndarray
    acceptance_rate: float
    step_size: float | None
    suggested_iterations: int


def _lag1_autocorr(draws: np.ndarray) -> np.ndarray:
    centered = draws - draws.mean(axis=0)
    var = np.mean(centered**2, axis=0)
    cov = np.mean(centered[1:] * centered[:-1], axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        ac = np.where(var > 0, cov / var, 0.0)
    return np.clip(ac, -1.0, 1.0)


def _suggest_iterations(kind: str, lag1: np.ndarray) -> int:
    if kind == "gibbs":
        return 5
    worst = float(np.max(lag1, initial=0.0))
    if worst < 0.3:
        return 1
    if worst < 0.6:
        return 2
    return 3


def run_mcmc(
    model: Model,
    config: BaselineConfig,
    kernel: KernelConfig,
    rng: np.random.Generator,
    units: Sequence[UnitIndex] = (),
    exponents: np.ndarray | None = None,
) -> tuple[np.ndarray, BaselineStats]:
    """Run one chain against the (optionally case-deleted) posterior.

    Burn-in is spent on adaptation: a quarter on initial step-size search,
    a quarter of chain movement for variance estimation, another quarter
    re-tuning with the estimated mass, and the rest settling. Sampling
    then proceeds with frozen tuning; every ``thin``-th state is retained.
    """
    units = list(units)
    exps = np.zeros(len(units)) if exponents is None else np.asarray(exponents, dtype=float)

    def log_target(draws: np.ndarray) -> np.ndarray:
        return model.log_target(draws, units, exps)

    theta = model.initial_draw(rng)[None, :]
    if not np.isfinite(log_target(theta)[0]):
        raise ValueError("non-finite target at the initial draw")

    n_sample = config.iterations - config.burn_in
    keep = np.empty((config.retained, model.dim))
    stats = KernelStats()

    if kernel.kind == "gibbs":
        for _ in range(config.burn_in):
            theta = model.gibbs_rejuvenate(theta, units, exps, 1, rng)
        kept = 0
        for it in range(1, n_sample + 1):
            theta = model.gibbs_rejuvenate(theta, units, exps, 1, rng)
            if it % config.thin == 0 and kept < config.retained:
                keep[kept] = theta[0]
                kept += 1
        step_size = None
        acc = float("nan")

    elif kernel.kind == "hmc":
        if not model.has_gradient:
            raise ValueError("hmc baseline requires model gradients")

        def grad(draws: np.ndarray) -> np.ndarray:
            return model.grad_log_target(draws, units, exps)

        q = max(config.burn_in // 4, 1)
        inv_mass = np.ones(model.dim)
        eps = kernel.step_size or tune_step_size(
            theta, log_target, grad, kernel.leapfrog_steps, inv_mass, rng, iterations=q
        )
        warm = np.empty((q, model.dim))
        for it in range(q):
            theta = hmc_step(theta, log_target, grad, eps, kernel.leapfrog_steps, inv_mass, rng)
            warm[it] = theta[0]
        inv_mass = np.maximum(warm[q // 2 :].var(axis=0), 1e-12)
        if kernel.step_size is None:
            eps = tune_step_size(
                theta, log_target, grad, kernel.leapfrog_steps, inv_mass, rng, iterations=q
            )
        for _ in range(config.burn_in - 3 * q):
            theta = hmc_step(theta, log_target, grad, eps, kernel.leapfrog_steps, inv_mass, rng)
        kept = 0
        for it in range(1, n_sample + 1):
            theta = hmc_step(
                theta, log_target, grad, eps, kernel.leapfrog_steps, inv_mass, rng, stats=stats
            )
            if it % config.thin == 0 and kept < config.retained:
                keep[kept] = theta[0]
                kept += 1
        step_size = eps
        acc = stats.acceptance_rate

    else:  # rwm
        scale = 0.1 / math.sqrt(model.dim)
        scales = np.full(model.dim, scale)
        half = config.burn_in // 2
        warm = np.empty((max(half, 1), model.dim))
        for it in range(config.burn_in):
            s = KernelStats()
            theta = rwm_step(theta, log_target, scales, rng, stats=s)
            # Robbins-Monro toward the multivariate optimum
            scales *= math.exp((s.acceptance_rate - 0.25) / math.sqrt(it + 1.0))
            if it >= config.burn_in - half:
                warm[it - (config.burn_in - half)] = theta[0]
        sd = np.sqrt(np.maximum(warm.var(axis=0), 1e-12)) if half else scales
        scales = kernel.proposal_scale * sd
        kept = 0
        for it in range(1, n_sample + 1):
            theta = rwm_step(theta, log_target, scales, rng, stats=stats)
            if it % config.thin == 0 and kept < config.retained:
                keep[kept] = theta[0]
                kept += 1
        step_size = None
        acc = stats.acceptance_rate

    lag1 = _lag1_autocorr(keep)
    out_stats = BaselineStats(
        mean=keep.mean(axis=0),
        variance=np.maximum(keep.var(axis=0), 1e-12),
        lag1_autocorr=lag1,
        acceptance_rate=acc,
        step_size=step_size,
        suggested_iterations=_suggest_iterations(kernel.kind, lag1),
    )
    return keep, out_stats


def run_baseline_mcmc(
    model: Model, config: BaselineConfig, kernel: KernelConfig, rng: np.random.Generator
) -> tuple[np.ndarray, BaselineStats]:
    """Chain against the full, non-case-deleted posterior."""
    return run_mcmc(model, config, kernel, rng)


def log_mean_exp_se(log_f: np.ndarray, n_batches: int = 20) -> float:
    """Batch-means Monte Carlo standard error of ``log(mean(exp(log_f)))``."""
    log_f = np.asarray(log_f, dtype=float)
    n = log_f.size
    n_batches = min(n_batches, n)
    shift = np.max(log_f)
    f = np.exp(log_f - shift)
    edges = np.linspace(0, n, n_batches + 1, dtype=int)
    batch_means = np.array([f[a:b].mean() for a, b in zip(edges[:-1], edges[1:])])
    se_mean = batch_means.std(ddof=1) / math.sqrt(n_batches)
    return float(se_mean / f.mean())
