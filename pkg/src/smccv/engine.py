"""Orchestration of the adaptive particle sampler, fold by fold.

Each fold starts from the shared baseline draws with uniform weights and
walks the deletion parameter toward the fold's full deletion. Interior
stops always resample and rejuvenate (the adaptive solver has already
pinned their incremental-weight diversity); the final stop is gated: if
the Pareto tail diagnostic of the one-shot weights looks healthy the fold
ends as smoothed importance sampling over the previous draws, otherwise
the invariant kernel is invoked one last time. Sequential schemes force
stops at every integer checkpoint and evaluate their estimand there.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .baseline import BaselineConfig, BaselineStats, log_mean_exp_se, run_mcmc
from .core import DeletionScheme, EstimandSpec, UnitIndex
from .kernels import KernelConfig, KernelStats, hmc_step, rwm_step
from .models.base import Model
from .paths import DeletionPath, PathStep, incremental_log_weights, path_for_fold, solve_next_n
from .weights import WeightVector, normalize, pareto_smooth, weighted_log_estimand

__all__ = [
    "EngineConfig",
    "ParticleSystem",
    "FoldResult",
    "CvRun",
    "FoldFailure",
    "resample_systematic",
    "run_fold",
    "run_cv",
    "psis_fold",
    "psis_cv",
    "refit_fold",
    "refit_cv",
    "derive_rng",
]

_STREAM_BASELINE = 0
_STREAM_SCHEME = 1
_STREAM_FOLD = 2
_STREAM_REFIT = 3
_STREAM_SYNTH = 4


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a named substream of the master seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True)
class EngineConfig:
    ess_ratio: float = 0.5
    khat_threshold: float = 0.7
    bisect_tol_factor: float = 1e-3  # tolerance on n, as a fraction of the path length
    max_bisect: int = 60
    path_family: str | None = None  # None resolves per scheme

    def __post_init__(self):
        if not 0.0 < self.ess_ratio < 1.0:
            raise ValueError("ess_ratio must lie strictly between 0 and 1")
        if self.bisect_tol_factor <= 0:
            raise ValueError("bisection tolerance must be positive")


@dataclass
class ParticleSystem:
    """Draws with log weights and the fold's cached unit log likelihoods."""

    draws: np.ndarray
    log_w: np.ndarray
    ancestors: np.ndarray
    fold_log_liks: np.ndarray | None = None

    @classmethod
    def from_baseline(cls, draws: np.ndarray) -> "ParticleSystem":
        r = draws.shape[0]
        if r < 25:
            raise ValueError("need at least 25 particles for tail diagnostics")
        return cls(draws=draws, log_w=np.zeros(r), ancestors=np.arange(r))

    @property
    def size(self) -> int:
        return self.draws.shape[0]


@dataclass
class FoldResult:
    fold: int
    estimate: float
    final_action: str
    k_hat: float
    steps: list[PathStep]
    checkpoint_estimates: list[tuple[int, float]] = field(default_factory=list)
    kernel_invocations: int = 0
    kernel_stats: KernelStats = field(default_factory=KernelStats)
    wall_time: float = 0.0


@dataclass
class FoldFailure:
    fold: int
    error: str


@dataclass
class CvRun:
    scheme: DeletionScheme
    estimand: EstimandSpec
    baseline_stats: BaselineStats
    folds: list[FoldResult]
    failures: list[FoldFailure]
    baseline_wall_time: float
    wall_time: float

    @property
    def aggregate(self) -> float:
        return float(sum(f.estimate for f in self.folds))


def resample_systematic(
    normalized: np.ndarray, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """Systematic resampling: one uniform offset drives all strata.

    Ancestor counts land in ``{floor(size*W), ceil(size*W)}`` for every
    index, so integer expected counts are hit exactly.
    """
    n = size if size is not None else normalized.size
    positions = (np.arange(n) + rng.random()) / n
    return np.searchsorted(np.cumsum(normalized), positions).clip(max=normalized.size - 1)


def _make_rejuvenator(
    model: Model, kernel: KernelConfig, stats: BaselineStats
) -> Callable[[np.ndarray, Sequence[UnitIndex], np.ndarray, np.random.Generator, KernelStats], np.ndarray]:
    """Bind the kernel configuration to the model's tempered targets."""
    if kernel.kind == "gibbs":

        def apply(draws, units, exponents, rng, kstats):
            return model.gibbs_rejuvenate(draws, units, exponents, kernel.iterations, rng)

        return apply

    if kernel.kind == "hmc":
        if not model.has_gradient:
            raise ValueError("hmc kernel requires model gradients")
        eps = kernel.step_size
        if eps is None:
            raise ValueError("hmc kernel needs a tuned step size")
        inv_mass = stats.variance

        def apply(draws, units, exponents, rng, kstats):
            units = list(units)

            def lt(d):
                return model.log_target(d, units, exponents)

            def gt(d):
                return model.grad_log_target(d, units, exponents)

            return hmc_step(
                draws, lt, gt, eps, kernel.leapfrog_steps, inv_mass, rng,
                iterations=kernel.iterations, stats=kstats,
            )

        return apply

    scales = kernel.proposal_scale * np.sqrt(stats.variance)

    def apply(draws, units, exponents, rng, kstats):
        units = list(units)

        def lt(d):
            return model.log_target(d, units, exponents)

        return rwm_step(draws, lt, scales, rng, iterations=kernel.iterations, stats=kstats)

    return apply


def _fold_cache(model: Model, draws: np.ndarray, fold: Sequence[UnitIndex]) -> np.ndarray:
    cache = model.unit_log_liks(draws, fold)
    if not np.all(np.isfinite(cache)):
        rows, cols = np.nonzero(~np.isfinite(cache))
        raise ValueError(f"non-finite unit log likelihood at unit {fold[cols[0]]}")
    return cache


def _sequential_estimate(
    cache: np.ndarray,
    ranks: np.ndarray,
    weights: WeightVector,
    deletion_count: int,
    horizon: int,
) -> float:
    """h-step estimand at a checkpoint: sum over groups of the weighted
    log predictive density of the unit(s) deleted ``h`` steps back."""
    target_rank = deletion_count - horizon + 1
    cols = np.flatnonzero(ranks == target_rank)
    if cols.size == 0:
        return math.nan
    return float(sum(weighted_log_estimand(weights, cache[:, c]) for c in cols))


def _fold_estimate(
    cache: np.ndarray, weights: WeightVector, estimand: EstimandSpec
) -> float:
    if estimand.kind == "pointwise":
        return float(
            sum(weighted_log_estimand(weights, cache[:, c]) for c in range(cache.shape[1]))
        )
    return weighted_log_estimand(weights, cache.sum(axis=1))


def run_fold(
    base_draws: np.ndarray,
    model: Model,
    scheme: DeletionScheme,
    fold_index: int,
    estimand: EstimandSpec,
    engine_cfg: EngineConfig,
    kernel: KernelConfig,
    baseline_stats: BaselineStats,
    rng: np.random.Generator,
    resample: bool = True,
) -> FoldResult:
    """Transport baseline particles to one fold's deleted posterior."""
    t_start = time.perf_counter()
    fold = list(scheme.folds[fold_index])
    path = path_for_fold(scheme, fold_index, engine_cfg.path_family)
    sequential = scheme.is_sequential
    ranks = np.asarray(scheme.ranks[fold_index]) if sequential else None
    caps = list(scheme.checkpoints) if sequential else [path.length]
    rejuvenate = _make_rejuvenator(model, kernel, baseline_stats)

    particles = ParticleSystem.from_baseline(base_draws)
    r = particles.size
    cache = _fold_cache(model, particles.draws, fold)
    target = engine_cfg.ess_ratio * r
    tol = engine_cfg.bisect_tol_factor * path.length

    uniform = normalize(np.zeros(r))
    steps: list[PathStep] = []
    checkpoints: list[tuple[int, float]] = []
    kstats = KernelStats()
    invocations = 0

    def estimate_at(weights: WeightVector, n: float) -> float:
        if not sequential:
            return _fold_estimate(cache, weights, estimand)
        # aim at the checkpoint being approached (or sitting on)
        count = int(math.ceil(n)) if n > 0 else 1
        return _sequential_estimate(cache, ranks, weights, count, estimand.horizon)

    steps.append(
        PathStep(
            step=0,
            n=0.0,
            ess=float(r),
            action="baseline",
            boundary_exponent=path.boundary_exponent(0.0),
            estimate=estimate_at(uniform, 0.0),
        )
    )

    n = 0.0
    step_index = 0
    cap_pos = 0
    final_action = "psis"
    k_hat_final = math.nan
    while n < path.length:
        while caps[cap_pos] <= n:
            cap_pos += 1
        cap = float(caps[cap_pos])
        sol = solve_next_n(
            cache, path, n, cap, target, tol, max_iter=engine_cfg.max_bisect
        )
        step_index += 1
        lw_inc = incremental_log_weights(cache, path, n, sol.n_next)
        raw = normalize(lw_inc)
        at_final = sol.at_cap and cap == path.length
        at_checkpoint = sol.at_cap and sequential

        if not at_final:
            if resample:
                anc = resample_systematic(raw.normalized, rng)
                particles = ParticleSystem(particles.draws[anc], np.zeros(r), anc)
                cache = cache[anc]
            exps = path.exponents(sol.n_next, len(fold))
            if kernel.iterations > 0:
                particles = replace(
                    particles,
                    draws=rejuvenate(particles.draws, fold, exps, rng, kstats),
                )
                cache = _fold_cache(model, particles.draws, fold)
                invocations += 1
            weights = uniform
            action = "reweight+rejuvenate"
            k_hat = None
        else:
            diag = pareto_smooth(raw.log_w)
            k_hat = diag.k_hat
            k_hat_final = diag.k_hat
            if diag.k_hat < engine_cfg.khat_threshold:
                weights = diag.smoothed
                action = "psis"
                final_action = "psis"
            else:
                if resample:
                    anc = resample_systematic(raw.normalized, rng)
                    particles = ParticleSystem(particles.draws[anc], np.zeros(r), anc)
                    cache = cache[anc]
                exps = path.exponents(sol.n_next, len(fold))
                if kernel.iterations > 0:
                    particles = replace(
                        particles,
                        draws=rejuvenate(particles.draws, fold, exps, rng, kstats),
                    )
                    cache = _fold_cache(model, particles.draws, fold)
                    invocations += 1
                weights = uniform
                action = "psis-failed->rejuvenate"
                final_action = "rejuvenated"

        est = estimate_at(weights, sol.n_next)
        steps.append(
            PathStep(
                step=step_index,
                n=sol.n_next,
                ess=sol.ess,
                action=action,
                boundary_exponent=path.boundary_exponent(sol.n_next),
                estimate=est,
                k_hat=k_hat,
                is_checkpoint=at_checkpoint,
            )
        )
        if at_checkpoint:
            count = int(round(sol.n_next))
            if count >= estimand.horizon:
                checkpoints.append((count, est))
        n = sol.n_next

    if sequential:
        estimate = float(sum(e for _, e in checkpoints))
    else:
        estimate = steps[-1].estimate
    return FoldResult(
        fold=fold_index,
        estimate=estimate,
        final_action=final_action,
        k_hat=k_hat_final,
        steps=steps,
        checkpoint_estimates=checkpoints,
        kernel_invocations=invocations,
        kernel_stats=kstats,
        wall_time=time.perf_counter() - t_start,
    )


def _resolve_kernel(
    model: Model, kernel: KernelConfig, stats: BaselineStats
) -> KernelConfig:
    """Fill tuned values: step size from the baseline run when absent."""
    if kernel.kind == "hmc" and kernel.step_size is None:
        if stats.step_size is None:
            raise ValueError("no tuned step size available for the hmc kernel")
        return replace(kernel, step_size=stats.step_size)
    return kernel


def run_cv(
    model: Model,
    scheme: DeletionScheme,
    estimand: EstimandSpec,
    engine_cfg: EngineConfig,
    kernel: KernelConfig,
    baseline_cfg: BaselineConfig,
    seed: int,
    threads: int = 1,
    base_draws: np.ndarray | None = None,
    baseline_stats: BaselineStats | None = None,
) -> CvRun:
    """Run every fold from a shared baseline particle set.

    Folds execute concurrently but each consumes only its own derived
    random stream, so results are identical for any thread count. An
    already-computed baseline may be passed in to share across estimators.
    """
    t0 = time.perf_counter()
    if base_draws is None or baseline_stats is None:
        base_draws, baseline_stats = run_mcmc(
            model, baseline_cfg, kernel, derive_rng(seed, _STREAM_BASELINE)
        )
    t_base = time.perf_counter() - t0
    kernel = _resolve_kernel(model, kernel, baseline_stats)

    results: list[FoldResult | None] = [None] * scheme.n_folds
    failures: list[FoldFailure] = []

    def one(k: int) -> FoldResult:
        return run_fold(
            base_draws,
            model,
            scheme,
            k,
            estimand,
            engine_cfg,
            kernel,
            baseline_stats,
            derive_rng(seed, _STREAM_FOLD, k),
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {k: pool.submit(one, k) for k in range(scheme.n_folds)}
        for k, fut in futures.items():
            try:
                results[k] = fut.result()
            except Exception as exc:  # recorded, not fatal: report carries partial results
                failures.append(FoldFailure(fold=k, error=str(exc)))
    else:
        for k in range(scheme.n_folds):
            try:
                results[k] = one(k)
            except Exception as exc:
                failures.append(FoldFailure(fold=k, error=str(exc)))

    return CvRun(
        scheme=scheme,
        estimand=estimand,
        baseline_stats=baseline_stats,
        folds=[f for f in results if f is not None],
        failures=failures,
        baseline_wall_time=t_base,
        wall_time=time.perf_counter() - t0,
    )


# -- reference estimators ------------------------------------------------------


@dataclass
class PsisFold:
    fold: int
    estimate: float
    k_hat: float
    checkpoint_estimates: list[tuple[int, float]] = field(default_factory=list)
    checkpoint_k_hats: list[tuple[int, float]] = field(default_factory=list)


def psis_fold(
    base_draws: np.ndarray,
    model: Model,
    scheme: DeletionScheme,
    fold_index: int,
    estimand: EstimandSpec,
    path_family: str | None = None,
) -> PsisFold:
    """One-shot smoothed importance sampling from the baseline draws."""
    fold = list(scheme.folds[fold_index])
    path = path_for_fold(scheme, fold_index, path_family)
    cache = _fold_cache(model, base_draws, fold)
    if scheme.is_sequential:
        ranks = np.asarray(scheme.ranks[fold_index])
        cps: list[tuple[int, float]] = []
        khats: list[tuple[int, float]] = []
        for count in scheme.checkpoints:
            if count < estimand.horizon:
                continue
            lw = incremental_log_weights(cache, path, 0.0, float(count))
            diag = pareto_smooth(lw)
            est = _sequential_estimate(cache, ranks, diag.smoothed, count, estimand.horizon)
            cps.append((count, est))
            khats.append((count, diag.k_hat))
        total = float(sum(e for _, e in cps))
        worst = max((k for _, k in khats), default=math.nan)
        return PsisFold(fold_index, total, worst, cps, khats)
    lw = incremental_log_weights(cache, path, 0.0, path.length)
    diag = pareto_smooth(lw)
    est = _fold_estimate(cache, diag.smoothed, estimand)
    return PsisFold(fold_index, est, diag.k_hat)


def psis_cv(
    base_draws: np.ndarray,
    model: Model,
    scheme: DeletionScheme,
    estimand: EstimandSpec,
    path_family: str | None = None,
) -> list[PsisFold]:
    return [
        psis_fold(base_draws, model, scheme, k, estimand, path_family)
        for k in range(scheme.n_folds)
    ]


@dataclass
class RefitFold:
    fold: int
    estimate: float
    se: float
    checkpoint_estimates: list[tuple[int, float]] = field(default_factory=list)
    checkpoint_ses: list[tuple[int, float]] = field(default_factory=list)


def _refit_estimate(
    model: Model,
    scheme: DeletionScheme,
    fold_index: int,
    units: Sequence[UnitIndex],
    log_f_units: Sequence[UnitIndex],
    estimand: EstimandSpec,
    baseline_cfg: BaselineConfig,
    kernel: KernelConfig,
    rng: np.random.Generator,
) -> tuple[float, float]:
    draws, _ = run_mcmc(model, baseline_cfg, kernel, rng, units=units)
    cache = model.unit_log_liks(draws, list(log_f_units))
    if estimand.kind == "pointwise":
        per_unit = [
            (weighted_log_estimand(normalize(np.zeros(draws.shape[0])), cache[:, c]), c)
            for c in range(cache.shape[1])
        ]
        est = float(sum(v for v, _ in per_unit))
        se = float(
            math.sqrt(sum(log_mean_exp_se(cache[:, c]) ** 2 for c in range(cache.shape[1])))
        )
        return est, se
    log_f = cache.sum(axis=1)
    r = draws.shape[0]
    est = float(weighted_log_estimand(normalize(np.zeros(r)), log_f))
    return est, log_mean_exp_se(log_f)


def refit_fold(
    model: Model,
    scheme: DeletionScheme,
    fold_index: int,
    estimand: EstimandSpec,
    baseline_cfg: BaselineConfig,
    kernel: KernelConfig,
    seed: int,
) -> RefitFold:
    """Brute-force reference: fresh MCMC on the case-deleted target."""
    fold = list(scheme.folds[fold_index])
    if scheme.is_sequential:
        ranks = np.asarray(scheme.ranks[fold_index])
        cps: list[tuple[int, float]] = []
        ses: list[tuple[int, float]] = []
        for j, count in enumerate(scheme.checkpoints):
            if count < estimand.horizon:
                continue
            deleted = [u for u, rk in zip(fold, ranks) if rk <= count]
            targets = [u for u, rk in zip(fold, ranks) if rk == count - estimand.horizon + 1]
            est, se = _refit_estimate(
                model,
                scheme,
                fold_index,
                deleted,
                targets,
                EstimandSpec("pointwise"),
                baseline_cfg,
                kernel,
                derive_rng(seed, _STREAM_REFIT, fold_index, j),
            )
            cps.append((count, est))
            ses.append((count, se))
        total = float(sum(e for _, e in cps))
        total_se = float(math.sqrt(sum(s**2 for _, s in ses)))
        return RefitFold(fold_index, total, total_se, cps, ses)
    est, se = _refit_estimate(
        model,
        scheme,
        fold_index,
        fold,
        fold,
        estimand,
        baseline_cfg,
        kernel,
        derive_rng(seed, _STREAM_REFIT, fold_index),
    )
    return RefitFold(fold_index, est, se)


def refit_cv(
    model: Model,
    scheme: DeletionScheme,
    estimand: EstimandSpec,
    baseline_cfg: BaselineConfig,
    kernel: KernelConfig,
    seed: int,
    threads: int = 1,
) -> list[RefitFold]:
    def one(k: int) -> RefitFold:
        return refit_fold(model, scheme, k, estimand, baseline_cfg, kernel, seed)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(scheme.n_folds)))
    return [one(k) for k in range(scheme.n_folds)]
