"""Experiment drivers shared by the scripts and the acceptance suite."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .baseline import BaselineConfig, run_mcmc
from .core import DeletionScheme, EstimandSpec
from .engine import CvRun, EngineConfig, derive_rng, psis_cv, refit_cv, run_cv
from .kernels import KernelConfig
from .models.base import Model

__all__ = ["ThresholdRun", "threshold_sweep", "EstimatorComparison", "compare_estimators"]

SENSITIVITY_THRESHOLDS = (-math.inf, 0.5, 0.7, 0.9, math.inf)


@dataclass(frozen=True)
class ThresholdRun:
    threshold: float
    kernel_invocations: int
    final_rejuvenations: int
    aggregate: float
    fold_estimates: tuple[float, ...]


def threshold_sweep(
    model: Model,
    scheme: DeletionScheme,
    estimand: EstimandSpec,
    engine_cfg: EngineConfig,
    kernel: KernelConfig,
    baseline_cfg: BaselineConfig,
    seed: int,
    thresholds=SENSITIVITY_THRESHOLDS,
    threads: int = 1,
) -> list[ThresholdRun]:
    """Re-run the sampler under several tail-diagnostic thresholds.

    The seed (and hence the baseline draws and every fold's stream) is held
    fixed so the threshold is the only moving part. Endpoints: -inf always
    triggers final-step rejuvenation, +inf never does.
    """
    base_draws, stats = run_mcmc(model, baseline_cfg, kernel, derive_rng(seed, 0))
    out = []
    for thr in thresholds:
        cfg = EngineConfig(
            ess_ratio=engine_cfg.ess_ratio,
            khat_threshold=thr,
            bisect_tol_factor=engine_cfg.bisect_tol_factor,
            max_bisect=engine_cfg.max_bisect,
            path_family=engine_cfg.path_family,
        )
        run = run_cv(
            model,
            scheme,
            estimand,
            cfg,
            kernel,
            baseline_cfg,
            seed,
            threads=threads,
            base_draws=base_draws,
            baseline_stats=stats,
        )
        out.append(
            ThresholdRun(
                threshold=thr,
                kernel_invocations=sum(f.kernel_invocations for f in run.folds),
                final_rejuvenations=sum(1 for f in run.folds if f.final_action == "rejuvenated"),
                aggregate=run.aggregate,
                fold_estimates=tuple(f.estimate for f in run.folds),
            )
        )
    return out


@dataclass(frozen=True)
class EstimatorComparison:
    asmc: CvRun
    psis_estimates: tuple[float, ...]
    refit_estimates: tuple[float, ...]
    refit_ses: tuple[float, ...]

    def abs_errors(self) -> tuple[tuple[float, float], ...]:
        """(asmc, psis) absolute errors per fold, refit as reference."""
        return tuple(
            (abs(f.estimate - r), abs(p - r))
            for f, p, r in zip(self.asmc.folds, self.psis_estimates, self.refit_estimates)
        )

    def rel_errors(self) -> tuple[tuple[float, float], ...]:
        return tuple(
            (abs(f.estimate - r) / abs(r), abs(p - r) / abs(r))
            for f, p, r in zip(self.asmc.folds, self.psis_estimates, self.refit_estimates)
        )


def compare_estimators(
    model: Model,
    scheme: DeletionScheme,
    estimand: EstimandSpec,
    engine_cfg: EngineConfig,
    kernel: KernelConfig,
    baseline_cfg: BaselineConfig,
    refit_cfg: BaselineConfig | None,
    seed: int,
    threads: int = 1,
) -> EstimatorComparison:
    """Run all three estimators from one shared baseline."""
    base_draws, stats = run_mcmc(model, baseline_cfg, kernel, derive_rng(seed, 0))
    asmc = run_cv(
        model,
        scheme,
        estimand,
        engine_cfg,
        kernel,
        baseline_cfg,
        seed,
        threads=threads,
        base_draws=base_draws,
        baseline_stats=stats,
    )
    psis = psis_cv(base_draws, model, scheme, estimand, engine_cfg.path_family)
    refit = refit_cv(model, scheme, estimand, refit_cfg or baseline_cfg, kernel, seed, threads)
    return EstimatorComparison(
        asmc=asmc,
        psis_estimates=tuple(p.estimate for p in psis),
        refit_estimates=tuple(r.estimate for r in refit),
        refit_ses=tuple(r.se for r in refit),
    )
