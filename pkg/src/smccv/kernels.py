"""Invariant Markov kernels for particle rejuvenation.

Both generic kernels operate on a whole particle batch at once: proposals,
target evaluations and accept decisions are vectorized, with each
particle's randomness occupying a fixed slice of the stream so results
never depend on scheduling. Scales come from the baseline posterior:
random-walk proposals use its marginal standard deviations, Hamiltonian
steps its marginal variances as the diagonal inverse mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "KernelConfig",
    "KernelStats",
    "rwm_step",
    "hmc_step",
    "tune_step_size",
]

DIVERGENCE_ENERGY = 1000.0


@dataclass(frozen=True)
class KernelConfig:
    """How to rejuvenate particles at an intermediate distribution.

    ``iterations = 0`` yields the identity kernel; it exists for
    diagnostics (telescoping checks) and is rejected by run-level config
    validation.
    """

    kind: str = "rwm"  # rwm | hmc | gibbs
    iterations: int = 1
    step_size: float | None = None  # hmc; tuned against the baseline when None
    leapfrog_steps: int = 10
    proposal_scale: float = 0.5  # rwm multiplier on baseline marginal sds

    def __post_init__(self):
        if self.kind not in ("rwm", "hmc", "gibbs"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step size must be positive")
        if self.leapfrog_steps < 1:
            raise ValueError("need at least one leapfrog step")
        if self.proposal_scale <= 0:
            raise ValueError("proposal scale must be positive")


@dataclass
class KernelStats:
    """Accumulated accept/divergence counters across kernel applications."""

    proposals: int = 0
    accepts: int = 0
    divergences: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepts / self.proposals if self.proposals else float("nan")

    def merge(self, other: "KernelStats") -> None:
        self.proposals += other.proposals
        self.accepts += other.accepts
        self.divergences += other.divergences


def rwm_step(
    draws: np.ndarray,
    log_target: Callable[[np.ndarray], np.ndarray],
    scales: np.ndarray,
    rng: np.random.Generator,
    iterations: int = 1,
    stats: KernelStats | None = None,
) -> np.ndarray:
    """Gaussian random-walk Metropolis, batched over particles.

    Proposals are scaled per coordinate by ``scales``; non-finite proposal
    targets auto-reject.
    """
    lp = np.asarray(log_target(draws), dtype=float)
    draws = draws.copy()
    for _ in range(iterations):
        prop = draws + scales * rng.standard_normal(draws.shape)
        lp_prop = np.asarray(log_target(prop), dtype=float)
        lp_prop = np.where(np.isfinite(lp_prop), lp_prop, -np.inf)
        accept = np.log(rng.random(draws.shape[0])) < lp_prop - lp
        draws[accept] = prop[accept]
        lp = np.where(accept, lp_prop, lp)
        if stats is not None:
            stats.proposals += draws.shape[0]
            stats.accepts += int(accept.sum())
    return draws


def _leapfrog(
    pos: np.ndarray,
    mom: np.ndarray,
    grad: Callable[[np.ndarray], np.ndarray],
    eps: float,
    steps: int,
    inv_mass: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    g = grad(pos)
    mom = mom + 0.5 * eps * g
    for step in range(steps):
        pos = pos + eps * inv_mass * mom
        g = grad(pos)
        if step != steps - 1:
            mom = mom + eps * g
    mom = mom + 0.5 * eps * g
    return pos, mom, g


def _kinetic(mom: np.ndarray, inv_mass: np.ndarray) -> np.ndarray:
    return 0.5 * np.sum(inv_mass * mom * mom, axis=1)


def hmc_step(
    draws: np.ndarray,
    log_target: Callable[[np.ndarray], np.ndarray],
    grad_log_target: Callable[[np.ndarray], np.ndarray],
    eps: float,
    leapfrog_steps: int,
    inv_mass: np.ndarray,
    rng: np.random.Generator,
    iterations: int = 1,
    stats: KernelStats | None = None,
) -> np.ndarray:
    """Fixed-length Hamiltonian Monte Carlo, batched over particles.

    ``inv_mass`` is the diagonal inverse mass (baseline marginal
    variances). Trajectories whose energy error exceeds
    ``DIVERGENCE_ENERGY`` are rejected and counted as divergences.
    """
    lp = np.asarray(log_target(draws), dtype=float)
    draws = draws.copy()
    sd_mom = 1.0 / np.sqrt(inv_mass)
    for _ in range(iterations):
        mom = sd_mom * rng.standard_normal(draws.shape)
        energy0 = -lp + _kinetic(mom, inv_mass)
        pos, mom_new, _ = _leapfrog(draws, mom, grad_log_target, eps, leapfrog_steps, inv_mass)
        lp_prop = np.asarray(log_target(pos), dtype=float)
        energy1 = np.where(np.isfinite(lp_prop), -lp_prop, np.inf) + _kinetic(mom_new, inv_mass)
        delta = energy0 - energy1  # log accept probability
        delta = np.where(np.isfinite(delta), delta, -np.inf)
        divergent = (energy1 - energy0) > DIVERGENCE_ENERGY
        accept = (np.log(rng.random(draws.shape[0])) < delta) & ~divergent
        draws[accept] = pos[accept]
        lp = np.where(accept, lp_prop, lp)
        if stats is not None:
            stats.proposals += draws.shape[0]
            stats.accepts += int(accept.sum())
            stats.divergences += int(divergent.sum())
    return draws


def tune_step_size(
    draws: np.ndarray,
    log_target: Callable[[np.ndarray], np.ndarray],
    grad_log_target: Callable[[np.ndarray], np.ndarray],
    leapfrog_steps: int,
    inv_mass: np.ndarray,
    rng: np.random.Generator,
    target_accept: float = 0.8,
    iterations: int = 60,
    init: float = 0.1,
) -> float:
    """Dual-averaging step-size search against a fixed particle batch.

    Each iteration takes one batched trajectory from a subset of the
    supplied draws and adapts toward the target mean acceptance
    probability; the averaged iterate is returned and then frozen for all
    tempered targets.
    """
    batch = draws[: min(len(draws), 256)].copy()
    mu = math.log(10.0 * init)
    log_eps = math.log(init)
    log_eps_bar = 0.0
    h_bar = 0.0
    gamma, t0, kappa = 0.05, 10.0, 0.75
    lp = np.asarray(log_target(batch), dtype=float)
    for m in range(1, iterations + 1):
        eps = math.exp(log_eps)
        mom = (1.0 / np.sqrt(inv_mass)) * rng.standard_normal(batch.shape)
        energy0 = -lp + _kinetic(mom, inv_mass)
        pos, mom_new, _ = _leapfrog(batch, mom, grad_log_target, eps, leapfrog_steps, inv_mass)
        lp_prop = np.asarray(log_target(pos), dtype=float)
        energy1 = np.where(np.isfinite(lp_prop), -lp_prop, np.inf) + _kinetic(mom_new, inv_mass)
        alpha = np.exp(np.minimum(0.0, energy0 - energy1))
        alpha = np.where(np.isfinite(alpha), alpha, 0.0)
        accept = rng.random(batch.shape[0]) < alpha
        batch[accept] = pos[accept]
        lp = np.where(accept, lp_prop, lp)

        h_bar = (1.0 - 1.0 / (m + t0)) * h_bar + (target_accept - float(alpha.mean())) / (m + t0)
        log_eps = mu - math.sqrt(m) / gamma * h_bar
        eta = m**-kappa
        log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar
    return math.exp(log_eps_bar)
