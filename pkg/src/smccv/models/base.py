"""The contract every built-in model satisfies.

Models are vectorized-first: the core evaluations take a batch of flat
unconstrained parameter vectors (one row per particle) and return one
value per row. The tempered log target with every exponent equal to one
is exactly ``log_prior + sum of unit log likelihoods``; deleted or
partially deleted units enter through per-unit exponents.
"""

from __future__ import annotations

import abc
from typing import Sequence

import numpy as np

from ..core import ParameterLayout, UnitIndex

__all__ = ["Model"]


class Model(abc.ABC):
    """Shared behaviour for models evaluated by the sampler.

    Subclasses define ``layout``, ``group_sizes`` and the batched
    primitives ``log_prior``, ``unit_log_liks`` and (optionally) their
    gradients. Everything else is assembled here.
    """

    layout: ParameterLayout
    group_sizes: tuple[int, ...]
    default_kernel = "rwm"

    @property
    def dim(self) -> int:
        return self.layout.dim

    @property
    def n_groups(self) -> int:
        return len(self.group_sizes)

    def units(self) -> list[UnitIndex]:
        cached = getattr(self, "_units_cache", None)
        if cached is None:
            cached = [
                UnitIndex(g, i)
                for g in range(1, self.n_groups + 1)
                for i in range(1, self.group_sizes[g - 1] + 1)
            ]
            self._units_cache = cached
        return cached

    # -- batched primitives -------------------------------------------------

    @abc.abstractmethod
    def log_prior(self, draws: np.ndarray) -> np.ndarray:
        """Log prior density (including transform Jacobians), one per row."""

    @abc.abstractmethod
    def unit_log_liks(self, draws: np.ndarray, units: Sequence[UnitIndex]) -> np.ndarray:
        """Matrix (n_draws, n_units) of unit log likelihoods."""

    def total_log_lik(self, draws: np.ndarray) -> np.ndarray:
        return self.unit_log_liks(draws, self.units()).sum(axis=1)

    def log_target(
        self,
        draws: np.ndarray,
        units: Sequence[UnitIndex] = (),
        exponents: np.ndarray | None = None,
    ) -> np.ndarray:
        """Tempered unnormalized log posterior with per-unit exponents.

        Units not listed implicitly carry exponent one, so the deleted
        fold's contribution is the only part that needs re-evaluation.
        """
        out = self.log_prior(draws) + self.total_log_lik(draws)
        if len(units):
            coeff = np.asarray(exponents, dtype=float) - 1.0
            out = out + self.unit_log_liks(draws, units) @ coeff
        return out

    # -- gradients (models targeted by HMC override these) ------------------

    has_gradient = False

    def grad_log_prior(self, draws: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_total_log_lik(self, draws: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_unit_log_liks_weighted(
        self, draws: np.ndarray, units: Sequence[UnitIndex], coeffs: np.ndarray
    ) -> np.ndarray:
        """Gradient of ``sum_u coeffs[u] * unit_log_lik(u)`` per row."""
        raise NotImplementedError

    def grad_log_target(
        self,
        draws: np.ndarray,
        units: Sequence[UnitIndex] = (),
        exponents: np.ndarray | None = None,
    ) -> np.ndarray:
        out = self.grad_log_prior(draws) + self.grad_total_log_lik(draws)
        if len(units):
            coeff = np.asarray(exponents, dtype=float) - 1.0
            out = out + self.grad_unit_log_liks_weighted(draws, units, coeff)
        return out

    # -- predictives ---------------------------------------------------------

    def joint_predictive_log_density(
        self, draws: np.ndarray, units: Sequence[UnitIndex]
    ) -> np.ndarray:
        """Log joint predictive density of the fold's held-out values.

        Fold units are conditionally independent given the parameters, so
        this is the row sum of their unit log likelihoods.
        """
        return self.unit_log_liks(draws, units).sum(axis=1)

    def step_ahead_log_density(self, draws: np.ndarray, group: int, t: int) -> np.ndarray:
        """Per-draw log density of the observed unit ``(group, t)``.

        For every built-in model the joint state carried by each draw is
        rich enough that a future unit's conditional density is just its
        unit log likelihood (state-space models keep the full latent path
        in the draw, so forward simulation is already marginalized).
        """
        return self.unit_log_liks(draws, [UnitIndex(group, t)])[:, 0]

    # -- startup -------------------------------------------------------------

    @abc.abstractmethod
    def initial_draw(self, rng: np.random.Generator) -> np.ndarray:
        """A finite-target starting point for baseline MCMC."""

    # -- scalar conveniences ---------------------------------------------------

    def unit_log_lik(self, theta: np.ndarray, unit: UnitIndex) -> float:
        return float(self.unit_log_liks(np.asarray(theta, float)[None, :], [unit])[0, 0])
