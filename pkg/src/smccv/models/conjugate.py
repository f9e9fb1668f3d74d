"""Fully conjugate Gaussian hierarchy with closed-form case-deleted predictives.

All variances are known, so the joint law of the observations is
multivariate normal and every fold-deleted predictive density follows from
Gaussian conditioning. The conditioning routine below shares no code with
the sampler and anchors the acceptance tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import ParameterLayout, UnitIndex
from .base import Model

__all__ = ["ConjugateData", "ConjugateGaussianModel", "fold_deleted_predictive_log_density", "posterior_mean_location"]


@dataclass(frozen=True)
class ConjugateData:
    """Flat observations with 1-based dense group labels."""

    y: np.ndarray
    group: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        object.__setattr__(self, "group", np.asarray(self.group, dtype=int))
        if self.y.shape != self.group.shape or self.y.ndim != 1:
            raise ValueError("y and group must be equal-length vectors")
        g = np.unique(self.group)
        if g[0] != 1 or g[-1] != g.size:
            raise ValueError("group ids must be dense and 1-based")

    @property
    def n_groups(self) -> int:
        return int(self.group.max())

    def group_sizes(self) -> tuple[int, ...]:
        return tuple(int(np.sum(self.group == g)) for g in range(1, self.n_groups + 1))


class ConjugateGaussianModel(Model):
    """location ~ normal(0, kappa^2); effects ~ normal(location, tau^2);
    y ~ normal(effect, sigma^2), all scales known."""

    default_kernel = "hmc"
    has_gradient = True

    def __init__(self, data: ConjugateData, kappa: float = 1.0, tau: float = 1.0, sigma: float = 1.0):
        if min(kappa, tau, sigma) <= 0:
            raise ValueError("scales must be positive")
        self.data = data
        self.kappa, self.tau, self.sigma = float(kappa), float(tau), float(sigma)
        self.group_sizes = data.group_sizes()
        g = self.n_groups
        self.layout = ParameterLayout([("location", 1), ("effects", g)])
        # flat observation index per (group, within), in file order
        self._obs_index = {}
        counters = [0] * (g + 1)
        for j, grp in enumerate(data.group):
            counters[grp] += 1
            self._obs_index[UnitIndex(int(grp), counters[grp])] = j
        self._lookup_cache: dict[tuple, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = {}
        # per-group sufficient statistics for the full-likelihood gradient
        self._group_counts = np.bincount(data.group - 1, minlength=g).astype(float)
        self._group_sums = np.bincount(data.group - 1, weights=data.y, minlength=g)

    def _lookup(self, units: Sequence[UnitIndex]):
        """Cached (obs, groups, y, group-indicator) arrays for a unit list."""
        key = tuple(units)
        hit = self._lookup_cache.get(key)
        if hit is None:
            obs = np.array([self._obs_index[u] for u in units])
            groups = self.data.group[obs] - 1
            onehot = np.zeros((len(units), self.n_groups))
            onehot[np.arange(len(units)), groups] = 1.0
            hit = (obs, groups, self.data.y[obs], onehot)
            self._lookup_cache[key] = hit
        return hit

    def _split(self, draws: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return draws[:, 0], draws[:, 1:]

    def log_prior(self, draws: np.ndarray) -> np.ndarray:
        mu, theta = self._split(draws)
        lp = -0.5 * math.log(2 * math.pi * self.kappa**2) - 0.5 * (mu / self.kappa) ** 2
        resid = theta - mu[:, None]
        lp = lp - 0.5 * self.n_groups * math.log(2 * math.pi * self.tau**2)
        return lp - 0.5 * np.sum((resid / self.tau) ** 2, axis=1)

    def unit_log_liks(self, draws: np.ndarray, units: Sequence[UnitIndex]) -> np.ndarray:
        _, groups, y, _ = self._lookup(units)
        theta = draws[:, 1:][:, groups]
        return -0.5 * math.log(2 * math.pi * self.sigma**2) - 0.5 * ((y - theta) / self.sigma) ** 2

    def total_log_lik(self, draws: np.ndarray) -> np.ndarray:
        theta = draws[:, 1:][:, self.data.group - 1]
        resid = (self.data.y - theta) / self.sigma
        n = self.data.y.size
        return -0.5 * n * math.log(2 * math.pi * self.sigma**2) - 0.5 * np.sum(resid**2, axis=1)

    def grad_log_prior(self, draws: np.ndarray) -> np.ndarray:
        mu, theta = self._split(draws)
        out = np.empty_like(draws)
        centered = (theta - mu[:, None]) / self.tau**2
        out[:, 0] = -mu / self.kappa**2 + centered.sum(axis=1)
        out[:, 1:] = -centered
        return out

    def grad_total_log_lik(self, draws: np.ndarray) -> np.ndarray:
        out = np.zeros_like(draws)
        theta = draws[:, 1:]
        out[:, 1:] = (self._group_sums - self._group_counts * theta) / self.sigma**2
        return out

    def grad_unit_log_liks_weighted(
        self, draws: np.ndarray, units: Sequence[UnitIndex], coeffs: np.ndarray
    ) -> np.ndarray:
        _, groups, y, onehot = self._lookup(units)
        theta = draws[:, 1:][:, groups]
        contrib = coeffs * (y - theta) / self.sigma**2  # (R, U)
        out = np.zeros_like(draws)
        out[:, 1:] = contrib @ onehot
        return out

    def initial_draw(self, rng: np.random.Generator) -> np.ndarray:
        return 0.1 * rng.standard_normal(self.dim)


def _joint_covariance(data: ConjugateData, kappa: float, tau: float, sigma: float) -> np.ndarray:
    same_group = data.group[:, None] == data.group[None, :]
    n = data.y.size
    return kappa**2 + tau**2 * same_group + sigma**2 * np.eye(n)


def fold_deleted_predictive_log_density(
    data: ConjugateData,
    fold: Sequence[UnitIndex],
    kappa: float,
    tau: float,
    sigma: float,
) -> float:
    """Exact log density of the fold's values under the fold-deleted posterior.

    Works directly on the joint Gaussian law of the observations via
    conditioning; independent of the particle machinery by construction.
    """
    counters: dict[int, int] = {}
    index_of: dict[UnitIndex, int] = {}
    for j, grp in enumerate(data.group):
        counters[grp] = counters.get(grp, 0) + 1
        index_of[UnitIndex(int(grp), counters[grp])] = j
    held = np.array(sorted(index_of[u] for u in fold))
    kept = np.setdiff1d(np.arange(data.y.size), held)
    cov = _joint_covariance(data, kappa, tau, sigma)

    if kept.size == 0:
        mean = np.zeros(held.size)
        cond = cov[np.ix_(held, held)]
    else:
        c_kk = cov[np.ix_(kept, kept)]
        c_hk = cov[np.ix_(held, kept)]
        sol = np.linalg.solve(c_kk, data.y[kept])
        mean = c_hk @ sol
        cond = cov[np.ix_(held, held)] - c_hk @ np.linalg.solve(c_kk, c_hk.T)

    resid = data.y[held] - mean
    chol = np.linalg.cholesky(0.5 * (cond + cond.T))
    z = np.linalg.solve(chol, resid)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return float(-0.5 * (held.size * math.log(2 * math.pi) + logdet + z @ z))


def posterior_mean_location(data: ConjugateData, kappa: float, tau: float, sigma: float) -> float:
    """Analytic posterior mean of the top-level location given all data."""
    cov = _joint_covariance(data, kappa, tau, sigma)
    cross = np.full(data.y.size, kappa**2)
    return float(cross @ np.linalg.solve(cov, data.y))
