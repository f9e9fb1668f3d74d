"""Varying-coefficient multilevel regression with a group-level predictor.

Measurements: y_i ~ normal(x_i' b_{g[i]}, sigma) with x_i = (1, x_i).
Group coefficients: b_g ~ MVN(C u_g, S) with u_g = (1, u_g), C a 2x2
loading matrix and S a 2x2 covariance. Hyperpriors (documented defaults,
not dictated by the data): normal(0, 2.5) on the entries of C, standard
normal on the log-Cholesky coordinates of S, half-normal(1) on sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import ParameterLayout, UnitIndex
from ..transforms import chol_from_packed, grad_packed_from_grad_cov, mvn_logpdf
from .base import Model

__all__ = ["MultilevelData", "MultilevelNormalModel"]

_LOADING_SD = 2.5
_HALF_NORMAL_SD = 1.0


@dataclass(frozen=True)
class MultilevelData:
    """Observation-level (y, x, group) plus one group-level covariate u."""

    y: np.ndarray
    x: np.ndarray
    group: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "group", np.asarray(self.group, dtype=int))
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))
        if not (self.y.shape == self.x.shape == self.group.shape) or self.y.ndim != 1:
            raise ValueError("y, x, group must be equal-length vectors")
        g = np.unique(self.group)
        if g[0] != 1 or g[-1] != g.size:
            raise ValueError("group ids must be dense and 1-based")
        if self.u.shape != (g.size,):
            raise ValueError("u must have one entry per group")

    @property
    def n_groups(self) -> int:
        return int(self.group.max())

    def group_sizes(self) -> tuple[int, ...]:
        return tuple(int(np.sum(self.group == g)) for g in range(1, self.n_groups + 1))


class MultilevelNormalModel(Model):
    default_kernel = "hmc"
    has_gradient = True

    def __init__(self, data: MultilevelData):
        self.data = data
        g = data.n_groups
        self.group_sizes = data.group_sizes()
        self.layout = ParameterLayout(
            [("coefs", 2 * g), ("loading", 4), ("cov_chol", 3), ("log_scale", 1)]
        )
        self._g = g
        self._ug = np.column_stack([np.ones(g), data.u])  # (G, 2)
        self._xmat = np.column_stack([np.ones(data.y.size), data.x])  # (N, 2)
        counters = [0] * (g + 1)
        self._obs_index: dict[UnitIndex, int] = {}
        for j, grp in enumerate(data.group):
            counters[grp] += 1
            self._obs_index[UnitIndex(int(grp), counters[grp])] = j
        self._lookup_cache: dict[tuple, tuple] = {}
        # per-group sufficient statistics (X'X, X'y, y'y) for gradients
        self._xx = np.zeros((g, 2, 2))
        self._xy = np.zeros((g, 2))
        self._yy = float(data.y @ data.y)
        for j in range(data.y.size):
            xj = self._xmat[j]
            gj = data.group[j] - 1
            self._xx[gj] += np.outer(xj, xj)
            self._xy[gj] += data.y[j] * xj

    def _lookup(self, units: Sequence[UnitIndex]):
        """Cached (obs, groups, x, y, group-indicator) arrays for a unit list."""
        key = tuple(units)
        hit = self._lookup_cache.get(key)
        if hit is None:
            obs = np.array([self._obs_index[u] for u in units])
            groups = self.data.group[obs] - 1
            onehot = np.zeros((len(units), self._g))
            onehot[np.arange(len(units)), groups] = 1.0
            hit = (obs, groups, self.data.x[obs], self.data.y[obs], onehot)
            self._lookup_cache[key] = hit
        return hit

    # -- unpacking -----------------------------------------------------------

    def _coefs(self, draws: np.ndarray) -> np.ndarray:
        return draws[:, : 2 * self._g].reshape(draws.shape[0], self._g, 2)

    def _loading(self, draws: np.ndarray) -> np.ndarray:
        return draws[:, self.layout.block("loading")].reshape(-1, 2, 2)

    def _cov_chol(self, draws: np.ndarray) -> np.ndarray:
        return chol_from_packed(draws[:, self.layout.block("cov_chol")], 2)

    def _sigma(self, draws: np.ndarray) -> np.ndarray:
        return np.exp(draws[:, -1])

    # -- densities -------------------------------------------------------------

    def log_prior(self, draws: np.ndarray) -> np.ndarray:
        coefs = self._coefs(draws)
        loading = self._loading(draws)
        chol = self._cov_chol(draws)
        eta = draws[:, self.layout.block("cov_chol")]
        log_sigma = draws[:, -1]
        sigma = np.exp(log_sigma)

        mean = np.einsum("rij,gj->rgi", loading, self._ug)
        lp = mvn_logpdf(coefs - mean, chol[:, None, :, :]).sum(axis=1)
        lp += np.sum(-0.5 * (draws[:, self.layout.block("loading")] / _LOADING_SD) ** 2, axis=1)
        lp += -4 * 0.5 * math.log(2 * math.pi * _LOADING_SD**2)
        lp += np.sum(-0.5 * eta**2, axis=1) - 3 * 0.5 * math.log(2 * math.pi)
        # half-normal(1) on sigma, log-transformed (Jacobian = sigma)
        lp += 0.5 * math.log(2.0 / math.pi) - 0.5 * (sigma / _HALF_NORMAL_SD) ** 2 + log_sigma
        return lp

    def unit_log_liks(self, draws: np.ndarray, units: Sequence[UnitIndex]) -> np.ndarray:
        _, groups, x, y, _ = self._lookup(units)
        return self._ll_from(draws, groups, x, y)

    def _ll_from(self, draws, groups, x, y) -> np.ndarray:
        coefs = self._coefs(draws)
        sigma = self._sigma(draws)[:, None]
        mu = coefs[:, groups, 0] + coefs[:, groups, 1] * x
        resid = (y - mu) / sigma
        return -np.log(sigma) - 0.5 * math.log(2 * math.pi) - 0.5 * resid**2

    def total_log_lik(self, draws: np.ndarray) -> np.ndarray:
        return self._ll_from(draws, self.data.group - 1, self.data.x, self.data.y).sum(axis=1)

    # -- gradients ---------------------------------------------------------------

    def grad_log_prior(self, draws: np.ndarray) -> np.ndarray:
        r = draws.shape[0]
        coefs = self._coefs(draws)
        loading = self._loading(draws)
        chol = self._cov_chol(draws)
        eta = draws[:, self.layout.block("cov_chol")]
        sigma = self._sigma(draws)

        out = np.zeros_like(draws)
        resid = coefs - np.einsum("rij,gj->rgi", loading, self._ug)  # (R, G, 2)
        prec_resid = np.linalg.solve(
            chol @ np.swapaxes(chol, -1, -2), np.swapaxes(resid, 1, 2)
        )  # (R, 2, G)
        out[:, : 2 * self._g] = -np.swapaxes(prec_resid, 1, 2).reshape(r, -1)

        grad_loading = np.einsum("rig,gj->rij", prec_resid, self._ug)
        out[:, self.layout.block("loading")] = (
            grad_loading.reshape(r, 4)
            - draws[:, self.layout.block("loading")] / _LOADING_SD**2
        )

        # d/dS of sum_g logMVN: -G/2 S^{-1} + 1/2 S^{-1} (sum resid resid') S^{-1}
        prec_r_t = np.swapaxes(prec_resid, 1, 2)  # (R, G, 2) rows S^{-1} resid_g
        quad = np.einsum("rgi,rgj->rij", prec_r_t, prec_r_t)
        cov = chol @ np.swapaxes(chol, -1, -2)
        prec = np.linalg.inv(cov)
        grad_cov = -0.5 * self._g * prec + 0.5 * quad
        out[:, self.layout.block("cov_chol")] = grad_packed_from_grad_cov(grad_cov, chol) - eta

        out[:, -1] = 1.0 - (sigma / _HALF_NORMAL_SD) ** 2
        return out

    def grad_total_log_lik(self, draws: np.ndarray) -> np.ndarray:
        r = draws.shape[0]
        coefs = self._coefs(draws)
        sigma2 = self._sigma(draws)[:, None, None] ** 2
        grad_b = (self._xy[None] - np.einsum("gij,rgj->rgi", self._xx, coefs)) / sigma2
        out = np.zeros_like(draws)
        out[:, : 2 * self._g] = grad_b.reshape(r, -1)
        quad = (
            self._yy
            - 2.0 * np.einsum("rgi,gi->r", coefs, self._xy)
            + np.einsum("rgi,gij,rgj->r", coefs, self._xx, coefs)
        )
        out[:, -1] = quad / sigma2[:, 0, 0] - self.data.y.size
        return out

    def grad_unit_log_liks_weighted(
        self, draws: np.ndarray, units: Sequence[UnitIndex], coeffs: np.ndarray
    ) -> np.ndarray:
        _, groups, x, y, onehot = self._lookup(units)
        return self._grad_obs_weighted(draws, groups, x, y, onehot, np.asarray(coeffs, float))

    def _grad_obs_weighted(self, draws, groups, x, y, onehot, coeffs) -> np.ndarray:
        r = draws.shape[0]
        coefs = self._coefs(draws)
        sigma = self._sigma(draws)[:, None]
        mu = coefs[:, groups, 0] + coefs[:, groups, 1] * x
        resid = y - mu  # (R, U)
        base = coeffs * resid / sigma**2
        out = np.zeros_like(draws)
        grad_b = np.stack([base @ onehot, (base * x) @ onehot], axis=2)  # (R, G, 2)
        out[:, : 2 * self._g] = grad_b.reshape(r, -1)
        out[:, -1] = np.sum(coeffs * (resid**2 / sigma**2 - 1.0), axis=1)
        return out

    def initial_draw(self, rng: np.random.Generator) -> np.ndarray:
        return 0.1 * rng.standard_normal(self.dim)
