"""Spatially correlated item panel with department effects.

Each item k is an S-vector of store outcomes:
y_k ~ MVN(mu + alpha_{g[k]} 1, Sigma) with mu ~ MVN(0, I), alpha_g ~
normal(0, 1) and Sigma ~ inverse-Wishart(2S, I). Sigma is parameterized
by its log-Cholesky coordinates, so the prior carries the transform
Jacobian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import ParameterLayout, UnitIndex
from ..transforms import (
    chol_from_packed,
    grad_cov_invwishart,
    grad_log_chol_jacobian,
    grad_packed_from_grad_cov,
    invwishart_logpdf,
    log_chol_jacobian,
    mvn_logpdf,
    packed_dim,
)
from .base import Model

__all__ = ["SpatialData", "SpatialMvnModel"]


@dataclass(frozen=True)
class SpatialData:
    """Item-by-store outcome matrix with 1-based dense department labels."""

    y: np.ndarray  # (n_items, n_stores)
    department: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        object.__setattr__(self, "department", np.asarray(self.department, dtype=int))
        if self.y.ndim != 2 or self.department.shape != (self.y.shape[0],):
            raise ValueError("y must be (items, stores) with one department per item")
        g = np.unique(self.department)
        if g[0] != 1 or g[-1] != g.size:
            raise ValueError("department ids must be dense and 1-based")

    @property
    def n_stores(self) -> int:
        return self.y.shape[1]

    @property
    def n_groups(self) -> int:
        return int(self.department.max())

    def group_sizes(self) -> tuple[int, ...]:
        return tuple(int(np.sum(self.department == g)) for g in range(1, self.n_groups + 1))


class SpatialMvnModel(Model):
    default_kernel = "hmc"
    has_gradient = True

    def __init__(self, data: SpatialData):
        self.data = data
        s, g = data.n_stores, data.n_groups
        self._s, self._g = s, g
        self.group_sizes = data.group_sizes()
        self.layout = ParameterLayout(
            [("store_means", s), ("dept_effects", g), ("cov_chol", packed_dim(s))]
        )
        self._iw_nu = 2.0 * s
        self._iw_scale = np.eye(s)
        counters = [0] * (g + 1)
        self._item_index: dict[UnitIndex, int] = {}
        for j, grp in enumerate(data.department):
            counters[grp] += 1
            self._item_index[UnitIndex(int(grp), counters[grp])] = j
        self._lookup_cache: dict[tuple, tuple] = {}
        # per-group sufficient statistics for the full-likelihood gradient
        self._group_counts = np.bincount(data.department - 1, minlength=g).astype(float)
        self._group_ysums = np.zeros((g, s))
        for j in range(data.y.shape[0]):
            self._group_ysums[data.department[j] - 1] += data.y[j]
        self._yy_outer = data.y.T @ data.y  # (S, S)

    def _lookup(self, units: Sequence[UnitIndex]):
        """Cached (items, groups, group-indicator) arrays for a unit list."""
        key = tuple(units)
        hit = self._lookup_cache.get(key)
        if hit is None:
            items = np.array([self._item_index[u] for u in units])
            groups = self.data.department[items] - 1
            onehot = np.zeros((len(units), self._g))
            onehot[np.arange(len(units)), groups] = 1.0
            hit = (items, groups, onehot)
            self._lookup_cache[key] = hit
        return hit

    def _unpack(self, draws: np.ndarray):
        s, g = self._s, self._g
        mu = draws[:, :s]
        alpha = draws[:, s : s + g]
        chol = chol_from_packed(draws[:, s + g :], s)
        return mu, alpha, chol

    def log_prior(self, draws: np.ndarray) -> np.ndarray:
        s, g = self._s, self._g
        mu, alpha, chol = self._unpack(draws)
        packed = draws[:, s + g :]
        cov = chol @ np.swapaxes(chol, -1, -2)
        lp = -0.5 * np.sum(mu**2, axis=1) - 0.5 * s * math.log(2 * math.pi)
        lp += -0.5 * np.sum(alpha**2, axis=1) - 0.5 * g * math.log(2 * math.pi)
        lp += invwishart_logpdf(cov, chol, self._iw_nu, self._iw_scale)
        lp += log_chol_jacobian(packed, s)
        return lp

    def _item_log_liks(self, draws: np.ndarray, items: np.ndarray, groups: np.ndarray) -> np.ndarray:
        mu, alpha, chol = self._unpack(draws)
        mean = mu[:, None, :] + alpha[:, groups, None]
        resid = self.data.y[items] - mean  # (R, U, S)
        return mvn_logpdf(resid, chol[:, None, :, :])

    def unit_log_liks(self, draws: np.ndarray, units: Sequence[UnitIndex]) -> np.ndarray:
        items, groups, _ = self._lookup(units)
        return self._item_log_liks(draws, items, groups)

    def total_log_lik(self, draws: np.ndarray) -> np.ndarray:
        n = self.data.y.shape[0]
        return self._item_log_liks(draws, np.arange(n), self.data.department - 1).sum(axis=1)

    def grad_log_prior(self, draws: np.ndarray) -> np.ndarray:
        s, g = self._s, self._g
        mu, alpha, chol = self._unpack(draws)
        out = np.zeros_like(draws)
        out[:, :s] = -mu
        out[:, s : s + g] = -alpha
        grad_cov = grad_cov_invwishart(chol, self._iw_nu, self._iw_scale)
        out[:, s + g :] = grad_packed_from_grad_cov(grad_cov, chol) + grad_log_chol_jacobian(
            draws[:, s + g :], s
        )
        return out

    def grad_total_log_lik(self, draws: np.ndarray) -> np.ndarray:
        s, g = self._s, self._g
        mu, alpha, chol = self._unpack(draws)
        cov = chol @ np.swapaxes(chol, -1, -2)
        prec = np.linalg.inv(cov)
        centers = mu[:, None, :] + alpha[:, :, None]  # (R, G, S)
        resid_sums = self._group_ysums[None] - self._group_counts[None, :, None] * centers
        prec_rs = np.einsum("rst,rgt->rgs", prec, resid_sums)

        out = np.zeros_like(draws)
        out[:, :s] = prec_rs.sum(axis=1)
        out[:, s : s + g] = prec_rs.sum(axis=2)
        # sum of residual outer products via group statistics
        cross = np.einsum("gs,rgt->rst", self._group_ysums, centers)
        m = (
            self._yy_outer[None]
            - cross
            - np.swapaxes(cross, -1, -2)
            + np.einsum("g,rgs,rgt->rst", self._group_counts, centers, centers)
        )
        n_items = self.data.y.shape[0]
        grad_cov = 0.5 * (prec @ m @ prec) - 0.5 * n_items * prec
        out[:, s + g :] = grad_packed_from_grad_cov(grad_cov, chol)
        return out

    def grad_unit_log_liks_weighted(
        self, draws: np.ndarray, units: Sequence[UnitIndex], coeffs: np.ndarray
    ) -> np.ndarray:
        items, groups, onehot = self._lookup(units)
        return self._grad_items_weighted(draws, items, groups, onehot, np.asarray(coeffs, float))

    def _grad_items_weighted(self, draws, items, groups, onehot, coeffs) -> np.ndarray:
        s, g = self._s, self._g
        mu, alpha, chol = self._unpack(draws)
        mean = mu[:, None, :] + alpha[:, groups, None]
        resid = self.data.y[items] - mean  # (R, U, S)
        cov = chol @ np.swapaxes(chol, -1, -2)
        prec_resid = np.linalg.solve(cov[:, None, :, :], resid[..., None])[..., 0]

        out = np.zeros_like(draws)
        out[:, :s] = np.einsum("u,rus->rs", coeffs, prec_resid)
        out[:, s : s + g] = (coeffs * prec_resid.sum(axis=2)) @ onehot

        # d/dSigma sum_u c_u loglik_u = 1/2 sum c_u (P r r' P - P)
        quad = np.einsum("u,rus,rut->rst", coeffs, prec_resid, prec_resid)
        prec = np.linalg.inv(cov)
        grad_cov = 0.5 * quad - 0.5 * np.sum(coeffs) * prec
        out[:, s + g :] = grad_packed_from_grad_cov(grad_cov, chol)
        return out

    def initial_draw(self, rng: np.random.Generator) -> np.ndarray:
        return 0.1 * rng.standard_normal(self.dim)
