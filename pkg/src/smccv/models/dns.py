"""Dynamic three-factor yield-curve model with fixed decay.

Measurements y_t (one per month, K maturities) load on level, slope and
curvature factors that follow a random walk. The factor path and both
noise covariances are all part of the sampled state, so unit densities
are plain Gaussians given the draw and future units are evaluable without
extra simulation. Rejuvenation uses the conjugate sweep from
:mod:`smccv.gibbs`; partial deletion of the latest remaining observation
maps onto its likelihood power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import ParameterLayout, UnitIndex
from ..gibbs import DnsPriors, _sweep_batch
from ..transforms import (
    chol_from_packed,
    invwishart_logpdf,
    log_chol_jacobian,
    mvn_logpdf,
    packed_dim,
)
from .base import Model

__all__ = ["DnsData", "DnsModel", "factor_loadings", "DEFAULT_MATURITIES", "DEFAULT_DECAY"]

DEFAULT_MATURITIES = (2.0, 5.0, 10.0, 20.0, 30.0)
DEFAULT_DECAY = 0.0609

_STATE_DIM = 3


def factor_loadings(maturities: Sequence[float], decay: float = DEFAULT_DECAY) -> np.ndarray:
    """Loading matrix (K, 3): level, slope, curvature columns."""
    tau = np.asarray(maturities, dtype=float)
    lam = decay * tau
    slope = (1.0 - np.exp(-lam)) / lam
    curve = slope - np.exp(-lam)
    return np.column_stack([np.ones_like(tau), slope, curve])


@dataclass(frozen=True)
class DnsData:
    """Monthly yields (T, K) across fixed maturities."""

    y: np.ndarray
    maturities: tuple[float, ...] = DEFAULT_MATURITIES
    decay: float = DEFAULT_DECAY

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        object.__setattr__(self, "maturities", tuple(float(m) for m in self.maturities))
        if self.y.ndim != 2 or self.y.shape[1] != len(self.maturities):
            raise ValueError("y must be (T, n_maturities)")

    @property
    def horizon(self) -> int:
        return self.y.shape[0]

    @property
    def n_maturities(self) -> int:
        return self.y.shape[1]


class DnsModel(Model):
    default_kernel = "gibbs"
    has_gradient = False

    def __init__(self, data: DnsData):
        self.data = data
        t, k = data.horizon, data.n_maturities
        self._t, self._k = t, k
        self.group_sizes = (t,)
        self.design = factor_loadings(data.maturities, data.decay)
        self.layout = ParameterLayout(
            [
                ("factors", _STATE_DIM * (t + 1)),
                ("cov_y_chol", packed_dim(k)),
                ("cov_beta_chol", packed_dim(_STATE_DIM)),
            ]
        )
        self.priors = DnsPriors(
            mean0=np.zeros(_STATE_DIM),
            precision0=0.1 * np.eye(_STATE_DIM),
            nu0_y=2.0 * k,
            scale0_y=np.eye(k),
            nu0_beta=2.0 * _STATE_DIM,
            scale0_beta=np.eye(_STATE_DIM),
        )

    # -- packing -------------------------------------------------------------

    def unpack(self, draws: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Split rows into factor paths (R, T+1, 3) and covariance factors."""
        r = draws.shape[0]
        nb = _STATE_DIM * (self._t + 1)
        beta = draws[:, :nb].reshape(r, self._t + 1, _STATE_DIM)
        chol_y = chol_from_packed(draws[:, self.layout.block("cov_y_chol")], self._k)
        chol_b = chol_from_packed(draws[:, self.layout.block("cov_beta_chol")], _STATE_DIM)
        return beta, chol_y, chol_b

    def pack(self, beta: np.ndarray, cov_y: np.ndarray, cov_beta: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`unpack`, from covariance matrices."""
        r = beta.shape[0]
        out = np.empty((r, self.dim))
        out[:, : _STATE_DIM * (self._t + 1)] = beta.reshape(r, -1)
        ly = np.linalg.cholesky(cov_y)
        lb = np.linalg.cholesky(cov_beta)
        out[:, self.layout.block("cov_y_chol")] = _pack_chol(ly)
        out[:, self.layout.block("cov_beta_chol")] = _pack_chol(lb)
        return out

    # -- densities ---------------------------------------------------------------

    def log_prior(self, draws: np.ndarray) -> np.ndarray:
        beta, chol_y, chol_b = self.unpack(draws)
        prec0 = self.priors.precision0
        resid0 = beta[:, 0] - self.priors.mean0
        sign, logdet_p = np.linalg.slogdet(prec0)
        lp = 0.5 * logdet_p - 0.5 * _STATE_DIM * math.log(2 * math.pi)
        lp = lp - 0.5 * np.einsum("ri,ij,rj->r", resid0, prec0, resid0)
        incr = np.diff(beta, axis=1)
        lp += mvn_logpdf(incr, chol_b[:, None, :, :]).sum(axis=1)
        cov_y = chol_y @ np.swapaxes(chol_y, -1, -2)
        cov_b = chol_b @ np.swapaxes(chol_b, -1, -2)
        lp += invwishart_logpdf(cov_y, chol_y, self.priors.nu0_y, self.priors.scale0_y)
        lp += invwishart_logpdf(cov_b, chol_b, self.priors.nu0_beta, self.priors.scale0_beta)
        lp += log_chol_jacobian(draws[:, self.layout.block("cov_y_chol")], self._k)
        lp += log_chol_jacobian(draws[:, self.layout.block("cov_beta_chol")], _STATE_DIM)
        return lp

    def unit_log_liks(self, draws: np.ndarray, units: Sequence[UnitIndex]) -> np.ndarray:
        times = np.array([u.within for u in units])
        if any(u.group != 1 for u in units) or times.min() < 1 or times.max() > self._t:
            raise ValueError("units must be (1, t) with 1 <= t <= horizon")
        beta, chol_y, _ = self.unpack(draws)
        mean = np.einsum("kj,rtj->rtk", self.design, beta[:, times])
        resid = self.data.y[times - 1] - mean
        return mvn_logpdf(resid, chol_y[:, None, :, :])

    def total_log_lik(self, draws: np.ndarray) -> np.ndarray:
        return self.unit_log_liks(draws, self.units()).sum(axis=1)

    # -- conjugate rejuvenation -----------------------------------------------

    def deletion_pattern(
        self, units: Sequence[UnitIndex], exponents: np.ndarray
    ) -> tuple[int, float]:
        """Map per-unit exponents to (observation count, boundary power).

        The conjugate sweep supports exactly the ordered-deletion shape:
        a fully observed prefix, at most one partially weighted boundary
        observation, and a deleted suffix.
        """
        phi = np.ones(self._t)
        for u, e in zip(units, exponents):
            phi[u.within - 1] = e
        boundary = int(np.sum(phi > 0.0))
        expect = np.zeros(self._t)
        expect[: max(boundary - 1, 0)] = 1.0
        if boundary:
            expect[boundary - 1] = phi[boundary - 1]
        if not np.array_equal(phi, expect):
            raise ValueError(
                "conjugate sweep requires an ordered suffix deletion pattern"
            )
        rho = float(phi[boundary - 1]) if boundary else 1.0
        return boundary, rho

    def gibbs_rejuvenate(
        self,
        draws: np.ndarray,
        units: Sequence[UnitIndex],
        exponents: np.ndarray,
        iterations: int,
        rng: np.random.Generator,
    ) -> np.ndarray:
        n_obs, rho = self.deletion_pattern(units, exponents)
        beta, chol_y, chol_b = self.unpack(draws)
        cov_y = chol_y @ np.swapaxes(chol_y, -1, -2)
        cov_b = chol_b @ np.swapaxes(chol_b, -1, -2)
        y = self.data.y[:n_obs]
        for _ in range(iterations):
            beta, cov_y, cov_b = _sweep_batch(
                beta, cov_y, cov_b, y, self.design, self.priors, rho, rng
            )
        return self.pack(beta, cov_y, cov_b)

    def initial_draw(self, rng: np.random.Generator) -> np.ndarray:
        fit, *_ = np.linalg.lstsq(self.design, self.data.y.T, rcond=None)
        beta = np.vstack([fit[:, :1].T, fit.T])  # (T+1, 3), beta_0 = beta_1 fit
        out = np.zeros(self.dim)
        out[: _STATE_DIM * (self._t + 1)] = beta.ravel()
        return out + 0.01 * rng.standard_normal(self.dim)


def _pack_chol(chol: np.ndarray) -> np.ndarray:
    d = chol.shape[-1]
    rows, cols = np.tril_indices(d)
    out = chol[:, rows, cols].copy()
    diag = np.flatnonzero(rows == cols)
    out[:, diag] = np.log(chol[:, np.arange(d), np.arange(d)])
    return out
