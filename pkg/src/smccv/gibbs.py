"""Conjugate Gibbs machinery for the dynamic factor yield-curve model.

The model is a normal dynamic linear model: states follow a random walk
with innovation covariance ``cov_beta``, measurements are linear in the
states with noise covariance ``cov_y``. Partial case deletion raises the
final remaining observation's likelihood to a power ``rho`` in (0, 1];
conjugacy survives because the power only rescales that observation's
measurement precision and its contribution to the noise-covariance
update. Everything is batched over a leading particle axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transforms import ensure_spd

__all__ = [
    "DnsPriors",
    "DnsState",
    "iw_sample",
    "iw_sample_batch",
    "ffbs",
    "initial_state_conditional",
    "measurement_update",
    "dns_gibbs_sweep",
    "dns_gibbs_sweep_plain",
]


@dataclass(frozen=True)
class DnsPriors:
    """Conjugate priors: Gaussian initial state, inverse-Wishart covariances."""

    mean0: np.ndarray
    precision0: np.ndarray
    nu0_y: float
    scale0_y: np.ndarray
    nu0_beta: float
    scale0_beta: np.ndarray


@dataclass(frozen=True)
class DnsState:
    """One joint draw of the state path and covariances.

    ``rho`` records the power on the final observation's likelihood in the
    target the state was last drawn against (1 for the untempered model).
    """

    beta: np.ndarray  # (T+1, state_dim), index 0 is the initial state
    cov_y: np.ndarray
    cov_beta: np.ndarray
    rho: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        np.linalg.cholesky(self.cov_y)
        np.linalg.cholesky(self.cov_beta)


def iw_sample(nu: float, scale: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One inverse-Wishart draw via the Bartlett decomposition.

    Requires ``nu > dim - 1``; the mean is ``scale / (nu - dim - 1)`` when
    ``nu > dim + 1``.
    """
    return iw_sample_batch(nu, np.asarray(scale, dtype=float)[None, :, :], rng)[0]


def iw_sample_batch(nu: float, scales: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-Wishart draws with per-row scale matrices (R, d, d)."""
    r, d, _ = scales.shape
    if nu <= d - 1:
        raise ValueError(f"inverse-Wishart needs nu > dim - 1, got nu={nu}, dim={d}")
    a = np.zeros((r, d, d))
    idx = np.arange(d)
    for i in range(d):
        a[:, i, i] = np.sqrt(rng.chisquare(nu - i, size=r))
    if d > 1:
        rows, cols = np.tril_indices(d, k=-1)
        a[:, rows, cols] = rng.standard_normal((r, rows.size))
    chol_scale = np.linalg.cholesky(scales)
    # If W = A A' ~ Wishart(nu, I) then (L A^{-T})(L A^{-T})' ~ IW(nu, L L').
    m_t = np.linalg.solve(a, np.swapaxes(chol_scale, -1, -2))
    m = np.swapaxes(m_t, -1, -2)
    return m @ m_t


def _safe_chol(mat: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return np.linalg.cholesky(ensure_spd(mat))


def _symmetrize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + np.swapaxes(mat, -1, -2))


def ffbs(
    y: np.ndarray,
    design: np.ndarray,
    cov_y: np.ndarray,
    cov_beta: np.ndarray,
    mean0: np.ndarray,
    cov0: np.ndarray,
    rho: float,
    rng: np.random.Generator,
    t_total: int | None = None,
    fixed_initial: bool = False,
) -> np.ndarray:
    """Joint draw of the state path by forward filtering, backward sampling.

    Observations run over ``t = 1..n_obs``; the final one carries the
    likelihood power ``rho``, implemented by scaling its measurement
    precision (never its covariance, so ``rho`` near zero cannot
    overflow). States run to ``t_total >= n_obs``: steps past the data are
    pure prior propagation. With ``fixed_initial`` the initial state is
    pinned at ``mean0`` and not redrawn (the Gibbs sweep conditions on it);
    otherwise it has prior moments ``(mean0, cov0)`` and is sampled too.

    All covariance arguments are batched ``(R, ...)``; the return value is
    ``(R, t_total + 1, state_dim)``.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    n_obs = y.shape[0] if y.size else 0
    if t_total is None:
        t_total = n_obs
    if n_obs > t_total:
        raise ValueError("more observations than state steps")
    if n_obs and not 0.0 < rho <= 1.0:
        raise ValueError("rho must lie in (0, 1] when observations are present")

    r = cov_y.shape[0]
    sdim = cov_beta.shape[-1]
    filt_m = np.empty((t_total + 1, r, sdim))
    filt_p = np.empty((t_total + 1, r, sdim, sdim))
    pred_p = np.empty_like(filt_p)  # pred_p[t] = Var(beta_t | y_{1:t-1})
    filt_m[0] = mean0
    filt_p[0] = cov0
    pred_p[0] = cov0

    for t in range(1, t_total + 1):
        pm = filt_m[t - 1]
        pp = filt_p[t - 1] + cov_beta
        pred_p[t] = pp
        if t <= n_obs:
            w = rho if t == n_obs else 1.0
            b = design @ pp  # (R, K, sdim)
            innov_cov = w * (b @ design.T) + cov_y
            gain = w * np.swapaxes(np.linalg.solve(_symmetrize(innov_cov), b), -1, -2)
            resid = y[t - 1] - (pm @ design.T)
            filt_m[t] = pm + (gain @ resid[..., None])[..., 0]
            filt_p[t] = _symmetrize(pp - gain @ b)
        else:
            filt_m[t] = pm
            filt_p[t] = pp

    out = np.empty((r, t_total + 1, sdim))
    draw = filt_m[t_total] + (
        _safe_chol(filt_p[t_total]) @ rng.standard_normal((r, sdim, 1))
    )[..., 0]
    out[:, t_total] = draw
    t_stop = 1 if fixed_initial else 0
    for t in range(t_total - 1, t_stop - 1, -1):
        gain = np.swapaxes(np.linalg.solve(_symmetrize(pred_p[t + 1]), filt_p[t]), -1, -2)
        mean = filt_m[t] + (gain @ (draw - filt_m[t])[..., None])[..., 0]
        cov = _symmetrize(filt_p[t] - gain @ filt_p[t])
        draw = mean + (_safe_chol(cov) @ rng.standard_normal((r, sdim, 1)))[..., 0]
        out[:, t] = draw
    if fixed_initial:
        out[:, 0] = mean0
    return out


def initial_state_conditional(
    beta1: np.ndarray, cov_beta: np.ndarray, priors: DnsPriors
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian conditional of the initial state given the first transition.

    Returns the mean and precision: the precision adds the transition
    precision to the prior's, the mean solves the combined linear system.
    Batched over leading axes.
    """
    prec_b = np.linalg.inv(_symmetrize(cov_beta))
    p_hat = priors.precision0 + prec_b
    rhs = (priors.precision0 @ priors.mean0) + (prec_b @ beta1[..., None])[..., 0]
    m_hat = np.linalg.solve(p_hat, rhs[..., None])[..., 0]
    return m_hat, p_hat


def measurement_update(
    resid: np.ndarray, scale0: np.ndarray, nu0: float, rho: float | None
) -> tuple[float, np.ndarray]:
    """Inverse-Wishart update from measurement residuals.

    ``rho`` down-weights the final residual's outer product and lowers the
    degrees of freedom by ``1 - rho``; ``None`` selects the unmodified
    model's update.
    """
    n_obs = resid.shape[1]
    out = np.broadcast_to(scale0, (resid.shape[0], scale0.shape[0], scale0.shape[1])).copy()
    if n_obs > 1:
        out += np.einsum("rtk,rtj->rkj", resid[:, :-1], resid[:, :-1])
    if n_obs >= 1:
        last = resid[:, -1]
        w_last = 1.0 if rho is None else rho
        out += w_last * np.einsum("rk,rj->rkj", last, last)
    nu_hat = nu0 + n_obs if rho is None else nu0 + n_obs - (1.0 - rho)
    return nu_hat, out


def _sweep_batch(
    beta: np.ndarray,
    cov_y: np.ndarray,
    cov_beta: np.ndarray,
    y: np.ndarray,
    design: np.ndarray,
    priors: DnsPriors,
    rho: float | None,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One full conditional sweep; ``rho=None`` means the unmodified model."""
    r, t_plus_1, sdim = beta.shape
    t_total = t_plus_1 - 1
    y = np.atleast_2d(np.asarray(y, dtype=float)) if np.size(y) else np.zeros((0, cov_y.shape[-1]))
    n_obs = y.shape[0]
    plain = rho is None

    # 1. initial state given the first transition
    m_hat, p_hat = initial_state_conditional(beta[:, 1], cov_beta, priors)
    chol_prec = _safe_chol(p_hat)
    z = rng.standard_normal((r, sdim, 1))
    beta0 = m_hat + np.linalg.solve(np.swapaxes(chol_prec, -1, -2), z)[..., 0]
    beta = beta.copy()
    beta[:, 0] = beta0

    # 2. innovation covariance from all state increments
    incr = np.diff(beta, axis=1)
    s_beta = priors.scale0_beta + np.einsum("rtk,rtj->rkj", incr, incr)
    cov_beta = iw_sample_batch(priors.nu0_beta + t_total, s_beta, rng)

    # 3. state path given covariances (initial state pinned)
    rho_eff = 1.0 if plain else rho
    beta = ffbs(
        y,
        design,
        cov_y,
        cov_beta,
        beta[:, 0],
        np.zeros((r, sdim, sdim)),
        rho_eff,
        rng,
        t_total=t_total,
        fixed_initial=True,
    )

    # 4. measurement covariance from observed residuals
    if n_obs:
        resid = y[None, :, :] - np.einsum("kj,rtj->rtk", design, beta[:, 1 : n_obs + 1])
        nu_hat, s_y = measurement_update(resid, priors.scale0_y, priors.nu0_y, rho)
    else:
        s_y = np.broadcast_to(priors.scale0_y, cov_y.shape).copy()
        nu_hat = priors.nu0_y
    cov_y = iw_sample_batch(nu_hat, s_y, rng)
    return beta, cov_y, cov_beta


def dns_gibbs_sweep(
    state: DnsState,
    y: np.ndarray,
    design: np.ndarray,
    priors: DnsPriors,
    rho: float,
    rng: np.random.Generator,
) -> DnsState:
    """One sweep of the power-scaled sampler.

    ``rho`` scales the likelihood contribution of the last row of ``y``;
    ``rho = 0`` excludes that observation entirely (the update formulas
    reduce to the model with one fewer observation). State steps beyond
    the data, if any, are prior-propagated.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    y = np.atleast_2d(np.asarray(y, dtype=float)) if np.size(y) else np.zeros((0, state.cov_y.shape[0]))
    if rho == 0.0:
        y, rho = y[:-1], 1.0
    beta, cov_y, cov_beta = _sweep_batch(
        state.beta[None], state.cov_y[None], state.cov_beta[None], y, design, priors, rho, rng
    )
    return DnsState(beta=beta[0], cov_y=cov_y[0], cov_beta=cov_beta[0], rho=rho)


def dns_gibbs_sweep_plain(
    state: DnsState,
    y: np.ndarray,
    design: np.ndarray,
    priors: DnsPriors,
    rng: np.random.Generator,
) -> DnsState:
    """One sweep of the standard, unmodified sampler on the full data."""
    beta, cov_y, cov_beta = _sweep_batch(
        state.beta[None], state.cov_y[None], state.cov_beta[None], y, design, priors, None, rng
    )
    return DnsState(beta=beta[0], cov_y=cov_y[0], cov_beta=cov_beta[0], rho=1.0)
