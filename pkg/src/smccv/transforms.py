"""Unconstrained parameterizations of scale and covariance blocks.

Scalar scales are stored as logs. SPD matrices are stored as packed lower
Cholesky factors with log diagonals, so every real vector of the right
length maps to a valid covariance and generic kernels can roam all of R^d.
All routines are batched over a leading particle axis.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "packed_dim",
    "chol_from_packed",
    "packed_from_cov",
    "cov_from_packed",
    "log_chol_jacobian",
    "grad_packed_from_grad_cov",
    "grad_log_chol_jacobian",
    "mvn_logpdf",
    "invwishart_logpdf",
    "grad_cov_invwishart",
    "ensure_spd",
    "NumericalError",
]


class NumericalError(RuntimeError):
    """A covariance lost positive definiteness beyond repair."""


def packed_dim(d: int) -> int:
    return d * (d + 1) // 2


def _tril_ix(d: int) -> tuple[np.ndarray, np.ndarray]:
    return np.tril_indices(d)


def _diag_positions(d: int) -> np.ndarray:
    """Positions of diagonal entries within the packed vector."""
    rows, cols = _tril_ix(d)
    return np.flatnonzero(rows == cols)


def chol_from_packed(packed: np.ndarray, d: int) -> np.ndarray:
    """Lower Cholesky factors (R, d, d) from packed vectors (R, d(d+1)/2)."""
    packed = np.atleast_2d(packed)
    r = packed.shape[0]
    L = np.zeros((r, d, d))
    rows, cols = _tril_ix(d)
    L[:, rows, cols] = packed
    idx = np.arange(d)
    L[:, idx, idx] = np.exp(L[:, idx, idx])
    return L


def cov_from_packed(packed: np.ndarray, d: int) -> np.ndarray:
    L = chol_from_packed(packed, d)
    return L @ np.swapaxes(L, -1, -2)


def packed_from_cov(cov: np.ndarray) -> np.ndarray:
    """Packed log-Cholesky vector of one SPD matrix."""
    L = np.linalg.cholesky(cov)
    d = L.shape[0]
    out = L[np.tril_indices(d)].copy()
    out[_diag_positions(d)] = np.log(np.diag(L))
    return out


def log_chol_jacobian(packed: np.ndarray, d: int) -> np.ndarray:
    """Log |d cov / d packed| for the log-Cholesky map, batched.

    Combines the Cholesky-to-SPD Jacobian 2^d prod L_kk^(d-k+1) with the
    log transform of the diagonal.
    """
    packed = np.atleast_2d(packed)
    logdiag = packed[:, _diag_positions(d)]
    powers = d - np.arange(1, d + 1) + 2.0
    return d * math.log(2.0) + logdiag @ powers


def grad_log_chol_jacobian(packed: np.ndarray, d: int) -> np.ndarray:
    """Gradient of :func:`log_chol_jacobian` w.r.t. the packed vector."""
    packed = np.atleast_2d(packed)
    g = np.zeros_like(packed)
    g[:, _diag_positions(d)] = d - np.arange(1, d + 1) + 2.0
    return g


def grad_packed_from_grad_cov(grad_cov: np.ndarray, L: np.ndarray) -> np.ndarray:
    """Chain a symmetric gradient w.r.t. the covariance into packed space.

    ``grad_cov`` (R, d, d) must already be symmetric. The factor-space
    gradient is ``2 grad_cov L``; diagonal entries then pick up a factor
    ``L_kk`` from the log transform.
    """
    d = L.shape[-1]
    gl = 2.0 * (grad_cov @ L)
    rows, cols = _tril_ix(d)
    out = gl[:, rows, cols].copy()
    dp = _diag_positions(d)
    idx = np.arange(d)
    out[:, dp] *= L[:, idx, idx]
    return out


def mvn_logpdf(resid: np.ndarray, chol: np.ndarray) -> np.ndarray:
    """Multivariate normal log density from residuals and Cholesky factors.

    ``resid`` broadcasts as (..., d) against ``chol`` (..., d, d); solves
    use the triangular structure via explicit forward substitution-free
    linalg (small d, general solve is fine).
    """
    d = resid.shape[-1]
    z = np.linalg.solve(chol, resid[..., None])[..., 0]
    quad = np.sum(z * z, axis=-1)
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    return -0.5 * (d * math.log(2.0 * math.pi) + logdet + quad)


def _multigammaln(a: float, d: int) -> float:
    return d * (d - 1) / 4.0 * math.log(math.pi) + sum(
        math.lgamma(a + (1 - j) / 2.0) for j in range(1, d + 1)
    )


def invwishart_logpdf(cov: np.ndarray, chol: np.ndarray, nu: float, scale: np.ndarray) -> np.ndarray:
    """Inverse-Wishart log density, batched over leading axes of ``cov``."""
    d = scale.shape[0]
    sign, logdet_scale = np.linalg.slogdet(scale)
    if sign <= 0:
        raise ValueError("inverse-Wishart scale must be SPD")
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    # tr(S cov^{-1}) via cov^{-1} = L^{-T} L^{-1}
    inv_l = np.linalg.solve(chol, np.broadcast_to(np.eye(d), chol.shape).copy())
    prec = np.swapaxes(inv_l, -1, -2) @ inv_l
    trace = np.einsum("ij,...ji->...", scale, prec)
    const = 0.5 * nu * logdet_scale - 0.5 * nu * d * math.log(2.0) - _multigammaln(nu / 2.0, d)
    return const - 0.5 * (nu + d + 1.0) * logdet - 0.5 * trace


def grad_cov_invwishart(chol: np.ndarray, nu: float, scale: np.ndarray) -> np.ndarray:
    """Gradient of the inverse-Wishart log density w.r.t. the covariance."""
    d = scale.shape[0]
    inv_l = np.linalg.solve(chol, np.broadcast_to(np.eye(d), chol.shape).copy())
    prec = np.swapaxes(inv_l, -1, -2) @ inv_l
    return -0.5 * (nu + d + 1.0) * prec + 0.5 * (prec @ scale @ prec)


def ensure_spd(mat: np.ndarray, jitter: float = 1e-10) -> np.ndarray:
    """Resymmetrize and, if needed, jitter a drifting covariance.

    Raises :class:`NumericalError` if a Cholesky factorization still fails
    after jittering.
    """
    sym = 0.5 * (mat + np.swapaxes(mat, -1, -2))
    try:
        np.linalg.cholesky(sym)
        return sym
    except np.linalg.LinAlgError:
        pass
    d = sym.shape[-1]
    sym = sym + jitter * np.eye(d)
    try:
        np.linalg.cholesky(sym)
        return sym
    except np.linalg.LinAlgError as exc:
        raise NumericalError("covariance not positive definite after jitter") from exc
