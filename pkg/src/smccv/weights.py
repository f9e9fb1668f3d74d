"""Log-domain importance weight arithmetic and tail diagnostics.

Everything here operates on log weights until the final normalization:
case-deletion weights are reciprocals of likelihood products and underflow
immediately in linear space. The generalized Pareto machinery follows the
standard PSIS recipe: fit the largest weights' exceedances over a cutoff,
replace them by expected order statistics of the fitted distribution, and
report the shape estimate as a reliability diagnostic.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "DegenerateWeightsError",
    "TailTooSmallError",
    "WeightVector",
    "ParetoDiagnostic",
    "log_sum_exp",
    "normalize",
    "ess",
    "tail_length",
    "gpd_fit",
    "gpd_quantile",
    "pareto_smooth",
    "weighted_log_estimand",
]


class DegenerateWeightsError(ValueError):
    """All log weights are -inf; no normalization exists."""


class TailTooSmallError(ValueError):
    """Fewer than five exceedances; generalized Pareto fit is undefined."""


class WeightVector(NamedTuple):
    """Log weights together with their self-normalized counterpart."""

    log_w: np.ndarray
    normalized: np.ndarray


class ParetoDiagnostic(NamedTuple):
    """Result of Pareto-smoothing a weight vector.

    ``k_hat`` is ``+inf`` when the tail could not be fitted (too few
    distinct exceedances), in which case ``smoothed`` equals the plain
    normalized weights and callers should fall back to rejuvenation.
    """

    k_hat: float
    sigma_hat: float
    tail_size: int
    smoothed: WeightVector


def log_sum_exp(xs: Sequence[float] | np.ndarray) -> float:
    """Return ``log(sum(exp(xs)))`` computed with a max shift.

    Returns ``-inf`` iff every input is ``-inf``. Raises on empty input.
    """
    x = np.asarray(xs, dtype=float)
    if x.size == 0:
        raise ValueError("log_sum_exp of empty sequence")
    m = np.max(x)
    if not np.isfinite(m):
        if m == -np.inf:
            return -math.inf
        raise ValueError("log_sum_exp input contains nan or +inf")
    return float(m + np.log(np.sum(np.exp(x - m))))


def normalize(log_w: Sequence[float] | np.ndarray) -> WeightVector:
    """Self-normalize log weights.

    The result is invariant to adding a constant to all inputs. Raises
    :class:`DegenerateWeightsError` when every weight is ``-inf``.
    """
    lw = np.asarray(log_w, dtype=float)
    if lw.size == 0:
        raise ValueError("cannot normalize empty weight vector")
    total = log_sum_exp(lw)
    if total == -math.inf:
        raise DegenerateWeightsError("degenerate weights: all log weights are -inf")
    return WeightVector(log_w=lw, normalized=np.exp(lw - total))


def ess(weights: WeightVector | np.ndarray) -> float:
    """Effective sample size ``1 / sum(W^2)`` of normalized weights.

    Lies in ``[1, R]``; equals ``R`` iff the weights are uniform.
    """
    w = weights.normalized if isinstance(weights, WeightVector) else np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w * w))


def tail_length(r: int) -> int:
    """Number of upper-tail weights used for the generalized Pareto fit."""
    return int(math.ceil(min(0.2 * r, 3.0 * math.sqrt(r))))


def gpd_fit(exceedances: np.ndarray) -> tuple[float, float]:
    """Fit a generalized Pareto distribution to positive exceedances.

    Profile-likelihood point estimate over a data-driven grid of inverse
    scale proposals (no shrinkage prior on the shape). The estimator is
    scale equivariant: scaling the input by ``c`` scales ``sigma_hat`` by
    ``c`` and leaves ``k_hat`` unchanged.

    Parameters
    ----------
    exceedances : ndarray
        Positive tail exceedances sorted ascending, at least 5 of them.

    Returns
    -------
    (k_hat, sigma_hat)
        Shape and scale estimates; ``sigma_hat > 0``.
    """
    x = np.asarray(exceedances, dtype=float)
    n = x.size
    if n < 5:
        raise TailTooSmallError("tail too small: need at least 5 exceedances")
    if x[0] <= 0 or np.any(np.diff(x) < 0):
        raise ValueError("exceedances must be positive and sorted ascending")

    m = 30 + int(math.isqrt(n))
    # Grid of inverse-scale proposals b = k/sigma, anchored at the first
    # quartile and the maximum so the grid rescales with the data.
    b = 1.0 - np.sqrt(m / (np.arange(1, m + 1, dtype=float) - 0.5))
    b /= 3.0 * x[int(n / 4 + 0.5) - 1]
    b += 1.0 / x[-1]

    k = np.log1p(-b[:, None] * x).mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        profile = n * (np.log(-b / k) - k - 1.0)
    profile[~np.isfinite(profile)] = -np.inf

    # Weights proportional to exp(profile), computed without overflow.
    rel = profile - profile.max()
    w = np.exp(rel)
    w /= w.sum()

    b_star = float(np.sum(b * w))
    if b_star == 0.0:
        return 0.0, float(x.mean())
    k_hat = float(np.log1p(-b_star * x).mean())
    sigma_hat = -k_hat / b_star
    return k_hat, sigma_hat


def gpd_quantile(p: np.ndarray, k: float, sigma: float) -> np.ndarray:
    """Inverse CDF of the generalized Pareto distribution at ``p``."""
    p = np.asarray(p, dtype=float)
    if abs(k) < np.finfo(float).eps:
        return -sigma * np.log1p(-p)
    return sigma * np.expm1(-k * np.log1p(-p)) / k


def pareto_smooth(log_w: Sequence[float] | np.ndarray) -> ParetoDiagnostic:
    """Pareto-smooth the upper tail of a log-weight vector.

    The ``M = ceil(min(0.2 R, 3 sqrt(R)))`` largest weights are replaced by
    expected order statistics of a generalized Pareto distribution fitted
    to their exceedances over the ``(M+1)``-th largest weight, capped at the
    raw maximum; the rest are untouched and the result is renormalized.

    Requires ``R >= 25`` so at least five exceedances are available. When
    the tail cannot be fitted (ties with the cutoff leave fewer than five
    strictly positive exceedances) the weights are returned unsmoothed with
    ``k_hat = +inf``, which callers treat as a failed diagnostic.
    """
    lw = np.asarray(log_w, dtype=float)
    r = lw.size
    if r < 25:
        raise ValueError(f"pareto_smooth needs at least 25 weights, got {r}")
    total = log_sum_exp(lw)
    if total == -math.inf:
        raise DegenerateWeightsError("degenerate weights: all log weights are -inf")

    m = tail_length(r)
    x = lw - np.max(lw)
    order = np.argsort(x, kind="stable")
    cutoff = max(x[order[-m - 1]], math.log(np.finfo(float).tiny))

    tail_idx = order[-m:]
    tail_idx = tail_idx[x[tail_idx] > cutoff]
    if tail_idx.size < 5:
        return ParetoDiagnostic(math.inf, math.nan, int(tail_idx.size), normalize(lw))

    exceed = np.exp(x[tail_idx]) - math.exp(cutoff)
    k_hat, sigma_hat = gpd_fit(exceed)
    if not math.isfinite(k_hat):
        return ParetoDiagnostic(math.inf, math.nan, int(tail_idx.size), normalize(lw))

    n_tail = tail_idx.size
    probs = (np.arange(1, n_tail + 1) - 0.5) / n_tail
    smoothed_tail = np.log(gpd_quantile(probs, k_hat, sigma_hat) + math.exp(cutoff))
    smoothed = x.copy()
    # tail_idx is ordered ascending in weight, matching the quantile order.
    smoothed[tail_idx] = np.minimum(smoothed_tail, 0.0)
    return ParetoDiagnostic(float(k_hat), float(sigma_hat), int(n_tail), normalize(smoothed))


def weighted_log_estimand(weights: WeightVector, log_f: Sequence[float] | np.ndarray) -> float:
    """Return ``log sum_r W[r] * exp(log_f[r])`` in the log domain."""
    log_f = np.asarray(log_f, dtype=float)
    if log_f.shape != weights.normalized.shape:
        raise ValueError("weights and estimand values have mismatched lengths")
    with np.errstate(divide="ignore"):
        log_wn = np.log(weights.normalized)
    return log_sum_exp(log_wn + log_f)
