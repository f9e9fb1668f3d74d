"""Built-in invariant suite behind ``smccv selftest``.

Fast, deterministic spot checks of the numerical core; the full pytest
suite is the authoritative verification.
"""

from __future__ import annotations

import math

import numpy as np

from .core import build_lgo_scheme
from .engine import resample_systematic
from .paths import DeletionPath, incremental_log_weights
from .weights import ess, gpd_fit, log_sum_exp, normalize, pareto_smooth

__all__ = ["run_all"]


def _check_logsumexp():
    ok = abs(log_sum_exp([0.0, 0.0]) - math.log(2)) < 1e-12
    ok &= abs(log_sum_exp([-1000.0, -1000.0]) - (-1000 + math.log(2))) < 1e-9
    ok &= log_sum_exp([-math.inf, -math.inf]) == -math.inf
    return ok, ""


def _check_normalize_shift():
    rng = np.random.default_rng(0)
    lw = rng.normal(size=100)
    a = normalize(lw).normalized
    b = normalize(lw + 123.4).normalized
    return bool(np.allclose(a, b, atol=1e-12)), ""


def _check_ess_bounds():
    rng = np.random.default_rng(1)
    lw = rng.normal(size=200)
    value = ess(normalize(lw))
    ok = 1.0 <= value <= 200.0
    ok &= abs(ess(normalize(np.zeros(64))) - 64.0) < 1e-9
    return ok, f"ess={value:.2f}"


def _check_gpd_recovery():
    rng = np.random.default_rng(2)
    u = rng.random(2000)
    k_true, sigma = 0.5, 1.0
    x = np.sort(sigma / k_true * ((1 - u) ** -k_true - 1))
    k_hat, _ = gpd_fit(x)
    return abs(k_hat - k_true) < 0.1, f"k_hat={k_hat:.3f}"


def _check_smoothing_mass():
    rng = np.random.default_rng(3)
    lw = rng.normal(size=500)
    lw[0] += 12.0
    diag = pareto_smooth(lw)
    total = diag.smoothed.normalized.sum()
    raw_max = normalize(lw).normalized.max()
    ok = abs(total - 1.0) < 1e-9 and diag.smoothed.normalized.max() <= raw_max + 1e-12
    return ok, f"k_hat={diag.k_hat:.3f}"


def _check_resampler_counts():
    rng = np.random.default_rng(4)
    anc = resample_systematic(np.full(64, 1.0 / 64), rng)
    ok = np.array_equal(np.sort(anc), np.arange(64))
    anc2 = resample_systematic(np.array([0.75, 0.25]), rng, size=4)
    counts = np.bincount(anc2, minlength=2)
    ok &= counts[0] == 3 and counts[1] == 1
    return bool(ok), ""


def _check_weight_telescoping():
    rng = np.random.default_rng(5)
    liks = rng.normal(size=(50, 4))
    path = DeletionPath(family="tempering", length=4.0)
    split = (
        incremental_log_weights(liks, path, 0.0, 1.3)
        + incremental_log_weights(liks, path, 1.3, 4.0)
    )
    direct = incremental_log_weights(liks, path, 0.0, 4.0)
    return bool(np.allclose(split, direct, atol=1e-12)), ""


def _check_scheme_shapes():
    scheme = build_lgo_scheme([2, 1])
    ok = scheme.fold_sizes == (2, 1) and scheme.n_folds == 2
    return ok, ""


CHECKS = [
    ("log_sum_exp shift and identities", _check_logsumexp),
    ("normalize shift invariance", _check_normalize_shift),
    ("ess bounds", _check_ess_bounds),
    ("generalized Pareto shape recovery", _check_gpd_recovery),
    ("pareto smoothing mass and cap", _check_smoothing_mass),
    ("systematic resampler integer counts", _check_resampler_counts),
    ("incremental weight additivity", _check_weight_telescoping),
    ("scheme construction", _check_scheme_shapes),
]


def run_all() -> list[tuple[str, bool, str]]:
    out = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, repr(exc)
        out.append((name, bool(ok), detail))
    return out
