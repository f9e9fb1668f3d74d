"""Desk-scale synthetic data shaped like the three application datasets.

Each generator draws from its model's own generative process and returns
the dataset together with the true parameters used, for diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conjugate import ConjugateData
from .dns import DEFAULT_DECAY, DEFAULT_MATURITIES, DnsData, factor_loadings
from .multilevel import MultilevelData
from .spatial import SpatialData

__all__ = [
    "ConjugateShape",
    "RadonShape",
    "DnsShape",
    "M5Shape",
    "generate_synthetic",
]


@dataclass(frozen=True)
class ConjugateShape:
    groups: int = 10
    group_size: int = 20
    kappa: float = 1.0
    tau: float = 1.0
    sigma: float = 1.0


@dataclass(frozen=True)
class RadonShape:
    """Grouped regression with strongly skewed group sizes."""

    groups: int = 20
    max_group_size: int = 30
    sigma: float = 0.7


@dataclass(frozen=True)
class DnsShape:
    months: int = 60
    maturities: tuple[float, ...] = DEFAULT_MATURITIES
    decay: float = DEFAULT_DECAY
    state_scale: float = 0.1
    noise_scale: float = 0.05


@dataclass(frozen=True)
class M5Shape:
    stores: int = 10
    departments: int = 7
    items_per_department: int = 30


def _conjugate(shape: ConjugateShape, rng: np.random.Generator):
    mu = rng.normal(0.0, shape.kappa)
    theta = rng.normal(mu, shape.tau, size=shape.groups)
    group = np.repeat(np.arange(1, shape.groups + 1), shape.group_size)
    y = rng.normal(theta[group - 1], shape.sigma)
    data = ConjugateData(y=y, group=group)
    return data, {"location": mu, "effects": theta}


def _radon(shape: RadonShape, rng: np.random.Generator):
    g = shape.groups
    # sizes skewed toward small groups; one group pinned at the maximum
    sizes = 1 + np.floor((shape.max_group_size - 1) * rng.random(g) ** 3).astype(int)
    sizes[rng.integers(g)] = shape.max_group_size
    u = rng.normal(0.0, 1.0, size=g)
    loading = rng.normal(0.0, 1.0, size=(2, 2))
    chol = np.array([[0.4, 0.0], [0.1, 0.3]])
    cov = chol @ chol.T
    coefs = np.column_stack([np.ones(g), u]) @ loading.T + rng.multivariate_normal(
        np.zeros(2), cov, size=g
    )
    group = np.repeat(np.arange(1, g + 1), sizes)
    x = rng.integers(0, 2, size=group.size).astype(float)
    mean = coefs[group - 1, 0] + coefs[group - 1, 1] * x
    y = rng.normal(mean, shape.sigma)
    data = MultilevelData(y=y, x=x, group=group, u=u)
    truth = {"coefs": coefs, "loading": loading, "cov": cov, "sigma": shape.sigma}
    return data, truth


def _dns(shape: DnsShape, rng: np.random.Generator):
    k = len(shape.maturities)
    design = factor_loadings(shape.maturities, shape.decay)
    cov_beta = shape.state_scale**2 * np.eye(3)
    cov_y = shape.noise_scale**2 * np.eye(k)
    beta = np.empty((shape.months + 1, 3))
    beta[0] = np.array([3.0, -1.0, 0.5])
    steps = rng.multivariate_normal(np.zeros(3), cov_beta, size=shape.months)
    beta[1:] = beta[0] + np.cumsum(steps, axis=0)
    noise = rng.multivariate_normal(np.zeros(k), cov_y, size=shape.months)
    y = beta[1:] @ design.T + noise
    data = DnsData(y=y, maturities=shape.maturities, decay=shape.decay)
    return data, {"factors": beta, "cov_y": cov_y, "cov_beta": cov_beta}


def _m5(shape: M5Shape, rng: np.random.Generator):
    s, g = shape.stores, shape.departments
    mu = rng.normal(0.0, 0.5, size=s)
    alpha = rng.normal(0.0, 0.5, size=g)
    a = rng.normal(0.0, 0.3, size=(s, s))
    cov = a @ a.T / s + 0.05 * np.eye(s)
    dept = np.repeat(np.arange(1, g + 1), shape.items_per_department)
    mean = mu + alpha[dept - 1][:, None]
    y = mean + rng.multivariate_normal(np.zeros(s), cov, size=dept.size)
    data = SpatialData(y=y, department=dept)
    return data, {"store_means": mu, "dept_effects": alpha, "cov": cov}


_GENERATORS = {
    "conjugate": (_conjugate, ConjugateShape),
    "radon": (_radon, RadonShape),
    "dns": (_dns, DnsShape),
    "m5": (_m5, M5Shape),
}


def generate_synthetic(kind: str, shape, rng: np.random.Generator):
    """Draw a dataset from the named model's generative process.

    Returns ``(data, truth)`` where ``truth`` records the parameters the
    data were generated from.
    """
    if kind not in _GENERATORS:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    gen, shape_cls = _GENERATORS[kind]
    if shape is None:
        shape = shape_cls()
    if not isinstance(shape, shape_cls):
        raise TypeError(f"{kind} generator expects {shape_cls.__name__}")
    return gen(shape, rng)
