"""Domain types shared across the sampler: units, folds, schemes, layouts.

A cross-validation scheme is a collection of folds, each fold a set of
conditionally independent units ``(group, within)``. Backward-sequential
schemes additionally carry a deletion order (rank 1 is deleted first) and
integer checkpoints at which estimands must be evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "UnitIndex",
    "ParameterLayout",
    "ParameterDraw",
    "DeletionScheme",
    "EstimandSpec",
    "ALL_GROUPS",
    "build_loo_scheme",
    "build_lgo_scheme",
    "build_group_kfold_scheme",
    "build_leo_schedule",
]

ALL_GROUPS = -1
"""Sentinel for the across-group backward-sequential scheme."""


class UnitIndex(NamedTuple):
    """One conditionally independent observation unit, 1-based."""

    group: int
    within: int


class ParameterLayout:
    """Maps named parameter blocks to index ranges of a flat vector."""

    def __init__(self, blocks: Sequence[tuple[str, int]]):
        self._slices: dict[str, slice] = {}
        offset = 0
        for name, size in blocks:
            if size < 1:
                raise ValueError(f"block {name!r} must have positive size")
            self._slices[name] = slice(offset, offset + size)
            offset += size
        self.dim = offset

    def block(self, name: str) -> slice:
        return self._slices[name]

    def names(self) -> tuple[str, ...]:
        return tuple(self._slices)


@dataclass(frozen=True)
class ParameterDraw:
    """A joint parameter state in a model's flat unconstrained layout."""

    values: np.ndarray
    layout: ParameterLayout

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size != self.layout.dim:
            raise ValueError(f"expected {self.layout.dim} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("parameter draw contains non-finite values")
        object.__setattr__(self, "values", v)

    def block(self, name: str) -> np.ndarray:
        return self.values[self.layout.block(name)]


@dataclass(frozen=True)
class DeletionScheme:
    """A fold structure describing which units are deleted, and in what order.

    ``ranks`` is populated for backward-sequential kinds only: one tuple per
    fold, parallel to the fold's units, giving each unit's deletion rank
    (rank 1 deleted first; ties are deleted simultaneously). ``checkpoints``
    are the integer deletion counts at which estimands are evaluated.
    """

    kind: str
    folds: tuple[tuple[UnitIndex, ...], ...]
    checkpoints: tuple[int, ...] = ()
    ranks: tuple[tuple[int, ...], ...] = ()
    balanced: bool = True

    KINDS = ("loo", "lgo", "leo-within", "leo-across", "lso")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown scheme kind {self.kind!r}")
        if not self.folds or any(len(f) == 0 for f in self.folds):
            raise ValueError("folds must be non-empty")
        if self.kind in ("loo", "lgo", "lso"):
            seen: set[UnitIndex] = set()
            for f in self.folds:
                units = set(f)
                if units & seen:
                    raise ValueError("folds must be pairwise disjoint")
                seen |= units
        if self.is_sequential:
            if len(self.folds) != 1 or len(self.ranks) != 1:
                raise ValueError("sequential schemes have exactly one ranked fold")
            ranks = self.ranks[0]
            if len(ranks) != len(self.folds[0]):
                raise ValueError("ranks must parallel the fold's units")
            total = max(ranks)
            cps = self.checkpoints
            if not cps or any(b <= a for a, b in zip(cps, cps[1:])) or cps[-1] != total:
                raise ValueError(
                    "checkpoints must be strictly increasing and end at the deletion count"
                )

    @property
    def is_sequential(self) -> bool:
        return self.kind.startswith("leo")

    @property
    def n_folds(self) -> int:
        return len(self.folds)

    @property
    def fold_sizes(self) -> tuple[int, ...]:
        return tuple(len(f) for f in self.folds)


@dataclass(frozen=True)
class EstimandSpec:
    """What to evaluate on the case-deleted posterior.

    ``joint``: log of the weighted joint predictive density of the fold
    (the default). ``pointwise``: sum over fold units of per-unit weighted
    log predictive densities. ``multistep``: h-step-ahead log predictive
    density, only meaningful on backward-sequential schemes.
    """

    kind: str = "joint"
    horizon: int = 1

    KINDS = ("joint", "pointwise", "multistep")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown estimand kind {self.kind!r}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.kind != "multistep" and self.horizon != 1:
            raise ValueError("horizon > 1 requires the multistep estimand")


def _check_sizes(sizes: Sequence[int]) -> tuple[int, ...]:
    sizes = tuple(int(s) for s in sizes)
    if not sizes:
        raise ValueError("empty group list")
    if any(s < 1 for s in sizes):
        raise ValueError("empty group")
    return sizes


def build_loo_scheme(sizes: Sequence[int]) -> DeletionScheme:
    """One singleton fold per observation unit."""
    sizes = _check_sizes(sizes)
    folds = tuple(
        (UnitIndex(g, i),) for g in range(1, len(sizes) + 1) for i in range(1, sizes[g - 1] + 1)
    )
    return DeletionScheme(kind="loo", folds=folds)


def build_lgo_scheme(sizes: Sequence[int]) -> DeletionScheme:
    """One fold per group, containing the whole group."""
    sizes = _check_sizes(sizes)
    folds = tuple(
        tuple(UnitIndex(g, i) for i in range(1, n + 1)) for g, n in enumerate(sizes, start=1)
    )
    return DeletionScheme(kind="lgo", folds=folds)


def build_group_kfold_scheme(
    sizes: Sequence[int], k: int, rng: np.random.Generator
) -> DeletionScheme:
    """Seeded balanced split: every group spread over all ``k`` folds.

    Items within each group are shuffled and dealt round-robin, so per-group
    fold memberships differ in size by at most one. Groups smaller than
    ``k`` leave some folds without a contribution; the scheme is then marked
    unbalanced (reported, not an error).
    """
    sizes = _check_sizes(sizes)
    if k < 2:
        raise ValueError("group k-fold needs k >= 2")
    assignments: list[list[UnitIndex]] = [[] for _ in range(k)]
    for g, n in enumerate(sizes, start=1):
        perm = rng.permutation(n)
        for pos, item in enumerate(perm):
            assignments[pos % k].append(UnitIndex(g, int(item) + 1))
    if any(len(f) == 0 for f in assignments):
        raise ValueError(f"cannot split {sum(sizes)} units into {k} non-empty folds")
    balanced = k <= min(sizes)
    folds = tuple(tuple(sorted(f)) for f in assignments)
    return DeletionScheme(kind="lso", folds=folds, balanced=balanced)


def build_leo_schedule(
    sizes: Sequence[int], group: int = ALL_GROUPS, t_min: int = 0
) -> DeletionScheme:
    """Backward-sequential deletion of the most recent units.

    With a single ``group``, units ``(group, t_min+1 .. T)`` are deleted
    latest-first, one per step. With ``group=ALL_GROUPS`` (requires equal
    group lengths) each step deletes the latest remaining unit of every
    group simultaneously. Checkpoints sit at every integer deletion count.
    """
    sizes = _check_sizes(sizes)
    if group == ALL_GROUPS:
        horizons = set(sizes)
        if len(horizons) != 1:
            raise ValueError("across-group schedule requires equal group lengths")
        t_end = sizes[0]
        groups = range(1, len(sizes) + 1)
        kind = "leo-across"
    else:
        if not 1 <= group <= len(sizes):
            raise ValueError(f"group {group} out of range")
        t_end = sizes[group - 1]
        groups = (group,)
        kind = "leo-within"
    if not 0 <= t_min < t_end:
        raise ValueError(f"need 0 <= t_min < {t_end}, got {t_min}")

    units: list[UnitIndex] = []
    ranks: list[int] = []
    for rank, t in enumerate(range(t_end, t_min, -1), start=1):
        for g in groups:
            units.append(UnitIndex(g, t))
            ranks.append(rank)
    n_steps = t_end - t_min
    return DeletionScheme(
        kind=kind,
        folds=(tuple(units),),
        ranks=(tuple(ranks),),
        checkpoints=tuple(range(1, n_steps + 1)),
    )
