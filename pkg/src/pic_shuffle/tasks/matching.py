"""Bipartite matching between two groups of locations."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import kernels


@dataclass(frozen=True)
class BipartiteInstance:
    side_a: np.ndarray
    side_b: np.ndarray
    radius: float | None = None

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.side_a, dtype=float))
        b = np.atleast_2d(np.asarray(self.side_b, dtype=float))
        if a.shape[1] != b.shape[1]:
            raise ValueError("both sides must share a dimension")
        object.__setattr__(self, "side_a", a)
        object.__setattr__(self, "side_b", b)


@dataclass(frozen=True)
class Matching:
    """Matched ``(index in A, index in B)`` pairs, sorted by the A index."""

    pairs: tuple[tuple[int, int], ...]
    total_cost: float = 0.0
    partner_of_a: np.ndarray = field(repr=False, compare=False, default=None)

    def __len__(self) -> int:
        return len(self.pairs)

    def partners(self, n_a: int, n_b: int) -> tuple[np.ndarray, np.ndarray]:
        """Partner arrays for each side, ``-1`` where unmatched."""
        pa = np.full(n_a, -1, dtype=np.int64)
        pb = np.full(n_b, -1, dtype=np.int64)
        for i, j in self.pairs:
            pa[i] = j
            pb[j] = i
        return pa, pb


def distance_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    acc = np.zeros((a.shape[0], b.shape[0]))
    for k in range(a.shape[1]):
        diff = a[:, k][:, None] - b[:, k][None, :]
        acc = acc + diff * diff
    return acc


def _from_partner(partner_of_a: np.ndarray, cost: np.ndarray | None) -> Matching:
    idx = np.flatnonzero(partner_of_a >= 0)
    pairs = tuple((int(i), int(partner_of_a[i])) for i in idx)
    total = float(sum(cost[i, j] for i, j in pairs)) if cost is not None else 0.0
    return Matching(pairs, total, partner_of_a)


def min_weight_full_matching(instance: BipartiteInstance) -> Matching:
    """Minimum total Euclidean distance matching covering the smaller side."""
    a, b = instance.side_a, instance.side_b
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both sides must be non-empty")
    cost = np.sqrt(distance_matrix(a, b))
    if len(a) <= len(b):
        partner = kernels.linear_assignment(np.ascontiguousarray(cost))
    else:
        col_for_b = kernels.linear_assignment(np.ascontiguousarray(cost.T))
        partner = np.full(len(a), -1, dtype=np.int64)
        partner[col_for_b] = np.arange(len(b))
    return _from_partner(partner, cost)


def radius_adjacency(a: np.ndarray, b: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """CSR adjacency of A->B edges with distance ``<= tau`` (closed ball)."""
    within = distance_matrix(a, b) <= tau * tau
    counts = within.sum(axis=1)
    indptr = np.zeros(len(a) + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.nonzero(within)[1].astype(np.int64)
    return indptr, indices


def max_matching_within_radius(instance: BipartiteInstance) -> Matching:
    """Maximum-cardinality matching using only pairs within the serving radius."""
    if instance.radius is None or not instance.radius > 0:
        raise ValueError("instance.radius must be a positive serving radius")
    a, b = instance.side_a, instance.side_b
    indptr, indices = radius_adjacency(a, b, instance.radius)
    partner = kernels.hopcroft_karp(len(a), len(b), indptr, indices)
    cost = np.sqrt(distance_matrix(a, b)) if len(a) and len(b) else None
    return _from_partner(partner, cost)


def travel_cost(matching: Matching, true_a: np.ndarray, true_b: np.ndarray) -> float:
    """Sum of true Euclidean distances over matched pairs."""
    if not matching.pairs:
        return 0.0
    i, j = np.array(matching.pairs).T
    return float(np.sum(np.linalg.norm(true_a[i] - true_b[j], axis=1)))


def success_ratio(matching: Matching, true_a: np.ndarray, true_b: np.ndarray, tau: float) -> float:
    """Fraction of ``min(|A|, |B|)`` matched pairs truly within ``tau``."""
    denom = min(len(true_a), len(true_b))
    if not matching.pairs or denom == 0:
        return 0.0
    i, j = np.array(matching.pairs).T
    diff = true_a[i] - true_b[j]
    ok = np.sum(diff * diff, axis=1) <= tau * tau
    return float(np.count_nonzero(ok) / denom)
