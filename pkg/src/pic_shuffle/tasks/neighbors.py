"""Radius nearest-neighbor search and its retrieval metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from .._fallback import _sq_dist_block


@dataclass(frozen=True)
class NeighborSet:
    """Per-query neighbor indices (self excluded), each sorted ascending."""

    neighbors: tuple[np.ndarray, ...]

    def __len__(self) -> int:
        return len(self.neighbors)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.neighbors[i]

    def sizes(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.neighbors], dtype=np.int64)


def _pairwise_pairs(pts: np.ndarray, tau: float, block: int = 1024) -> tuple[np.ndarray, np.ndarray]:
    n = len(pts)
    tau2 = tau * tau
    out_i, out_j = [], []
    for start in range(0, n, block):
        stop = min(start + block, n)
        acc = _sq_dist_block(pts[start:stop], pts)
        ii, jj = np.nonzero(acc <= tau2)
        ii = ii + start
        keep = ii < jj
        out_i.append(ii[keep])
        out_j.append(jj[keep])
    if not out_i:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(out_i).astype(np.int64), np.concatenate(out_j).astype(np.int64)


def radius_pairs(points, tau: float, method: str = "grid") -> tuple[np.ndarray, np.ndarray]:
    """Index pairs ``i < j`` with ``||p_i - p_j|| <= tau``, sorted lexicographically."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    if method == "pairwise":
        i, j = _pairwise_pairs(pts, tau)
    elif method == "grid":
        i, j = kernels.grid_radius_pairs(pts, float(tau))
    else:
        raise ValueError(f"unknown method {method!r}; use 'pairwise' or 'grid'")
    order = np.lexsort((j, i))
    return i[order], j[order]


def radius_nn(points, tau: float, method: str = "pairwise") -> NeighborSet:
    """For each point, the indices of all other points within ``tau`` (closed ball)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    i, j = radius_pairs(pts, tau, method)
    src = np.concatenate([i, j])
    dst = np.concatenate([j, i])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    bounds = np.searchsorted(src, np.arange(n + 1))
    return NeighborSet(tuple(dst[bounds[k]:bounds[k + 1]] for k in range(n)))


def _pair_keys(pairs: tuple[np.ndarray, np.ndarray], n: int) -> np.ndarray:
    return pairs[0] * n + pairs[1]


def neighbor_f1(true_pairs, retrieved_pairs, n: int) -> tuple[float, float, float]:
    """Precision, recall and F1 of retrieved neighbor sets.

    Pairs are the undirected ``i < j`` lists from :func:`radius_pairs`; each
    undirected pair counts once per endpoint on both sides, which cancels in
    every ratio. Empty denominators give 0.
    """
    t = _pair_keys(true_pairs, n)
    r = _pair_keys(retrieved_pairs, n)
    hit = np.intersect1d(t, r, assume_unique=True).size
    precision = hit / r.size if r.size else 0.0
    recall = hit / t.size if t.size else 0.0
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)
