"""Shapley-value incentives with a cosine-similarity utility."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_EXACT_PLAYERS = 20


@dataclass(frozen=True)
class ShapleyVector:
    values: np.ndarray
    method: str
    samples: int | None = None
    stderr: np.ndarray | None = None


def _check_inputs(grads, grad_val) -> tuple[np.ndarray, np.ndarray, float]:
    g = np.atleast_2d(np.asarray(grads, dtype=float))
    v = np.asarray(grad_val, dtype=float)
    if g.shape[1] != v.shape[0]:
        raise ValueError("gradients and validation gradient differ in dimension")
    vn = float(np.sqrt(v @ v))
    if vn == 0.0:
        raise ValueError("validation gradient must be non-zero")
    return g, v, vn


def _cosine_rows(sums: np.ndarray, v: np.ndarray, vn: float) -> np.ndarray:
    # U(S) = 0 when the aggregate is the zero vector (including S empty).
    dots = sums @ v
    norms = np.sqrt(np.sum(sums * sums, axis=-1))
    with np.errstate(invalid="ignore", divide="ignore"):
        u = dots / (vn * norms)
    return np.where(norms > 0, u, 0.0)


def cosine_utility(subset, grads, grad_val) -> float:
    """Cosine similarity between the subset's summed gradient and ``grad_val``."""
    g, v, vn = _check_inputs(grads, grad_val)
    idx = np.fromiter(subset, dtype=np.int64)
    total = g[idx].sum(axis=0) if idx.size else np.zeros(g.shape[1])
    return float(_cosine_rows(total[None, :], v, vn)[0])


def subset_utilities(grads, grad_val) -> np.ndarray:
    """Utility of every coalition, indexed by bitmask."""
    g, v, vn = _check_inputs(grads, grad_val)
    n = len(g)
    sums = np.zeros((1 << n, g.shape[1]))
    for i in range(n):
        bit = 1 << i
        sums[bit:2 * bit] = sums[:bit] + g[i]
    return _cosine_rows(sums, v, vn)


def shapley_exact(grads, grad_val) -> ShapleyVector:
    """Exact Shapley values by coalition enumeration (n <= 20).

    Player ``i`` receives ``sum_S |S|!(n-|S|-1)!/n! * (U(S + i) - U(S))`` over
    coalitions ``S`` not containing ``i``.
    """
    g = np.atleast_2d(np.asarray(grads, dtype=float))
    n = len(g)
    if n > MAX_EXACT_PLAYERS:
        raise ValueError(f"exact enumeration limited to {MAX_EXACT_PLAYERS} players; use shapley_monte_carlo")
    if n == 0:
        return ShapleyVector(np.zeros(0), "exact")
    u = subset_utilities(g, grad_val)
    masks = np.arange(1 << n)
    sizes = np.array([bin(m).count("1") for m in range(1 << n)])
    weight = np.array([math.factorial(k) * math.factorial(n - k - 1) / math.factorial(n) for k in range(n)])
    values = np.empty(n)
    for i in range(n):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        values[i] = np.sum(weight[sizes[without]] * (u[without | bit] - u[without]))
    return ShapleyVector(values, "exact")


def shapley_monte_carlo(
    grads, grad_val, samples: int, rng: np.random.Generator, batch: int = 256
) -> ShapleyVector:
    """Permutation-sampling estimate: mean marginal contribution over random orderings."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    g, v, vn = _check_inputs(grads, grad_val)
    n = len(g)
    total = np.zeros(n)
    total_sq = np.zeros(n)
    done = 0
    while done < samples:
        m = min(batch, samples - done)
        perms = np.argsort(rng.random((m, n)), axis=1)
        prefix = np.cumsum(g[perms], axis=1)
        u = _cosine_rows(prefix, v, vn)
        marg = np.diff(np.concatenate([np.zeros((m, 1)), u], axis=1), axis=1)
        contrib = np.zeros((m, n))
        np.put_along_axis(contrib, perms, marg, axis=1)
        total += contrib.sum(axis=0)
        total_sq += (contrib * contrib).sum(axis=0)
        done += m
    mean = total / samples
    if samples > 1:
        var = np.maximum(total_sq / samples - mean * mean, 0.0) * samples / (samples - 1)
        stderr = np.sqrt(var / samples)
    else:
        stderr = np.full(n, np.inf)
    return ShapleyVector(mean, "monte_carlo", samples, stderr)


def gradient_aggregate(grads) -> np.ndarray:
    """Coordinate-wise mean of the reported gradients."""
    g = np.asarray(grads, dtype=float)
    if g.ndim != 2 or len(g) == 0:
        raise ValueError("need a non-empty (n, d) array of gradients")
    return g.mean(axis=0)
