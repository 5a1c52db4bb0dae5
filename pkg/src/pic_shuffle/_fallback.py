"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``."""
from __future__ import annotations

import numpy as np


def linear_assignment(cost: np.ndarray) -> np.ndarray:
    """Min-cost assignment of every row (rows <= cols) by shortest augmenting paths."""
    cost = np.ascontiguousarray(cost, dtype=float)
    n, m = cost.shape
    if n > m:
        raise ValueError("linear_assignment needs rows <= cols")
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)
    way = np.zeros(m + 1, dtype=np.int64)
    # Column 0 is the virtual source; pad the cost so column j maps to cost[:, j-1].
    padded = np.zeros((n + 1, m + 1))
    padded[1:, 1:] = cost
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = padded[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, np.inf)
            j1 = int(np.argmin(cand[1:])) + 1
            delta = cand[j1]
            if not np.isfinite(delta):
                j1 = 0
            idx = np.flatnonzero(used)
            u[p[idx]] += delta
            v[idx] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    out = np.full(n, -1, dtype=np.int64)
    cols = np.flatnonzero(p[1:]) + 1
    out[p[cols] - 1] = cols - 1
    return out


def hopcroft_karp(n_left: int, n_right: int, indptr: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Maximum bipartite matching on a CSR adjacency (left -> right)."""
    indptr = [int(x) for x in indptr]
    indices = [int(x) for x in indices]
    inf = n_left + n_right + 10
    match_left = [-1] * n_left
    match_right = [-1] * n_right
    dist = [0] * n_left
    while True:
        queue = []
        for a in range(n_left):
            if match_left[a] == -1:
                dist[a] = 0
                queue.append(a)
            else:
                dist[a] = inf
        dist_nil = inf
        head = 0
        while head < len(queue):
            u = queue[head]
            head += 1
            if dist[u] < dist_nil:
                for e in range(indptr[u], indptr[u + 1]):
                    w = match_right[indices[e]]
                    if w == -1:
                        if dist_nil == inf:
                            dist_nil = dist[u] + 1
                    elif dist[w] == inf:
                        dist[w] = dist[u] + 1
                        queue.append(w)
        if dist_nil == inf:
            break
        it = indptr[:-1].copy()
        for a in range(n_left):
            if match_left[a] != -1:
                continue
            stack = [a]
            via = []
            found = False
            while stack:
                u = stack[-1]
                advanced = False
                end = indptr[u + 1]
                while it[u] < end:
                    v = indices[it[u]]
                    it[u] += 1
                    w = match_right[v]
                    if w == -1:
                        if dist_nil == dist[u] + 1:
                            via.append(v)
                            found = True
                            break
                    elif dist[w] == dist[u] + 1:
                        via.append(v)
                        stack.append(w)
                        advanced = True
                        break
                if found:
                    for uu, vv in zip(stack, via):
                        match_left[uu] = vv
                        match_right[vv] = uu
                    break
                if not advanced:
                    dist[u] = inf
                    stack.pop()
                    if via:
                        via.pop()
    return np.asarray(match_left, dtype=np.int64)


def _sq_dist_block(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Accumulate coordinate by coordinate, matching the compiled kernel bit for bit.
    acc = np.zeros((a.shape[0], b.shape[0]))
    for k in range(a.shape[1]):
        diff = a[:, k][:, None] - b[:, k][None, :]
        acc = acc + diff * diff
    return acc


def grid_radius_pairs(pts: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """All pairs ``i < j`` within distance ``tau`` via a uniform grid (numpy blocks)."""
    pts = np.ascontiguousarray(pts, dtype=float)
    n, d = pts.shape
    if n == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    gd = 2 if d >= 2 else 1
    lo = pts[:, :gd].min(axis=0)
    cells = np.floor((pts[:, :gd] - lo) / tau).astype(np.int64)
    ny = int(cells[:, gd - 1].max()) + 1 if gd == 2 else 1
    key = cells[:, 0] * ny + (cells[:, 1] if gd == 2 else 0)
    order = np.argsort(key, kind="stable")
    skey = key[order]
    uniq, starts = np.unique(skey, return_index=True)
    ends = np.append(starts[1:], n)
    members = {int(k): order[s:e] for k, s, e in zip(uniq, starts, ends)}
    tau2 = tau * tau
    out_i, out_j = [], []
    offsets = [(dx, dy) for dx in (-1, 0, 1) for dy in ((-1, 0, 1) if gd == 2 else (0,))]
    for k, idx_a in members.items():
        cx, cy = divmod(k, ny)
        for dx, dy in offsets:
            if cx + dx < 0 or not 0 <= cy + dy < ny:
                continue
            idx_b = members.get((cx + dx) * ny + cy + dy)
            if idx_b is None:
                continue
            acc = _sq_dist_block(pts[idx_a], pts[idx_b])
            ia, jb = np.nonzero((acc <= tau2) & (idx_a[:, None] < idx_b[None, :]))
            out_i.append(idx_a[ia])
            out_j.append(idx_b[jb])
    if not out_i:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(out_i).astype(np.int64), np.concatenate(out_j).astype(np.int64)
