# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: assignment, Hopcroft-Karp and grid radius search.

Each function mirrors its counterpart in ``_fallback`` step for step, so both
backends return identical results (same tie-breaking, same float operations).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, INFINITY

cnp.import_array()


def linear_assignment(const double[:, ::1] cost):
    """Min-cost assignment of every row (rows <= cols) by shortest augmenting paths.

    Returns an int64 array giving the column assigned to each row.
    """
    cdef Py_ssize_t n = cost.shape[0], m = cost.shape[1]
    if n > m:
        raise ValueError("linear_assignment needs rows <= cols")
    cdef double[::1] u = np.zeros(n + 1)
    cdef double[::1] v = np.zeros(m + 1)
    cdef double[::1] minv = np.empty(m + 1)
    cdef cnp.int64_t[::1] p = np.zeros(m + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] way = np.zeros(m + 1, dtype=np.int64)
    cdef cnp.uint8_t[::1] used = np.zeros(m + 1, dtype=np.uint8)
    cdef Py_ssize_t i, j, j0, j1, i0
    cdef double delta, cur
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(m + 1):
            minv[j] = INFINITY
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            delta = INFINITY
            j1 = 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    out = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    for j in range(1, m + 1):
        if p[j] != 0:
            o[p[j] - 1] = j - 1
    return out


def hopcroft_karp(Py_ssize_t n_left, Py_ssize_t n_right,
                  const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices):
    """Maximum bipartite matching on a CSR adjacency (left -> right).

    Returns the int64 array of right partners per left vertex (-1 if unmatched).
    """
    cdef cnp.int64_t INF = n_left + n_right + 10
    match_left_arr = np.full(n_left, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] match_left = match_left_arr
    cdef cnp.int64_t[::1] match_right = np.full(n_right, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] dist = np.empty(n_left, dtype=np.int64)
    cdef cnp.int64_t[::1] queue = np.empty(n_left, dtype=np.int64)
    cdef cnp.int64_t[::1] it = np.empty(n_left, dtype=np.int64)
    cdef cnp.int64_t[::1] stack = np.empty(n_left, dtype=np.int64)
    cdef cnp.int64_t[::1] via = np.empty(n_left + 1, dtype=np.int64)
    cdef Py_ssize_t head, tail, a, k, e, top, nvia
    cdef cnp.int64_t uu, vv, w, dist_nil
    cdef bint advanced, found
    while True:
        # BFS layering from free left vertices.
        head = 0
        tail = 0
        for a in range(n_left):
            if match_left[a] == -1:
                dist[a] = 0
                queue[tail] = a
                tail += 1
            else:
                dist[a] = INF
        dist_nil = INF
        while head < tail:
            uu = queue[head]
            head += 1
            if dist[uu] < dist_nil:
                for e in range(indptr[uu], indptr[uu + 1]):
                    w = match_right[indices[e]]
                    if w == -1:
                        if dist_nil == INF:
                            dist_nil = dist[uu] + 1
                    elif dist[w] == INF:
                        dist[w] = dist[uu] + 1
                        queue[tail] = w
                        tail += 1
        if dist_nil == INF:
            break
        for a in range(n_left):
            it[a] = indptr[a]
        # Layered DFS from each free left vertex, in index order.
        for a in range(n_left):
            if match_left[a] != -1:
                continue
            top = 0
            stack[0] = a
            nvia = 0
            found = False
            while top >= 0:
                uu = stack[top]
                advanced = False
                while it[uu] < indptr[uu + 1]:
                    vv = indices[it[uu]]
                    it[uu] += 1
                    w = match_right[vv]
                    if w == -1:
                        if dist_nil == dist[uu] + 1:
                            via[nvia] = vv
                            nvia += 1
                            found = True
                            break
                    elif dist[w] == dist[uu] + 1:
                        via[nvia] = vv
                        nvia += 1
                        top += 1
                        stack[top] = w
                        advanced = True
                        break
                if found:
                    for k in range(top + 1):
                        match_left[stack[k]] = via[k]
                        match_right[via[k]] = stack[k]
                    break
                if not advanced:
                    dist[uu] = INF
                    top -= 1
                    if nvia > 0:
                        nvia -= 1
    return match_left_arr


def grid_radius_pairs(const double[:, ::1] pts, double tau):
    """All pairs ``i < j`` with squared distance ``<= tau**2`` via a uniform grid.

    The grid bins the first (up to) two coordinates with cell side ``tau``;
    candidate pairs are confirmed with the full-dimensional distance.
    """
    cdef Py_ssize_t n = pts.shape[0], d = pts.shape[1]
    cdef Py_ssize_t gd = 2 if d >= 2 else 1
    if n == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    arr = np.asarray(pts)
    lo = arr[:, :gd].min(axis=0)
    cells = np.floor((arr[:, :gd] - lo) / tau).astype(np.int64)
    ny = int(cells[:, gd - 1].max()) + 1 if gd == 2 else 1
    key_arr = cells[:, 0] * ny + (cells[:, 1] if gd == 2 else 0)
    order_arr = np.argsort(key_arr, kind="stable").astype(np.int64)
    skey_arr = key_arr[order_arr]
    cdef cnp.int64_t[::1] order = order_arr
    cdef cnp.int64_t[::1] skey = skey_arr
    cdef cnp.int64_t[:, ::1] cell = cells
    cdef double tau2 = tau * tau
    cdef Py_ssize_t cap = 1024, count = 0
    ii_arr = np.empty(cap, dtype=np.int64)
    jj_arr = np.empty(cap, dtype=np.int64)
    cdef cnp.int64_t[::1] ii = ii_arr
    cdef cnp.int64_t[::1] jj = jj_arr
    cdef Py_ssize_t i, j, k, s, lo_idx, hi_idx, mid
    cdef cnp.int64_t cx, cy, dx, dy, target
    cdef double acc, diff
    for i in range(n):
        cx = cell[i, 0]
        cy = cell[i, 1] if gd == 2 else 0
        for dx in range(-1, 2):
            for dy in range(-1, 2):
                if gd == 1 and dy != 0:
                    continue
                if cx + dx < 0 or cy + dy < 0 or cy + dy >= ny:
                    continue
                target = (cx + dx) * ny + (cy + dy)
                # lower bound of target in skey
                lo_idx = 0
                hi_idx = n
                while lo_idx < hi_idx:
                    mid = (lo_idx + hi_idx) >> 1
                    if skey[mid] < target:
                        lo_idx = mid + 1
                    else:
                        hi_idx = mid
                s = lo_idx
                while s < n and skey[s] == target:
                    j = order[s]
                    s += 1
                    if j <= i:
                        continue
                    acc = 0.0
                    for k in range(d):
                        diff = pts[i, k] - pts[j, k]
                        acc = acc + diff * diff
                    if acc <= tau2:
                        if count == cap:
                            cap *= 2
                            ii_arr = np.resize(ii_arr, cap)
                            jj_arr = np.resize(jj_arr, cap)
                            ii = ii_arr
                            jj = jj_arr
                        ii[count] = i
                        jj[count] = j
                        count += 1
    return ii_arr[:count].copy(), jj_arr[:count].copy()
