"""Pure-Python assignment kernel.

Shortest-augmenting-path (Jonker-Volgenant style) solver with dual potentials,
O(n * m^2) per instance with numpy-vectorized inner scans. The compiled
extension `_assign_c` implements the same routine with identical arithmetic
order, so both backends return bit-identical results.
"""

import numpy as np


def jv(costs):
    """Solve min-cost assignment for an (n, m) float64 matrix, n <= m.

    Returns (row_to_col, u, v): the matched column per row and the dual
    potentials. At termination costs[i, j] - u[i] - v[j] >= 0 for all edges
    (up to float rounding), with equality on matched edges, and v <= 0.
    """
    n, m = costs.shape
    u = np.zeros(n)
    v = np.zeros(m + 1)  # index m is the virtual start column
    p = np.full(m + 1, -1, dtype=np.int64)  # p[j] = row matched to column j
    way = np.empty(m, dtype=np.int64)

    for i in range(n):
        p[m] = i
        j0 = m
        minv = np.full(m, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = np.flatnonzero(~used[:m])
            cur = costs[i0, free] - u[i0] - v[free]
            better = cur < minv[free]
            upd = free[better]
            minv[upd] = cur[better]
            way[upd] = j0
            k = np.argmin(minv[free])
            j1 = free[k]
            delta = minv[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if p[j0] < 0:
                break
        while j0 != m:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1

    row_to_col = np.empty(n, dtype=np.int64)
    for j in range(m):
        if p[j] >= 0:
            row_to_col[p[j]] = j
    return row_to_col, u, v[:m]
