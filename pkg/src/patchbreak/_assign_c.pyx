# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled assignment kernel.

Same shortest-augmenting-path routine as _assign_py.jv with the same
operation order, so outputs are bit-identical; this version just removes the
per-iteration numpy overhead that dominates on the 16x16 solves the attack
issues tens of thousands of times.
"""

import numpy as np


def jv(costs):
    """See _assign_py.jv. costs must be a C-contiguous (n, m) float64 array."""
    cdef double[:, ::1] c = costs
    cdef Py_ssize_t n = c.shape[0]
    cdef Py_ssize_t m = c.shape[1]

    u_arr = np.zeros(n)
    v_arr = np.zeros(m + 1)
    p_arr = np.full(m + 1, -1, dtype=np.int64)
    way_arr = np.empty(m, dtype=np.int64)
    minv_arr = np.empty(m)
    used_arr = np.zeros(m + 1, dtype=np.uint8)
    row_to_col_arr = np.empty(n, dtype=np.int64)

    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr
    cdef long long[::1] p = p_arr
    cdef long long[::1] way = way_arr
    cdef double[::1] minv = minv_arr
    cdef unsigned char[::1] used = used_arr
    cdef long long[::1] row_to_col = row_to_col_arr

    cdef Py_ssize_t i, j, j0, j1, i0
    cdef double cur, delta
    cdef double INF = np.inf

    for i in range(n):
        p[m] = i
        j0 = m
        for j in range(m):
            minv[j] = INF
        for j in range(m + 1):
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            for j in range(m):
                if used[j]:
                    continue
                cur = (c[i0, j] - u[i0]) - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
            j1 = -1
            delta = INF
            for j in range(m):
                if not used[j] and minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                elif j < m:
                    minv[j] -= delta
            j0 = j1
            if p[j0] < 0:
                break
        while j0 != m:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1

    for j in range(m):
        if p[j] >= 0:
            row_to_col[p[j]] = j
    return row_to_col_arr, u_arr, v_arr[:m]
