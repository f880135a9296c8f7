# cython: language_level=3
"""Compiled grid kernels: exact squared EDT and batched cell-traversal raycasts.

Both kernels mirror ``_fallback`` operation for operation so the two backends
return bit-identical results.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, INFINITY

cnp.import_array()


cdef void _dt1d(double* f, Py_ssize_t n, double* out, Py_ssize_t* v, double* z) noexcept nogil:
    cdef Py_ssize_t q, k = -1
    cdef double s
    for q in range(n):
        if f[q] == INFINITY:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -INFINITY
            z[1] = INFINITY
            continue
        s = ((f[q] + <double>(q * q)) - (f[v[k]] + <double>(v[k] * v[k]))) / <double>(2 * q - 2 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] + <double>(q * q)) - (f[v[k]] + <double>(v[k] * v[k]))) / <double>(2 * q - 2 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = INFINITY
    if k < 0:
        for q in range(n):
            out[q] = INFINITY
        return
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        out[q] = <double>((q - v[k]) * (q - v[k])) + f[v[k]]


def edt_sq(const cnp.uint8_t[:, ::1] source):
    """Squared Euclidean distance (in cells) from every cell to the nearest source cell.

    Cells with no source anywhere get ``inf``.
    """
    cdef Py_ssize_t h = source.shape[0], w = source.shape[1]
    cdef Py_ssize_t n = h if h > w else w
    cdef Py_ssize_t r, c
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] f = np.empty(n, dtype=np.float64)
    cdef double[::1] d = np.empty(n, dtype=np.float64)
    cdef double[::1] z = np.empty(n + 1, dtype=np.float64)
    cdef Py_ssize_t[::1] v = np.empty(n, dtype=np.intp)
    with nogil:
        for c in range(w):
            for r in range(h):
                f[r] = 0.0 if source[r, c] else INFINITY
            _dt1d(&f[0], h, &d[0], &v[0], &z[0])
            for r in range(h):
                out[r, c] = d[r]
        for r in range(h):
            for c in range(w):
                f[c] = out[r, c]
            _dt1d(&f[0], w, &d[0], &v[0], &z[0])
            for c in range(w):
                out[r, c] = d[c]
    return out_arr


def raycast_many(const cnp.uint8_t[:, ::1] occupied,
                 const double[::1] px, const double[::1] py,
                 const double[::1] dirx, const double[::1] diry,
                 double max_t):
    """Walk each ray cell by cell until it enters an occupied cell.

    Coordinates are in cell units of the grid frame. The start cell is never
    reported. Returns ``(col, row, t)``; misses carry ``col = row = -1`` and
    ``t = -1``.
    """
    cdef Py_ssize_t m = px.shape[0], i
    cdef Py_ssize_t h = occupied.shape[0], w = occupied.shape[1]
    col_arr = np.full(m, -1, dtype=np.int32)
    row_arr = np.full(m, -1, dtype=np.int32)
    t_arr = np.full(m, -1.0, dtype=np.float64)
    cdef int[::1] out_col = col_arr
    cdef int[::1] out_row = row_arr
    cdef double[::1] out_t = t_arr
    cdef long col, row, sx, sy
    cdef double x, y, dx, dy, tmx, tmy, tdx, tdy, t
    with nogil:
        for i in range(m):
            x = px[i]
            y = py[i]
            col = <long>floor(x)
            row = <long>floor(y)
            if col < 0 or col >= w or row < 0 or row >= h:
                continue
            dx = dirx[i]
            dy = diry[i]
            if dx > 0:
                sx = 1
                tmx = (<double>(col + 1) - x) / dx
                tdx = 1.0 / dx
            elif dx < 0:
                sx = -1
                tmx = (<double>col - x) / dx
                tdx = -1.0 / dx
            else:
                sx = 0
                tmx = INFINITY
                tdx = INFINITY
            if dy > 0:
                sy = 1
                tmy = (<double>(row + 1) - y) / dy
                tdy = 1.0 / dy
            elif dy < 0:
                sy = -1
                tmy = (<double>row - y) / dy
                tdy = -1.0 / dy
            else:
                sy = 0
                tmy = INFINITY
                tdy = INFINITY
            while True:
                if tmx < tmy:
                    col += sx
                    t = tmx
                    tmx = tmx + tdx
                else:
                    row += sy
                    t = tmy
                    tmy = tmy + tdy
                if t > max_t:
                    break
                if col < 0 or col >= w or row < 0 or row >= h:
                    break
                if occupied[row, col]:
                    out_col[i] = <int>col
                    out_row[i] = <int>row
                    out_t[i] = t
                    break
    return col_arr, row_arr, t_arr
