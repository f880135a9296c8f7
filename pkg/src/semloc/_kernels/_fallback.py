"""Pure-Python/numpy versions of the grid kernels.

These follow the compiled kernels step for step (same floating point
expressions in the same order), so either backend yields identical arrays.
"""
import math

import numpy as np

INF = math.inf


def _dt1d(f, n):
    v = [0] * n
    z = [0.0] * (n + 1)
    k = -1
    for q in range(n):
        fq = f[q]
        if fq == INF:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -INF
            z[1] = INF
            continue
        vk = v[k]
        s = ((fq + float(q * q)) - (f[vk] + float(vk * vk))) / float(2 * q - 2 * vk)
        while s <= z[k]:
            k -= 1
            vk = v[k]
            s = ((fq + float(q * q)) - (f[vk] + float(vk * vk))) / float(2 * q - 2 * vk)
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = INF
    if k < 0:
        return [INF] * n
    out = [0.0] * n
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        vk = v[k]
        out[q] = float((q - vk) * (q - vk)) + f[vk]
    return out


def edt_sq(source):
    source = np.asarray(source, dtype=bool)
    h, w = source.shape
    cols = []
    for c in range(w):
        f = [0.0 if s else INF for s in source[:, c].tolist()]
        cols.append(_dt1d(f, h))
    tmp = np.array(cols, dtype=np.float64).T if w else np.empty((h, 0))
    out = np.empty((h, w), dtype=np.float64)
    for r in range(h):
        out[r, :] = _dt1d(tmp[r, :].tolist(), w)
    return out


def raycast_many(occupied, px, py, dirx, diry, max_t):
    occupied = np.asarray(occupied, dtype=bool)
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    dx = np.asarray(dirx, dtype=np.float64)
    dy = np.asarray(diry, dtype=np.float64)
    h, w = occupied.shape
    m = px.shape[0]
    out_col = np.full(m, -1, dtype=np.int32)
    out_row = np.full(m, -1, dtype=np.int32)
    out_t = np.full(m, -1.0, dtype=np.float64)

    col = np.floor(px).astype(np.int64)
    row = np.floor(py).astype(np.int64)
    active = (col >= 0) & (col < w) & (row >= 0) & (row < h)

    sx = np.sign(dx).astype(np.int64)
    sy = np.sign(dy).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        tmx = np.where(
            dx > 0,
            ((col + 1).astype(np.float64) - px) / dx,
            np.where(dx < 0, (col.astype(np.float64) - px) / dx, INF),
        )
        tdx = np.where(dx > 0, 1.0 / dx, np.where(dx < 0, -1.0 / dx, INF))
        tmy = np.where(
            dy > 0,
            ((row + 1).astype(np.float64) - py) / dy,
            np.where(dy < 0, (row.astype(np.float64) - py) / dy, INF),
        )
        tdy = np.where(dy > 0, 1.0 / dy, np.where(dy < 0, -1.0 / dy, INF))

    idx = np.flatnonzero(active)
    col, row = col[idx], row[idx]
    sx, sy = sx[idx], sy[idx]
    tmx, tmy, tdx, tdy = tmx[idx], tmy[idx], tdx[idx], tdy[idx]
    while idx.size:
        xstep = tmx < tmy
        t = np.where(xstep, tmx, tmy)
        col = np.where(xstep, col + sx, col)
        row = np.where(xstep, row, row + sy)
        tmx = np.where(xstep, tmx + tdx, tmx)
        tmy = np.where(xstep, tmy, tmy + tdy)

        stop = (t > max_t) | (col < 0) | (col >= w) | (row < 0) | (row >= h)
        inside = ~stop
        hit = np.zeros_like(stop)
        hit[inside] = occupied[row[inside], col[inside]]
        if hit.any():
            out_col[idx[hit]] = col[hit]
            out_row[idx[hit]] = row[hit]
            out_t[idx[hit]] = t[hit]
        keep = ~(stop | hit)
        idx = idx[keep]
        col, row, sx, sy = col[keep], row[keep], sx[keep], sy[keep]
        tmx, tmy, tdx, tdy = tmx[keep], tmy[keep], tdx[keep], tdy[keep]
    return out_col, out_row, out_t
