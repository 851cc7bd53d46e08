"""Pure-numpy z-buffer triangle fill (fallback backend).

The compiled kernel in _kernels.pyx mirrors this function expression for
expression (and is built with FP contraction disabled), so the two backends
produce bit-identical buffers.
"""
from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def fill(u, v, invz, aoz, tris, zbuf, abuf):
    """Rasterize triangles into zbuf/abuf in place.

    u, v:    per-vertex screen coordinates (pixels)
    invz:    per-vertex 1/Z
    aoz:     per-vertex attributes pre-divided by Z, shape (n, k); k may be 0
    tris:    (m, 3) int32 vertex indices
    zbuf:    (h, w) float64 initialized to +inf
    abuf:    (h, w, k) float64 initialized to 0

    Coverage samples pixel centers (x + 0.5, y + 0.5) with a top-left rule on
    edge ties. Depth and attributes are perspective-correct. The depth test is
    strictly `z < zbuf`, so on exact ties the earlier (lower-index) triangle
    wins; iteration order is part of the contract.
    """
    height, width = zbuf.shape
    nchan = aoz.shape[1]
    for t in range(tris.shape[0]):
        i0 = tris[t, 0]
        i1 = tris[t, 1]
        i2 = tris[t, 2]
        area = (u[i1] - u[i0]) * (v[i2] - v[i0]) - (u[i2] - u[i0]) * (v[i1] - v[i0])
        if area == 0.0:
            continue
        if area < 0.0:
            i1, i2 = i2, i1
            area = -area
        u0 = u[i0]; u1 = u[i1]; u2 = u[i2]
        v0 = v[i0]; v1 = v[i1]; v2 = v[i2]
        iz0 = invz[i0]; iz1 = invz[i1]; iz2 = invz[i2]

        x0 = int(np.ceil(min(u0, u1, u2) - 0.5))
        x1 = int(np.floor(max(u0, u1, u2) - 0.5))
        y0 = int(np.ceil(min(v0, v1, v2) - 0.5))
        y1 = int(np.floor(max(v0, v1, v2) - 0.5))
        if x0 < 0:
            x0 = 0
        if y0 < 0:
            y0 = 0
        if x1 > width - 1:
            x1 = width - 1
        if y1 > height - 1:
            y1 = height - 1
        if x0 > x1 or y0 > y1:
            continue

        # Directed edges opposite each vertex; tl marks top or left edges
        # (y grows downward, triangles oriented to positive area).
        e0u = u2 - u1; e0v = v2 - v1
        e1u = u0 - u2; e1v = v0 - v2
        e2u = u1 - u0; e2v = v1 - v0
        tl0 = (e0v == 0.0 and e0u > 0.0) or e0v < 0.0
        tl1 = (e1v == 0.0 and e1u > 0.0) or e1v < 0.0
        tl2 = (e2v == 0.0 and e2u > 0.0) or e2v < 0.0

        px = np.arange(x0, x1 + 1, dtype=np.float64) + 0.5
        py = (np.arange(y0, y1 + 1, dtype=np.float64) + 0.5)[:, None]
        w0 = e0u * (py - v1) - e0v * (px - u1)
        w1 = e1u * (py - v2) - e1v * (px - u2)
        w2 = e2u * (py - v0) - e2v * (px - u0)
        inside = ((w0 > 0.0) | ((w0 == 0.0) & tl0)) \
            & ((w1 > 0.0) | ((w1 == 0.0) & tl1)) \
            & ((w2 > 0.0) | ((w2 == 0.0) & tl2))
        if not inside.any():
            continue

        l0 = w0 / area
        l1 = w1 / area
        l2 = w2 / area
        izp = l0 * iz0 + l1 * iz1 + l2 * iz2
        z = np.divide(1.0, izp, out=np.full_like(izp, np.inf), where=inside)

        sub = zbuf[y0:y1 + 1, x0:x1 + 1]
        win = inside & (z < sub)
        if not win.any():
            continue
        sub[win] = z[win]
        for k in range(nchan):
            s = l0 * aoz[i0, k] + l1 * aoz[i1, k] + l2 * aoz[i2, k]
            val = np.divide(s, izp, out=np.zeros_like(s), where=win)
            asub = abuf[y0:y1 + 1, x0:x1 + 1, k]
            asub[win] = val[win]
