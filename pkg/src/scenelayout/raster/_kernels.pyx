# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled z-buffer triangle fill (fast backend).

Scalar arithmetic mirrors _kernels_py.fill expression for expression, and the
extension is compiled with -ffp-contract=off, so both backends produce
bit-identical buffers.
"""

from libc.math cimport ceil, floor

BACKEND_NAME = "cython"


def fill(double[::1] u, double[::1] v, double[::1] invz,
         double[:, ::1] aoz, int[:, ::1] tris,
         double[:, ::1] zbuf, double[:, :, ::1] abuf):
    """Rasterize triangles into zbuf/abuf in place (see _kernels_py.fill)."""
    cdef Py_ssize_t ntri = tris.shape[0]
    cdef Py_ssize_t height = zbuf.shape[0]
    cdef Py_ssize_t width = zbuf.shape[1]
    cdef Py_ssize_t nchan = aoz.shape[1]
    cdef Py_ssize_t t, x, y, k, x0, x1, y0, y1, itmp
    cdef Py_ssize_t i0, i1, i2
    cdef double u0, u1, u2, v0, v1, v2, iz0, iz1, iz2
    cdef double area, px, py, w0, w1, w2, l0, l1, l2, izp, z, s
    cdef double e0u, e0v, e1u, e1v, e2u, e2v, lo, hi
    cdef bint tl0, tl1, tl2, c0, c1, c2

    with nogil:
        for t in range(ntri):
            i0 = tris[t, 0]
            i1 = tris[t, 1]
            i2 = tris[t, 2]
            area = (u[i1] - u[i0]) * (v[i2] - v[i0]) - (u[i2] - u[i0]) * (v[i1] - v[i0])
            if area == 0.0:
                continue
            if area < 0.0:
                itmp = i1; i1 = i2; i2 = itmp
                area = -area
            u0 = u[i0]; u1 = u[i1]; u2 = u[i2]
            v0 = v[i0]; v1 = v[i1]; v2 = v[i2]
            iz0 = invz[i0]; iz1 = invz[i1]; iz2 = invz[i2]

            lo = u0
            if u1 < lo: lo = u1
            if u2 < lo: lo = u2
            hi = u0
            if u1 > hi: hi = u1
            if u2 > hi: hi = u2
            x0 = <Py_ssize_t>ceil(lo - 0.5)
            x1 = <Py_ssize_t>floor(hi - 0.5)
            lo = v0
            if v1 < lo: lo = v1
            if v2 < lo: lo = v2
            hi = v0
            if v1 > hi: hi = v1
            if v2 > hi: hi = v2
            y0 = <Py_ssize_t>ceil(lo - 0.5)
            y1 = <Py_ssize_t>floor(hi - 0.5)
            if x0 < 0: x0 = 0
            if y0 < 0: y0 = 0
            if x1 > width - 1: x1 = width - 1
            if y1 > height - 1: y1 = height - 1
            if x0 > x1 or y0 > y1:
                continue

            e0u = u2 - u1; e0v = v2 - v1
            e1u = u0 - u2; e1v = v0 - v2
            e2u = u1 - u0; e2v = v1 - v0
            tl0 = (e0v == 0.0 and e0u > 0.0) or e0v < 0.0
            tl1 = (e1v == 0.0 and e1u > 0.0) or e1v < 0.0
            tl2 = (e2v == 0.0 and e2u > 0.0) or e2v < 0.0

            for y in range(y0, y1 + 1):
                py = y + 0.5
                for x in range(x0, x1 + 1):
                    px = x + 0.5
                    w0 = e0u * (py - v1) - e0v * (px - u1)
                    w1 = e1u * (py - v2) - e1v * (px - u2)
                    w2 = e2u * (py - v0) - e2v * (px - u0)
                    c0 = w0 > 0.0 or (w0 == 0.0 and tl0)
                    c1 = w1 > 0.0 or (w1 == 0.0 and tl1)
                    c2 = w2 > 0.0 or (w2 == 0.0 and tl2)
                    if not (c0 and c1 and c2):
                        continue
                    l0 = w0 / area
                    l1 = w1 / area
                    l2 = w2 / area
                    izp = l0 * iz0 + l1 * iz1 + l2 * iz2
                    z = 1.0 / izp
                    if z < zbuf[y, x]:
                        zbuf[y, x] = z
                        for k in range(nchan):
                            s = l0 * aoz[i0, k] + l1 * aoz[i1, k] + l2 * aoz[i2, k]
                            abuf[y, x, k] = s / izp
