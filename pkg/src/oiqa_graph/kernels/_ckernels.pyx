# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled gnomonic remap and Haversine matrix.

Mirrors ``_pykernels`` operation for operation; the two agree to a few ulp.
"""

import numpy as np

from libc.math cimport asin, atan2, cos, floor, sin, sqrt, tan, M_PI


cdef inline double _hav(double lat1, double lon1, double lat2, double lon2) noexcept nogil:
    cdef double sdp = sin((lat2 - lat1) / 2.0)
    cdef double sdl = sin((lon2 - lon1) / 2.0)
    cdef double a = sdp * sdp + cos(lat1) * cos(lat2) * sdl * sdl
    if a < 0.0:
        a = 0.0
    elif a > 1.0:
        a = 1.0
    return 2.0 * atan2(sqrt(a), sqrt(1.0 - a))


def haversine_matrix(const double[::1] lat, const double[::1] lon):
    cdef Py_ssize_t n = lat.shape[0]
    cdef Py_ssize_t i, j
    cdef double d
    out = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                d = _hav(lat[i], lon[i], lat[j], lon[j])
                o[i, j] = d
                o[j, i] = d
    return out


def sample_gnomonic(const double[:, :, ::1] erp, double lat0, double lon0,
                    double fov, Py_ssize_t size, bint nearest=False):
    cdef Py_ssize_t H = erp.shape[0], W = erp.shape[1], C = erp.shape[2]
    out = np.empty((size, size, C), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef double half = tan(fov / 2.0)
    cdef double sl = sin(lat0), cl = cos(lat0), so = sin(lon0), co = cos(lon0)
    # forward, east and north unit vectors of the tangent frame
    cdef double fx = cl * co, fy = cl * so, fz = sl
    cdef double ex = -so, ey = co
    cdef double nx = -sl * co, ny = -sl * so, nz = cl
    cdef Py_ssize_t r, c, ch, r0, r1, c0, c1
    cdef double x, y, dx, dy, dz, norm, s, lat, lon, row, col, tx, ty, a, b, top, bot
    with nogil:
        for r in range(size):
            y = (1.0 - 2.0 * (r + 0.5) / size) * half
            for c in range(size):
                x = (2.0 * (c + 0.5) / size - 1.0) * half
                dx = fx + x * ex + y * nx
                dy = fy + x * ey + y * ny
                dz = fz + y * nz
                norm = sqrt(1.0 + x * x + y * y)  # |f + x e + y n| for an orthonormal frame
                s = dz / norm
                if s > 1.0:
                    s = 1.0
                elif s < -1.0:
                    s = -1.0
                lat = asin(s)
                lon = atan2(dy, dx)
                col = (lon + M_PI) / (2.0 * M_PI) * W - 0.5
                row = (M_PI / 2.0 - lat) / M_PI * H - 0.5
                if nearest:
                    r0 = <Py_ssize_t>floor(row + 0.5)
                    c0 = <Py_ssize_t>floor(col + 0.5)
                    if r0 < 0:
                        r0 = 0
                    elif r0 > H - 1:
                        r0 = H - 1
                    c0 = c0 % W
                    if c0 < 0:
                        c0 = c0 + W
                    for ch in range(C):
                        o[r, c, ch] = erp[r0, c0, ch]
                    continue
                r0 = <Py_ssize_t>floor(row)
                ty = row - r0
                r1 = r0 + 1
                if r0 < 0:
                    r0 = 0
                elif r0 > H - 1:
                    r0 = H - 1
                if r1 < 0:
                    r1 = 0
                elif r1 > H - 1:
                    r1 = H - 1
                c0 = <Py_ssize_t>floor(col)
                tx = col - c0
                c0 = c0 % W
                if c0 < 0:
                    c0 = c0 + W
                c1 = (c0 + 1) % W
                for ch in range(C):
                    a = erp[r0, c0, ch]
                    b = erp[r0, c1, ch]
                    top = a + tx * (b - a)
                    a = erp[r1, c0, ch]
                    b = erp[r1, c1, ch]
                    bot = a + tx * (b - a)
                    o[r, c, ch] = top + ty * (bot - top)
    return out
