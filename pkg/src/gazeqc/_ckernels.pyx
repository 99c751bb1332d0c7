# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.  Mirrors ``gazeqc._pykernels`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, hypot, cos, sin, M_PI, NAN

cnp.import_array()


def latency_curve(t_ms, gx, gy, valid, onsets, tx, ty, double period_ms, int max_shift):
    cdef const double[::1] t = np.ascontiguousarray(t_ms, dtype=np.float64)
    cdef const double[::1] x = np.ascontiguousarray(gx, dtype=np.float64)
    cdef const double[::1] y = np.ascontiguousarray(gy, dtype=np.float64)
    cdef const cnp.uint8_t[::1] v = np.ascontiguousarray(valid, dtype=np.uint8)
    cdef const double[::1] on = np.ascontiguousarray(onsets, dtype=np.float64)
    cdef const double[::1] px = np.ascontiguousarray(tx, dtype=np.float64)
    cdef const double[::1] py = np.ascontiguousarray(ty, dtype=np.float64)
    out_arr = np.empty(max_shift, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t n = t.shape[0], m = on.shape[0]
    cdef Py_ssize_t i, j
    cdef int s
    cdef double total, ts
    cdef long count
    for s in range(1, max_shift + 1):
        total = 0.0
        count = 0
        j = -1
        for i in range(n):
            if not v[i]:
                continue
            ts = t[i] - s * period_ms
            while j + 1 < m and on[j + 1] <= ts:
                j += 1
            if j < 0:
                continue
            total += hypot(x[i] - px[j], y[i] - py[j])
            count += 1
        out[s - 1] = total / count if count else NAN
    return out_arr


cdef double _objective(const double[::1] x, const double[::1] y, double mx, double my) nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(x.shape[0]):
        acc += hypot(x[i] - mx, y[i] - my)
    return acc


def weiszfeld(xs, ys, double tol=1e-10, int max_iter=1000):
    cdef const double[::1] x = np.ascontiguousarray(xs, dtype=np.float64)
    cdef const double[::1] y = np.ascontiguousarray(ys, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], i
    if n == 0:
        raise ValueError("need at least one point")
    import math
    cdef double mx = math.fsum(np.asarray(x).tolist()) / n
    cdef double my = math.fsum(np.asarray(y).tolist()) / n
    cdef double scale = max(float(np.max(np.abs(x))), float(np.max(np.abs(y))), 1.0)
    cdef double ctol = 1e-15 * scale
    cdef double best_obj = _objective(x, y, mx, my), best_x = mx, best_y = my
    cdef double dx, dy, d, w, wsum, sx, sy, rx, ry, r, frac, nx, ny, step, obj
    cdef int eta, it
    for it in range(max_iter):
        wsum = 0.0; sx = 0.0; sy = 0.0; rx = 0.0; ry = 0.0
        eta = 0
        for i in range(n):
            dx = x[i] - mx
            dy = y[i] - my
            d = hypot(dx, dy)
            if d <= ctol:
                eta += 1
                continue
            w = 1.0 / d
            wsum += w
            sx += w * x[i]
            sy += w * y[i]
            rx += w * dx
            ry += w * dy
        if wsum == 0.0:
            break
        sx /= wsum
        sy /= wsum
        if eta:
            r = hypot(rx, ry)
            if r <= eta:
                break
            frac = eta / r
            nx = (1.0 - frac) * sx + frac * mx
            ny = (1.0 - frac) * sy + frac * my
        else:
            nx = sx
            ny = sy
        step = hypot(nx - mx, ny - my)
        mx = nx
        my = ny
        obj = _objective(x, y, mx, my)
        if obj < best_obj:
            best_obj = obj
            best_x = mx
            best_y = my
        if step < tol:
            break
    return best_x, best_y


def fft_radix2(values, bint inverse=False):
    a_in = np.asarray(values, dtype=np.complex128)
    cdef Py_ssize_t n = a_in.shape[0]
    cdef double[::1] re = np.ascontiguousarray(a_in.real, dtype=np.float64).copy()
    cdef double[::1] im = np.ascontiguousarray(a_in.imag, dtype=np.float64).copy()
    cdef Py_ssize_t i, j, k, bit, start, half, p, q
    cdef double tr, ti, ur, ui, wr, wi, ang
    cdef double sign = 1.0 if inverse else -1.0
    j = 0
    for i in range(1, n):
        bit = n >> 1
        while j & bit:
            j ^= bit
            bit >>= 1
        j ^= bit
        if i < j:
            re[i], re[j] = re[j], re[i]
            im[i], im[j] = im[j], im[i]
    half = 1
    while half < n:
        for k in range(half):
            ang = sign * M_PI * k / half
            wr = cos(ang)
            wi = sin(ang)
            start = 0
            while start < n:
                p = start + k
                q = p + half
                tr = re[q] * wr - im[q] * wi
                ti = re[q] * wi + im[q] * wr
                ur = re[p]
                ui = im[p]
                re[p] = ur + tr
                im[p] = ui + ti
                re[q] = ur - tr
                im[q] = ui - ti
                start += 2 * half
        half *= 2
    out = np.asarray(re) + 1j * np.asarray(im)
    if inverse:
        out = out / n
    return out
