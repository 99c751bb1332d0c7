"""Pure-Python/numpy implementations of the hot kernels.

Same signatures and results as the compiled ``_ckernels`` module; used when
the extension is unavailable or ``GAZEQC_PURE_PYTHON=1``.
"""
import math

import numpy as np


def latency_curve(t_ms, gx, gy, valid, onsets, tx, ty, period_ms, max_shift):
    """Mean gaze-target distance for target shifts of 1..max_shift samples.

    Element ``s - 1`` compares each valid gaze sample at time ``t`` with the
    zero-order-hold target position at ``t - s * period_ms``.  Samples whose
    shifted time precedes the first onset are skipped; a shift with no
    usable pairs yields NaN.
    """
    t_ms = np.asarray(t_ms, dtype=float)
    valid = np.asarray(valid, dtype=bool)
    gx = np.asarray(gx, dtype=float)[valid]
    gy = np.asarray(gy, dtype=float)[valid]
    t = t_ms[valid]
    onsets = np.asarray(onsets, dtype=float)
    tx = np.asarray(tx, dtype=float)
    ty = np.asarray(ty, dtype=float)
    out = np.full(max_shift, np.nan)
    for s in range(1, max_shift + 1):
        idx = np.searchsorted(onsets, t - s * period_ms, side="right") - 1
        keep = idx >= 0
        if not keep.any():
            continue
        j = idx[keep]
        d = np.hypot(gx[keep] - tx[j], gy[keep] - ty[j])
        out[s - 1] = float(np.sum(d)) / d.size
    return out


def _objective(x, y, mx, my):
    return float(np.sum(np.hypot(x - mx, y - my)))


def weiszfeld(x, y, tol=1e-10, max_iter=1000):
    """Geometric median by Weiszfeld iteration with the Vardi-Zhang fix.

    Starts from the arithmetic mean.  When an iterate coincides with data
    points, their pull is replaced by the subgradient rule, so the iteration
    never divides by zero and stops at a data point only when it is optimal.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n == 0:
        raise ValueError("need at least one point")
    mx = math.fsum(x.tolist()) / n
    my = math.fsum(y.tolist()) / n
    scale = max(float(np.max(np.abs(x))), float(np.max(np.abs(y))), 1.0)
    coincide_tol = 1e-15 * scale
    best = (_objective(x, y, mx, my), mx, my)
    for _ in range(max_iter):
        dx = x - mx
        dy = y - my
        dist = np.hypot(dx, dy)
        at = dist <= coincide_tol
        eta = int(np.count_nonzero(at))
        far = ~at
        if not far.any():
            break
        w = 1.0 / dist[far]
        wsum = float(np.sum(w))
        tx = float(np.sum(w * x[far])) / wsum
        ty = float(np.sum(w * y[far])) / wsum
        if eta:
            rx = float(np.sum(w * dx[far]))
            ry = float(np.sum(w * dy[far]))
            r = math.hypot(rx, ry)
            if r <= eta:
                break
            frac = eta / r
            nx = (1.0 - frac) * tx + frac * mx
            ny = (1.0 - frac) * ty + frac * my
        else:
            nx, ny = tx, ty
        step = math.hypot(nx - mx, ny - my)
        mx, my = nx, ny
        obj = _objective(x, y, mx, my)
        if obj < best[0]:
            best = (obj, mx, my)
        if step < tol:
            break
    return best[1], best[2]


def _bit_reverse_permutation(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft_radix2(values, inverse=False):
    """Iterative radix-2 decimation-in-time FFT.

    The inverse transform includes the ``1/N`` factor.  Length must be a
    power of two; callers validate.
    """
    a = np.asarray(values, dtype=complex)
    n = a.size
    a = a[_bit_reverse_permutation(n)].copy()
    sign = 1.0 if inverse else -1.0
    half = 1
    while half < n:
        k = np.arange(half)
        ang = sign * math.pi * k / half
        tw = np.cos(ang) + 1j * np.sin(ang)
        blocks = a.reshape(-1, 2 * half)
        top = blocks[:, :half].copy()
        bot = blocks[:, half:] * tw
        blocks[:, :half] = top + bot
        blocks[:, half:] = top - bot
        a = blocks.reshape(n)
        half *= 2
    if inverse:
        a = a / n
    return a
