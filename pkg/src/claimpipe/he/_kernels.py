"""JIT kernels for the transform and elementwise hot paths.

Each kernel mirrors a numpy implementation in `modmath` or `ntt`
exactly; they exist because the staged numpy passes spend most of
their time allocating 64-bit temporaries. Set CLAIMPIPE_NO_NUMBA=1
before import to force the numpy paths. Callers check `AVAILABLE` at
call time, so tests can flip it to compare both paths bit for bit.

Type discipline: numba types `uint64 <op> literal` through its mixed
(uint64, int64) overloads and promotes int64/uint64 arithmetic to
float64, which silently rounds values above 2^53. Every constant
touching a residue is therefore a module-level np.uint64, and every
subtraction result is immediately reinterpreted with np.uint64 so all
comparisons stay unsigned-exact.
"""

from __future__ import annotations

import os

import numpy as np

try:
    if os.environ.get("CLAIMPIPE_NO_NUMBA"):
        raise ImportError("numba disabled by CLAIMPIPE_NO_NUMBA")
    from numba import njit
except ImportError:
    njit = None

AVAILABLE = njit is not None

_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_U0 = np.uint64(0)
_U1 = np.uint64(1)


if AVAILABLE:

    @njit(cache=True, inline="always")
    def _mul_hi(a, b):
        a0 = a & _MASK32
        a1 = a >> _S32
        b0 = b & _MASK32
        b1 = b >> _S32
        lo = a0 * b0
        t = a1 * b0 + (lo >> _S32)
        u = a0 * b1 + (t & _MASK32)
        return a1 * b1 + (t >> _S32) + (u >> _S32)

    @njit(cache=True, inline="always")
    def _mul_shoup(a, w, ws, q):
        r = np.uint64(a * w - _mul_hi(a, ws) * q)
        if r >= q:
            r = np.uint64(r - q)
        return r

    @njit(cache=True)
    def ntt_forward(x, w, ws, q):
        """In-place forward pass; twiddle of stage-s block j sits at 2^s + j."""
        k, n = x.shape
        for r in range(k):
            qr = q[r]
            m = 1
            t = n >> 1
            while m < n:
                for j in range(m):
                    wv = w[r, m + j]
                    wsv = ws[r, m + j]
                    base = 2 * t * j
                    for i in range(base, base + t):
                        u = x[r, i]
                        v = _mul_shoup(x[r, i + t], wv, wsv, qr)
                        s = u + v
                        if s >= qr:
                            s = np.uint64(s - qr)
                        d = np.uint64(u + qr - v)
                        if d >= qr:
                            d = np.uint64(d - qr)
                        x[r, i] = s
                        x[r, i + t] = d
                m <<= 1
                t >>= 1

    @njit(cache=True)
    def ntt_inverse(x, w, ws, ninv_w, ninv_ws, q):
        """In-place inverse pass plus the final 1/n scaling."""
        k, n = x.shape
        for r in range(k):
            qr = q[r]
            m = n >> 1
            t = 1
            while m >= 1:
                for j in range(m):
                    wv = w[r, m + j]
                    wsv = ws[r, m + j]
                    base = 2 * t * j
                    for i in range(base, base + t):
                        p = x[r, i]
                        v = x[r, i + t]
                        s = p + v
                        if s >= qr:
                            s = np.uint64(s - qr)
                        d = np.uint64(p + qr - v)
                        if d >= qr:
                            d = np.uint64(d - qr)
                        x[r, i] = s
                        x[r, i + t] = _mul_shoup(d, wv, wsv, qr)
                m >>= 1
                t <<= 1
            nw = ninv_w[r]
            nws = ninv_ws[r]
            for i in range(n):
                x[r, i] = _mul_shoup(x[r, i], nw, nws, qr)

    @njit(cache=True)
    def ew_add(a, b, q, out):
        k, n = a.shape
        for r in range(k):
            qr = q[r]
            for i in range(n):
                v = a[r, i] + b[r, i]
                if v >= qr:
                    v = np.uint64(v - qr)
                out[r, i] = v

    @njit(cache=True)
    def ew_sub(a, b, q, out):
        k, n = a.shape
        for r in range(k):
            qr = q[r]
            for i in range(n):
                v = np.uint64(a[r, i] + qr - b[r, i])
                if v >= qr:
                    v = np.uint64(v - qr)
                out[r, i] = v

    @njit(cache=True)
    def ew_mul(a, b, q, neg_qinv, r_mod, r_shoup, out):
        """Plain a*b mod q: Montgomery product then scale by 2^64 mod q."""
        k, n = a.shape
        for r in range(k):
            qr = q[r]
            ni = neg_qinv[r]
            rw = r_mod[r]
            rs = r_shoup[r]
            for i in range(n):
                x = a[r, i]
                y = b[r, i]
                lo = x * y
                t = _mul_hi(x, y) + _mul_hi(lo * ni, qr)
                if lo != _U0:
                    t = t + _U1
                if t >= qr:
                    t = np.uint64(t - qr)
                out[r, i] = _mul_shoup(t, rw, rs, qr)

    @njit(cache=True)
    def ew_scalar(a, w, ws, q, out):
        k, n = a.shape
        for r in range(k):
            qr = q[r]
            wv = w[r]
            wsv = ws[r]
            for i in range(n):
                out[r, i] = _mul_shoup(a[r, i], wv, wsv, qr)
