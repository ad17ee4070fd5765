"""Canonical-embedding codec between slot vectors and ring coefficients.

A real message vector of length n = N/2 lives in the evaluation values
of the plaintext polynomial at the primitive 2N-th roots zeta^(5^t),
t = 0..n-1. Restricting evaluation points to the orbit of 5 keeps the
remaining conjugate evaluations implicit, so a length-N real coefficient
vector carries exactly n complex (here: real-valued) slots. The
transform is the standard radix-2 factorization over that orbit; slot
rotation by one step corresponds to the ring automorphism X -> X^5.
"""

from __future__ import annotations

import numpy as np


def _bit_reverse_perm(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    perm = np.zeros(n, dtype=np.int64)
    for i in range(n):
        r = 0
        x = i
        for _ in range(bits):
            r = (r << 1) | (x & 1)
            x >>= 1
        perm[i] = r
    return perm


class SlotCodec:
    def __init__(self, ring_dim: int):
        n = ring_dim // 2
        m = 2 * ring_dim
        self.ring_dim = ring_dim
        self.n = n
        self._perm = _bit_reverse_perm(n)
        rot = np.empty(n, dtype=np.int64)
        r = 1
        for j in range(n):
            rot[j] = r
            r = r * 5 % m
        ksi = np.exp(2j * np.pi * np.arange(m) / m)
        self._tw = []
        ln = 2
        while ln <= n:
            lenh = ln >> 1
            lenq = ln << 2
            idx = (rot[:lenh] % lenq) * (m // lenq)
            self._tw.append(ksi[idx])
            ln <<= 1
        self.rot_group = rot

    def to_slots(self, coeffs: np.ndarray) -> np.ndarray:
        """Real coefficient vector (N,) -> complex slot values (n,)."""
        n = self.n
        v = coeffs[:n] + 1j * coeffs[n:]
        v = v[self._perm]
        for s, tw in enumerate(self._tw):
            ln = 2 << s
            lenh = ln >> 1
            view = v.reshape(n // ln, ln)
            u = view[:, :lenh]
            w = view[:, lenh:] * tw
            hi = u - w
            view[:, :lenh] = u + w
            view[:, lenh:] = hi
        return v

    def to_coeffs(self, values: np.ndarray) -> np.ndarray:
        """Complex slot values (n,) -> real coefficient vector (N,)."""
        n = self.n
        v = np.array(values, dtype=np.complex128, copy=True)
        for s in range(len(self._tw) - 1, -1, -1):
            tw = self._tw[s]
            ln = 2 << s
            lenh = ln >> 1
            view = v.reshape(n // ln, ln)
            p = view[:, :lenh]
            q = view[:, lenh:]
            diff = (p - q) * tw.conj()
            view[:, :lenh] = p + q
            view[:, lenh:] = diff
        v = v[self._perm] / n
        out = np.empty(self.ring_dim, dtype=np.float64)
        out[:n] = v.real
        out[n:] = v.imag
        return out
