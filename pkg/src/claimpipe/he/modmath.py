"""Vectorized modular arithmetic over word-size primes.

Hot paths operate on numpy uint64 arrays. Products needing the high
64 bits of a 64x64 multiply go through a 32-bit limb split; fixed
multipliers use Shoup precomputation; general elementwise products
use Montgomery reduction. Moduli must stay below 2^62 so the sum of
two residues never wraps a 64-bit word.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidParams
from . import _kernels

_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_WORD = 1 << 64

MAX_MODULUS_BITS = 62


def mul_hi(a: np.ndarray, b) -> np.ndarray:
    """High 64 bits of the elementwise 128-bit product.

    Writes only into freshly allocated temporaries, so views are safe
    to pass in; buffer reuse keeps the pass memory-bound, not
    allocator-bound.
    """
    a0 = a & _MASK32
    a1 = a >> _SHIFT32
    b0 = b & _MASK32
    b1 = b >> _SHIFT32
    lo = a0 * b0
    t = a1 * b0
    np.right_shift(lo, _SHIFT32, out=lo)
    t += lo
    u = np.multiply(a0, b1, out=lo)
    mid = t & _MASK32
    u += mid
    hi = np.multiply(a1, b1, out=mid)
    np.right_shift(t, _SHIFT32, out=t)
    hi += t
    np.right_shift(u, _SHIFT32, out=u)
    hi += u
    return hi


def add_mod(a, b, q):
    r = a + b
    np.subtract(r, q, out=r, where=r >= q)
    return r


def sub_mod(a, b, q):
    r = a - b
    np.add(r, q, out=r, where=a < b)
    return r


def neg_mod(a, q):
    return (q - a) * (a != 0)


def shoup(w: int, q: int) -> int:
    """Precomputed quotient floor(w * 2^64 / q) for Shoup multiplication."""
    return (w << 64) // q


def mul_shoup(a, w, w_shoup, q):
    """a * w mod q where w < q carries its Shoup companion. a may be any u64."""
    hi = mul_hi(a, w_shoup)
    r = a * w
    np.multiply(hi, q, out=hi)
    r -= hi
    np.subtract(r, q, out=r, where=r >= q)
    return r


def mont_mul(a, b, q, neg_qinv):
    """Montgomery product a * b * 2^-64 mod q for a, b < q."""
    lo = a * b
    hi = mul_hi(a, b)
    m = lo * neg_qinv
    hi += mul_hi(m, q)
    hi += lo != 0
    np.subtract(hi, q, out=hi, where=hi >= q)
    return hi


def mul_mod(a, b, q, neg_qinv, r_mod, r_shoup):
    """General elementwise a * b mod q for a, b < q."""
    return mont_mul(mul_shoup(a, r_mod, r_shoup, q), b, q, neg_qinv)


class RnsArith:
    """Elementwise arithmetic on stacked residue rows.

    Arrays are shaped (..., k, n) where row i is reduced modulo the
    i-th selected modulus. `rows` picks which moduli apply; default is
    the full set in order.
    """

    def __init__(self, moduli):
        moduli = tuple(int(q) for q in moduli)
        for q in moduli:
            if q < 3 or q % 2 == 0 or q.bit_length() > MAX_MODULUS_BITS:
                raise InvalidParams(f"modulus {q} outside supported range")
        if len(set(moduli)) != len(moduli):
            raise InvalidParams("duplicate moduli")
        self.moduli = moduli
        self.q = np.array(moduli, dtype=np.uint64)
        self.q_i64 = np.array(moduli, dtype=np.int64)
        self.half = np.array([q // 2 for q in moduli], dtype=np.int64)
        self.neg_qinv = np.array(
            [(-pow(q, -1, _WORD)) % _WORD for q in moduli], dtype=np.uint64
        )
        r = [_WORD % q for q in moduli]
        self.r_mod = np.array(r, dtype=np.uint64)
        self.r_shoup = np.array([shoup(x, q) for x, q in zip(r, moduli)], dtype=np.uint64)

    def _col(self, table, rows):
        sel = table if rows is None else table[rows]
        return sel[:, None]

    def _sel(self, table, rows):
        return table if rows is None else table[rows]

    def add(self, a, b, rows=None):
        if _kernels.AVAILABLE and a.ndim == 2 and a.shape == b.shape:
            out = np.empty_like(a)
            _kernels.ew_add(a, b, self._sel(self.q, rows), out)
            return out
        return add_mod(a, b, self._col(self.q, rows))

    def sub(self, a, b, rows=None):
        if _kernels.AVAILABLE and a.ndim == 2 and a.shape == b.shape:
            out = np.empty_like(a)
            _kernels.ew_sub(a, b, self._sel(self.q, rows), out)
            return out
        return sub_mod(a, b, self._col(self.q, rows))

    def neg(self, a, rows=None):
        return neg_mod(a, self._col(self.q, rows))

    def mul(self, a, b, rows=None):
        if _kernels.AVAILABLE and a.ndim == 2 and a.shape == b.shape:
            out = np.empty_like(a)
            _kernels.ew_mul(
                a,
                b,
                self._sel(self.q, rows),
                self._sel(self.neg_qinv, rows),
                self._sel(self.r_mod, rows),
                self._sel(self.r_shoup, rows),
                out,
            )
            return out
        return mul_mod(
            a,
            b,
            self._col(self.q, rows),
            self._col(self.neg_qinv, rows),
            self._col(self.r_mod, rows),
            self._col(self.r_shoup, rows),
        )

    def mul_scalar(self, a, w, w_shoup, rows=None):
        """Multiply each row by a fixed per-row scalar (Shoup pair arrays)."""
        if _kernels.AVAILABLE and a.ndim == 2:
            out = np.empty_like(a)
            _kernels.ew_scalar(a, w, w_shoup, self._sel(self.q, rows), out)
            return out
        return mul_shoup(a, w[:, None], w_shoup[:, None], self._col(self.q, rows))

    def spread_signed(self, r, rows=None):
        """Reduce one signed int64 coefficient vector modulo each selected prime."""
        q = self.q_i64 if rows is None else self.q_i64[rows]
        return (r[None, :] % q[:, None]).astype(np.uint64)

    def center(self, r, row: int):
        """Lift one residue row to signed representatives in (-q/2, q/2]."""
        x = r.astype(np.int64)
        return x - self.q_i64[row] * (x > self.half[row])

    def shoup_rows(self, values, rows=None):
        """Shoup pairs for one scalar per selected row."""
        mods = self.moduli if rows is None else [self.moduli[i] for i in rows]
        w = np.array([v % q for v, q in zip(values, mods)], dtype=np.uint64)
        ws = np.array(
            [shoup(v % q, q) for v, q in zip(values, mods)], dtype=np.uint64
        )
        return w, ws


def is_prime(n: int) -> bool:
    from sympy import isprime

    return bool(isprime(n))


def find_ntt_primes(bits: int, count: int, two_n: int, exclude=()) -> list[int]:
    """Largest `count` primes of `bits` bits that are 1 mod two_n, descending."""
    if bits > MAX_MODULUS_BITS:
        raise InvalidParams(f"prime size {bits} exceeds {MAX_MODULUS_BITS} bits")
    exclude = set(exclude)
    found = []
    p = (1 << bits) - two_n + 1
    floor = 1 << (bits - 1)
    while len(found) < count:
        if p <= floor:
            raise InvalidParams(f"not enough {bits}-bit primes that are 1 mod {two_n}")
        if p not in exclude and is_prime(p):
            found.append(p)
        p -= two_n
    return found


def primitive_root_2n(q: int, two_n: int) -> int:
    """A root of order exactly two_n modulo prime q (requires two_n | q-1)."""
    if (q - 1) % two_n != 0:
        raise InvalidParams(f"{q} is not 1 mod {two_n}")
    for g in range(2, 1 << 20):
        c = pow(g, (q - 1) // two_n, q)
        if pow(c, two_n // 2, q) == q - 1:
            return c
    raise InvalidParams(f"no primitive {two_n}-th root found mod {q}")
