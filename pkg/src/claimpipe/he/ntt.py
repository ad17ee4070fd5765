"""Negacyclic number-theoretic transforms over a fixed modulus set.

Both directions work on (k, n) uint64 arrays, one row per modulus,
with all rows transformed in one vectorized pass per stage. Forward
maps coefficients of Z_q[X]/(X^n+1) to evaluations at odd powers of a
primitive 2n-th root psi; elementwise products in that domain realize
negacyclic convolution. The evaluation ordering is an internal detail,
identical across moduli and inverted exactly by `inverse`.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidParams
from . import _kernels, modmath
from .modmath import RnsArith


class NttPlan:
    def __init__(self, n: int, moduli):
        if n < 2 or n & (n - 1):
            raise InvalidParams(f"transform size {n} is not a power of two")
        self.n = n
        self.logn = n.bit_length() - 1
        self.arith = RnsArith(moduli)
        two_n = 2 * n
        for q in self.arith.moduli:
            if (q - 1) % two_n != 0:
                raise InvalidParams(f"modulus {q} is not 1 mod {two_n}")

        # Stage s splits 2^s blocks; block with exponent e, i.e. residue
        # mod (X^t - psi^e), splits into e/2 and e/2 + n using twiddle
        # psi^(e/2).
        exps = [n]
        stage_exps = []
        while len(exps) < n:
            stage_exps.append([e // 2 for e in exps])
            exps = [x for e in exps for x in (e // 2, e // 2 + n)]

        # Leaf order: position i of a transformed row holds the value at
        # psi^exps[i]. All exponents are odd, so X -> X^g for odd g is a
        # pure permutation of evaluation positions.
        self.eval_exponents = np.array(exps, dtype=np.int64)
        self._exp_index = np.full(two_n, -1, dtype=np.int64)
        self._exp_index[self.eval_exponents] = np.arange(n)

        # Flat twiddle layout: stage-s block j lives at index 2^s + j, so
        # one (k, n) table serves every stage of both the vectorized and
        # jitted paths.
        k = len(self.arith.moduli)
        self._fwd_w = np.zeros((k, n), dtype=np.uint64)
        self._fwd_ws = np.zeros((k, n), dtype=np.uint64)
        self._inv_w = np.zeros((k, n), dtype=np.uint64)
        self._inv_ws = np.zeros((k, n), dtype=np.uint64)
        for i, q in enumerate(self.arith.moduli):
            psi = modmath.primitive_root_2n(q, two_n)
            pows = [1] * two_n
            for e in range(1, two_n):
                pows[e] = pows[e - 1] * psi % q
            for s, se in enumerate(stage_exps):
                m = 1 << s
                for j, e in enumerate(se):
                    v = pows[e]
                    self._fwd_w[i, m + j] = v
                    self._fwd_ws[i, m + j] = modmath.shoup(v, q)
                    v = pows[(two_n - e) % two_n]
                    self._inv_w[i, m + j] = v
                    self._inv_ws[i, m + j] = modmath.shoup(v, q)
        self._n_inv = self.arith.shoup_rows(
            [pow(n, -1, q) for q in self.arith.moduli]
        )

    def _rows(self, rows, count):
        if rows is None:
            rows = np.arange(count)
        rows = np.asarray(rows)
        return rows

    def automorphism(self, g: int) -> np.ndarray:
        """Index array realizing X -> X^g on transformed rows.

        For odd g, row[perm] evaluates the substituted polynomial; no
        sign fixups are needed because every evaluation point is an odd
        power of psi.
        """
        if g % 2 == 0:
            raise InvalidParams(f"automorphism exponent {g} must be odd")
        shifted = self.eval_exponents * g % (2 * self.n)
        return self._exp_index[shifted]

    def forward(self, a: np.ndarray, rows=None) -> np.ndarray:
        rows = self._rows(rows, a.shape[0])
        x = np.array(a, dtype=np.uint64, copy=True, order="C")
        if _kernels.AVAILABLE:
            _kernels.ntt_forward(
                x, self._fwd_w[rows], self._fwd_ws[rows], self.arith.q[rows]
            )
            return x
        k = x.shape[0]
        q = self.arith.q[rows][:, None, None]
        for s in range(self.logn):
            m = 1 << s
            t = self.n >> (s + 1)
            view = x.reshape(k, m, 2 * t)
            u = view[:, :, :t]
            v = view[:, :, t:]
            tw = self._fwd_w[rows, m : 2 * m][:, :, None]
            tws = self._fwd_ws[rows, m : 2 * m][:, :, None]
            vw = modmath.mul_shoup(v, tw, tws, q)
            hi = modmath.sub_mod(u, vw, q)
            view[:, :, :t] = modmath.add_mod(u, vw, q)
            view[:, :, t:] = hi
        return x

    def inverse(self, a: np.ndarray, rows=None) -> np.ndarray:
        rows = self._rows(rows, a.shape[0])
        x = np.array(a, dtype=np.uint64, copy=True, order="C")
        ninv_w, ninv_ws = self._n_inv
        if _kernels.AVAILABLE:
            _kernels.ntt_inverse(
                x,
                self._inv_w[rows],
                self._inv_ws[rows],
                ninv_w[rows],
                ninv_ws[rows],
                self.arith.q[rows],
            )
            return x
        k = x.shape[0]
        q = self.arith.q[rows][:, None, None]
        for s in range(self.logn - 1, -1, -1):
            m = 1 << s
            t = self.n >> (s + 1)
            view = x.reshape(k, m, 2 * t)
            p = view[:, :, :t]
            r = view[:, :, t:]
            tw = self._inv_w[rows, m : 2 * m][:, :, None]
            tws = self._inv_ws[rows, m : 2 * m][:, :, None]
            diff = modmath.sub_mod(p, r, q)
            view[:, :, :t] = modmath.add_mod(p, r, q)
            view[:, :, t:] = modmath.mul_shoup(diff, tw, tws, q)
        return modmath.mul_shoup(
            x, ninv_w[rows][:, None], ninv_ws[rows][:, None], q[:, :, 0]
        )
