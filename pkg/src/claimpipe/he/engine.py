"""Leveled approximate-arithmetic encryption over Z_q[X]/(X^N+1).

Ciphertexts are pairs of RNS polynomials kept permanently in the NTT
domain; level L means limbs 0..L of the modulus chain are live. Every
multiplication is immediately rescaled, dropping the last live limb.
Degree-2 relinearization and slot rotation go through key switching
with a per-limb decomposition against one special modulus P: the key
for digit j encrypts P * (the CRT indicator of limb j) * source_key,
so the digit sum reconstructs exactly P * d * source_key before an
exact rounded division by P.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import (
    InvalidParams,
    KeyParamsMismatch,
    LevelMismatch,
    MissingRotationKey,
    NoLevelsRemaining,
    NonFiniteInput,
    ScaleMismatch,
    SlotOverflow,
)
from . import modmath
from .encoding import SlotCodec
from .ntt import NttPlan
from .params import HeParams

CBD_TRIALS = 21  # centered binomial, sigma = sqrt(21/2) ~ 3.24


@dataclass
class Plaintext:
    data: np.ndarray  # (level+1, N) uint64, NTT domain
    level: int
    scale: float
    params_id: str

    def copy(self) -> "Plaintext":
        return Plaintext(self.data.copy(), self.level, self.scale, self.params_id)


@dataclass
class Ciphertext:
    c0: np.ndarray  # (level+1, N) uint64, NTT domain
    c1: np.ndarray
    level: int
    scale: float
    params_id: str

    def copy(self) -> "Ciphertext":
        return Ciphertext(
            self.c0.copy(), self.c1.copy(), self.level, self.scale, self.params_id
        )


@dataclass
class SecretKey:
    coeffs: np.ndarray  # (N,) int8 ternary
    ntt: np.ndarray  # (full basis, N) uint64
    params_id: str


@dataclass
class PublicKey:
    b: np.ndarray  # (chain length, N) uint64
    a: np.ndarray
    params_id: str


@dataclass
class KeySwitchKey:
    b: np.ndarray  # (digits, full basis, N) uint64
    a: np.ndarray
    params_id: str


@dataclass
class HeContext:
    """Key material bundle; the public variant carries secret=None."""

    params: HeParams
    public: PublicKey
    relin: KeySwitchKey
    rotations: dict[int, KeySwitchKey] = field(default_factory=dict)
    secret: SecretKey | None = None

    @property
    def has_secret(self) -> bool:
        return self.secret is not None

    def without_secret(self) -> "HeContext":
        return HeContext(self.params, self.public, self.relin, self.rotations, None)


class HeEngine:
    def __init__(self, params: HeParams, seed: int | None = None):
        params.validate()
        self.params = params
        self.params_id = params.fingerprint()
        self.rng = np.random.default_rng(seed)
        n = params.ring_dimension
        self.slots = params.slot_count
        chain = params.modulus_chain
        self._chain = chain
        self._special_row = len(chain)
        moduli = list(chain) + [params.special_modulus]
        self.plan = NttPlan(n, moduli)
        self.arith = self.plan.arith
        self.codec = SlotCodec(n)

        # rescale: inverse of the dropped prime under each remaining one
        self._drop_inv = {}
        for d in range(1, len(chain)):
            inv = [pow(chain[d], -1, chain[i]) for i in range(d)]
            self._drop_inv[d] = self.arith.shoup_rows(inv, np.arange(d))

        # key switching: P against every chain prime
        p = params.special_modulus
        self._p_mod = self.arith.shoup_rows(
            [p % q for q in chain], np.arange(len(chain))
        )
        self._p_inv = self.arith.shoup_rows(
            [pow(p, -1, q) for q in chain], np.arange(len(chain))
        )

        # exact CRT lifting along chain prefixes
        self._crt_prod = [1]
        self._crt_inv = [0]
        for i in range(1, len(chain)):
            prod = self._crt_prod[i - 1] * chain[i - 1]
            self._crt_prod.append(prod)
            self._crt_inv.append(pow(prod % chain[i], -1, chain[i]))

        self._perm_cache: dict[int, np.ndarray] = {}

    # ----- sampling ----------------------------------------------------

    def _ternary(self) -> np.ndarray:
        return self.rng.integers(-1, 2, self.params.ring_dimension).astype(np.int8)

    def _cbd(self) -> np.ndarray:
        n = self.params.ring_dimension
        a = self.rng.binomial(CBD_TRIALS, 0.5, n)
        b = self.rng.binomial(CBD_TRIALS, 0.5, n)
        return (a - b).astype(np.int64)

    def _uniform(self, k: int) -> np.ndarray:
        rows = [
            self.rng.integers(0, self.plan.arith.moduli[i], self.params.ring_dimension,
                              dtype=np.uint64)
            for i in range(k)
        ]
        return np.stack(rows)

    def _uniform_full(self) -> np.ndarray:
        n_full = len(self.plan.arith.moduli)
        return self._uniform(n_full)

    def _ntt_signed(self, coeffs, rows) -> np.ndarray:
        r = np.asarray(coeffs, dtype=np.int64)
        return self.plan.forward(self.arith.spread_signed(r, rows), rows)

    # ----- encode / decode ---------------------------------------------

    def encode(self, values, level: int | None = None, scale: float | None = None) -> Plaintext:
        if level is None:
            level = self.params.max_level
        if not 0 <= level <= self.params.max_level:
            raise InvalidParams(f"level {level} outside chain")
        if scale is None:
            scale = self.params.scale
        if not (scale > 0 and np.isfinite(scale)):
            raise InvalidParams("scale must be positive and finite")
        vals = np.atleast_1d(np.asarray(values, dtype=np.complex128))
        if vals.ndim != 1:
            raise InvalidParams("expected a flat vector")
        if vals.size > self.slots:
            raise SlotOverflow(f"{vals.size} values > {self.slots} slots")
        if not np.all(np.isfinite(vals)):
            raise NonFiniteInput("values must be finite")
        buf = np.zeros(self.slots, dtype=np.complex128)
        buf[: vals.size] = vals
        coeffs = self.codec.to_coeffs(buf) * scale
        limit = float(1 << 62)
        if np.max(np.abs(coeffs)) >= limit:
            raise InvalidParams("scaled coefficients exceed 62-bit headroom")
        m = np.rint(coeffs).astype(np.int64)
        rows = np.arange(level + 1)
        data = self.plan.forward(self.arith.spread_signed(m, rows), rows)
        return Plaintext(data, level, float(scale), self.params_id)

    def encode_const(self, value: float, level: int, scale: float) -> Plaintext:
        """Constant polynomial: exact, no transform, any scale."""
        if not np.isfinite(value) or not np.isfinite(scale) or scale <= 0:
            raise NonFiniteInput("constant and scale must be finite, scale > 0")
        m0 = round(float(value) * scale)
        k = level + 1
        data = np.empty((k, self.params.ring_dimension), dtype=np.uint64)
        for i in range(k):
            data[i, :] = m0 % self._chain[i]
        return Plaintext(data, level, float(scale), self.params_id)

    def decode(self, pt: Plaintext) -> np.ndarray:
        self._check_id(pt)
        k = pt.level + 1
        rows = np.arange(k)
        coeff = self.plan.inverse(pt.data, rows)
        x = coeff[0].astype(object)
        prod = self._chain[0]
        for i in range(1, k):
            qi = self._chain[i]
            diff = (coeff[i].astype(object) - x % qi) % qi
            x = x + prod * ((diff * self._crt_inv[i]) % qi)
            prod *= qi
        half = np.array(prod // 2, dtype=object)
        x = np.where(x > half, x - np.array(prod, dtype=object), x)
        floats = x.astype(np.float64) / pt.scale
        return self.codec.to_slots(floats).real.copy()

    # ----- key generation ----------------------------------------------

    def keygen(self, rotation_steps=None) -> HeContext:
        n = self.params.ring_dimension
        chain_len = len(self._chain)
        full_rows = np.arange(chain_len + 1)
        if rotation_steps is None:
            rotation_steps = self.default_rotation_steps()

        s_coeffs = self._ternary()
        s_ntt = self._ntt_signed(s_coeffs, full_rows)

        a = self._uniform(chain_len)
        e = self._ntt_signed(self._cbd(), np.arange(chain_len))
        b = self.arith.add(
            self.arith.neg(
                self.arith.mul(a, s_ntt[:chain_len], np.arange(chain_len)),
                np.arange(chain_len),
            ),
            e,
            np.arange(chain_len),
        )
        public = PublicKey(b, a, self.params_id)

        s2 = self.arith.mul(s_ntt, s_ntt, full_rows)
        relin = self._make_ksk(s2, s_ntt, full_rows)

        rotations = {}
        for step in rotation_steps:
            step = int(step) % self.slots
            if step == 0 or step in rotations:
                continue
            g = pow(5, step, 2 * n)
            t = s_ntt[:, self._auto_perm(g)]
            rotations[step] = self._make_ksk(t, s_ntt, full_rows)

        secret = SecretKey(s_coeffs, s_ntt, self.params_id)
        return HeContext(self.params, public, relin, rotations, secret)

    def default_rotation_steps(self) -> list[int]:
        return [1 << i for i in range((self.slots // 2).bit_length())]

    def _make_ksk(self, t_ntt: np.ndarray, s_ntt: np.ndarray, full_rows) -> KeySwitchKey:
        digits = len(self._chain)
        p_w, p_ws = self._p_mod
        bs, a_s = [], []
        for j in range(digits):
            aj = self._uniform_full()
            ej = self._ntt_signed(self._cbd(), full_rows)
            bj = self.arith.add(
                self.arith.neg(self.arith.mul(aj, s_ntt, full_rows), full_rows),
                ej,
                full_rows,
            )
            gadget = modmath.mul_shoup(
                t_ntt[j],
                p_w[j],
                p_ws[j],
                self.arith.q[j],
            )
            bj[j] = modmath.add_mod(bj[j], gadget, self.arith.q[j])
            bs.append(bj)
            a_s.append(aj)
        return KeySwitchKey(np.stack(bs), np.stack(a_s), self.params_id)

    # ----- validation helpers -------------------------------------------

    def _check_id(self, *objs):
        for o in objs:
            if o.params_id != self.params_id:
                raise KeyParamsMismatch("object belongs to a different parameter set")

    @staticmethod
    def _check_levels(a, b):
        if a.level != b.level:
            raise LevelMismatch(f"levels {a.level} != {b.level}")

    @staticmethod
    def _check_scales(a, b):
        if a.scale != b.scale:
            raise ScaleMismatch(f"scales {a.scale} != {b.scale}")

    # ----- encrypt / decrypt ---------------------------------------------

    def encrypt(self, pt: Plaintext, public: PublicKey) -> Ciphertext:
        self._check_id(pt, public)
        k = pt.level + 1
        if public.b.shape[0] < k or public.b.shape[1] != self.params.ring_dimension:
            raise KeyParamsMismatch("public key does not cover the requested level")
        rows = np.arange(k)
        u = self._ntt_signed(self._ternary(), rows)
        e0 = self._ntt_signed(self._cbd(), rows)
        e1 = self._ntt_signed(self._cbd(), rows)
        c0 = self.arith.add(self.arith.mul(public.b[:k], u, rows), e0, rows)
        c0 = self.arith.add(c0, pt.data, rows)
        c1 = self.arith.add(self.arith.mul(public.a[:k], u, rows), e1, rows)
        return Ciphertext(c0, c1, pt.level, pt.scale, self.params_id)

    def decrypt(self, ct: Ciphertext, secret: SecretKey) -> Plaintext:
        self._check_id(ct, secret)
        k = ct.level + 1
        rows = np.arange(k)
        m = self.arith.add(
            ct.c0, self.arith.mul(ct.c1, secret.ntt[:k], rows), rows
        )
        return Plaintext(m, ct.level, ct.scale, self.params_id)

    # ----- arithmetic -----------------------------------------------------

    def add(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        self._check_id(a, b)
        self._check_levels(a, b)
        self._check_scales(a, b)
        rows = np.arange(a.level + 1)
        return Ciphertext(
            self.arith.add(a.c0, b.c0, rows),
            self.arith.add(a.c1, b.c1, rows),
            a.level,
            a.scale,
            self.params_id,
        )

    def sub(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        self._check_id(a, b)
        self._check_levels(a, b)
        self._check_scales(a, b)
        rows = np.arange(a.level + 1)
        return Ciphertext(
            self.arith.sub(a.c0, b.c0, rows),
            self.arith.sub(a.c1, b.c1, rows),
            a.level,
            a.scale,
            self.params_id,
        )

    def add_plain(self, ct: Ciphertext, pt: Plaintext) -> Ciphertext:
        self._check_id(ct, pt)
        self._check_levels(ct, pt)
        self._check_scales(ct, pt)
        rows = np.arange(ct.level + 1)
        return Ciphertext(
            self.arith.add(ct.c0, pt.data, rows),
            ct.c1.copy(),
            ct.level,
            ct.scale,
            self.params_id,
        )

    def mul_plain(self, ct: Ciphertext, pt: Plaintext) -> Ciphertext:
        self._check_id(ct, pt)
        self._check_levels(ct, pt)
        if ct.level == 0:
            raise NoLevelsRemaining("mul_plain at level 0")
        rows = np.arange(ct.level + 1)
        out = Ciphertext(
            self.arith.mul(ct.c0, pt.data, rows),
            self.arith.mul(ct.c1, pt.data, rows),
            ct.level,
            ct.scale * pt.scale,
            self.params_id,
        )
        return self.rescale(out)

    def mul(self, a: Ciphertext, b: Ciphertext, relin: KeySwitchKey) -> Ciphertext:
        self._check_id(a, b, relin)
        self._check_levels(a, b)
        if a.level == 0:
            raise NoLevelsRemaining("mul at level 0")
        k = a.level + 1
        rows = np.arange(k)
        d0 = self.arith.mul(a.c0, b.c0, rows)
        d2 = self.arith.mul(a.c1, b.c1, rows)
        cross = self.arith.mul(
            self.arith.add(a.c0, a.c1, rows),
            self.arith.add(b.c0, b.c1, rows),
            rows,
        )
        d1 = self.arith.sub(self.arith.sub(cross, d0, rows), d2, rows)
        ks0, ks1 = self._keyswitch(self.plan.inverse(d2, rows), relin, k)
        out = Ciphertext(
            self.arith.add(d0, ks0, rows),
            self.arith.add(d1, ks1, rows),
            a.level,
            a.scale * b.scale,
            self.params_id,
        )
        return self.rescale(out)

    def rescale(self, ct: Ciphertext) -> Ciphertext:
        if ct.level == 0:
            raise NoLevelsRemaining("rescale at level 0")
        d = ct.level
        rows = np.arange(d)
        inv_w, inv_ws = self._drop_inv[d]
        comps = []
        for comp in (ct.c0, ct.c1):
            last = self.plan.inverse(comp[d : d + 1], np.array([d]))
            r = self.arith.center(last[0], d)
            red = self.plan.forward(self.arith.spread_signed(r, rows), rows)
            diff = self.arith.sub(comp[:d], red, rows)
            comps.append(self.arith.mul_scalar(diff, inv_w, inv_ws, rows))
        return Ciphertext(
            comps[0],
            comps[1],
            ct.level - 1,
            ct.scale / float(self._chain[d]),
            self.params_id,
        )

    def mod_drop(self, ct: Ciphertext, level: int) -> Ciphertext:
        """Discard limbs down to `level` without touching the scale."""
        if not 0 <= level <= ct.level:
            raise LevelMismatch(f"cannot drop from level {ct.level} to {level}")
        k = level + 1
        return Ciphertext(
            ct.c0[:k].copy(), ct.c1[:k].copy(), level, ct.scale, self.params_id
        )

    # ----- key switching --------------------------------------------------

    def _keyswitch(self, d_coeff: np.ndarray, ksk: KeySwitchKey, k: int):
        """Input: coefficient-domain limbs of the polynomial multiplying the
        foreign key. Output: NTT-domain (c0, c1) contribution under the
        native key, already divided by the special modulus."""
        n = self.params.ring_dimension
        sp = self._special_row
        rows_ext = np.concatenate([np.arange(k), [sp]])
        acc0 = np.zeros((k + 1, n), dtype=np.uint64)
        acc1 = np.zeros((k + 1, n), dtype=np.uint64)
        for j in range(k):
            r = self.arith.center(d_coeff[j], j)
            dig = self.plan.forward(self.arith.spread_signed(r, rows_ext), rows_ext)
            acc0 = self.arith.add(
                acc0, self.arith.mul(dig, ksk.b[j][rows_ext], rows_ext), rows_ext
            )
            acc1 = self.arith.add(
                acc1, self.arith.mul(dig, ksk.a[j][rows_ext], rows_ext), rows_ext
            )
        rows = np.arange(k)
        pinv_w, pinv_ws = self._p_inv
        out = []
        for acc in (acc0, acc1):
            last = self.plan.inverse(acc[k : k + 1], np.array([sp]))
            r = self.arith.center(last[0], sp)
            red = self.plan.forward(self.arith.spread_signed(r, rows), rows)
            diff = self.arith.sub(acc[:k], red, rows)
            out.append(self.arith.mul_scalar(diff, pinv_w[:k], pinv_ws[:k], rows))
        return out[0], out[1]

    # ----- rotations -------------------------------------------------------

    def _auto_perm(self, g: int) -> np.ndarray:
        src = self._perm_cache.get(g)
        if src is None:
            src = self.plan.automorphism(g)
            self._perm_cache[g] = src
        return src

    def _rotate_once(self, ct: Ciphertext, step: int, ksk: KeySwitchKey) -> Ciphertext:
        self._check_id(ksk)
        k = ct.level + 1
        rows = np.arange(k)
        g = pow(5, step, 2 * self.params.ring_dimension)
        src = self._auto_perm(g)
        c1p = self.plan.inverse(ct.c1[:, src], rows)
        ks0, ks1 = self._keyswitch(c1p, ksk, k)
        c0 = self.arith.add(ct.c0[:, src], ks0, rows)
        return Ciphertext(c0, ks1, ct.level, ct.scale, self.params_id)

    def rotate(self, ct: Ciphertext, steps: int, rotations: dict[int, KeySwitchKey]) -> Ciphertext:
        self._check_id(ct)
        steps = int(steps) % self.slots
        if steps == 0:
            return ct.copy()
        if steps in rotations:
            return self._rotate_once(ct, steps, rotations[steps])
        out = ct
        for e in range(self.slots.bit_length()):
            bit = 1 << e
            if steps & bit:
                ksk = rotations.get(bit)
                if ksk is None:
                    raise MissingRotationKey(f"no key for step {bit}")
                out = self._rotate_once(out, bit, ksk)
        return out

    # ----- composite circuits ----------------------------------------------

    def inner_product(
        self,
        x: Ciphertext,
        w,
        n_features: int,
        relin: KeySwitchKey,
        rotations: dict[int, KeySwitchKey],
    ) -> Ciphertext:
        if n_features < 1:
            raise InvalidParams("n_features must be >= 1")
        if n_features > self.slots:
            raise SlotOverflow(f"{n_features} features > {self.slots} slots")
        if isinstance(w, Plaintext):
            acc = self.mul_plain(x, w)
        else:
            acc = self.mul(x, w, relin)
        window = 1 << (n_features - 1).bit_length()
        shift = window >> 1
        while shift >= 1:
            acc = self.add(acc, self.rotate(acc, shift, rotations))
            shift >>= 1
        if window < self.slots:
            # fold the suffix sums back in so slots 0..window-1 all carry the total
            acc = self.add(acc, self.rotate(acc, self.slots - window, rotations))
        return acc

    def eval_poly_odd(self, ct: Ciphertext, coeffs, relin: KeySwitchKey) -> Ciphertext:
        c0, c1, c3 = (float(c) for c in coeffs)
        for c in (c0, c1, c3):
            if not np.isfinite(c):
                raise NonFiniteInput("polynomial coefficients must be finite")
        if ct.level < 2:
            raise NoLevelsRemaining("degree-3 evaluation needs 2 levels")
        delta = self.params.scale
        t2 = self.mul(ct, ct, relin)
        u = self.mul_plain(ct, self.encode_const(c3, ct.level, delta))
        t3 = self.mul(t2, u, relin)
        qb = float(self._chain[ct.level - 1])
        zd = self.mod_drop(ct, ct.level - 1)
        sc = t3.scale * qb / ct.scale
        v = self.mul_plain(zd, self.encode_const(c1, zd.level, sc))
        v = self._coerce_scale(v, t3.scale)
        out = self.add(t3, v)
        return self.add_plain(out, self.encode_const(c0, out.level, out.scale))

    def align_scale(self, ct: Ciphertext, target: float) -> Ciphertext:
        """Bring ct to `target` scale by multiplying with an encoded 1.0."""
        if ct.level == 0:
            raise NoLevelsRemaining("align_scale consumes one level")
        factor = target * float(self._chain[ct.level]) / ct.scale
        out = self.mul_plain(ct, self.encode_const(1.0, ct.level, factor))
        return self._coerce_scale(out, target)

    def _coerce_scale(self, ct: Ciphertext, target: float) -> Ciphertext:
        if abs(ct.scale - target) > 1e-9 * abs(target):
            raise ScaleMismatch(
                f"scale {ct.scale} too far from target {target} to reconcile"
            )
        return Ciphertext(ct.c0, ct.c1, ct.level, target, self.params_id)
