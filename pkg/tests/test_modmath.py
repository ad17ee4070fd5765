"""Word-level modular arithmetic against exact Python-integer oracles."""

import numpy as np
import pytest

from claimpipe.errors import InvalidParams
from claimpipe.he import modmath
from claimpipe.he.modmath import RnsArith


def _prime(bits, two_n=64):
    return modmath.find_ntt_primes(bits, 1, two_n)[0]


def test_mul_hi_matches_python():
    rng = np.random.default_rng(7)
    a = rng.integers(0, 1 << 64, 5000, dtype=np.uint64)
    b = rng.integers(0, 1 << 64, 5000, dtype=np.uint64)
    hi = modmath.mul_hi(a, b)
    for x, y, h in zip(a[:200].tolist(), b[:200].tolist(), hi[:200].tolist()):
        assert h == (x * y) >> 64
    # spot extremes
    edge = np.array([0, 1, (1 << 64) - 1], dtype=np.uint64)
    assert modmath.mul_hi(edge, edge).tolist() == [0, 0, ((1 << 64) - 1) ** 2 >> 64]


@pytest.mark.parametrize("bits", [30, 40, 60, 62])
def test_scalar_kernels_match_python(bits):
    q = _prime(bits)
    rng = np.random.default_rng(bits)
    a = rng.integers(0, q, 2000, dtype=np.uint64)
    b = rng.integers(0, q, 2000, dtype=np.uint64)
    qa = np.uint64(q)

    got = modmath.add_mod(a, b, qa).tolist()
    assert got == [(x + y) % q for x, y in zip(a.tolist(), b.tolist())]

    got = modmath.sub_mod(a, b, qa).tolist()
    assert got == [(x - y) % q for x, y in zip(a.tolist(), b.tolist())]

    got = modmath.neg_mod(a, qa).tolist()
    assert got == [(-x) % q for x in a.tolist()]

    w = int(rng.integers(1, q))
    ws = np.uint64(modmath.shoup(w, q))
    got = modmath.mul_shoup(a, np.uint64(w), ws, qa).tolist()
    assert got == [x * w % q for x in a.tolist()]

    neg_qinv = np.uint64((-pow(q, -1, 1 << 64)) % (1 << 64))
    r = np.uint64((1 << 64) % q)
    rs = np.uint64(modmath.shoup((1 << 64) % q, q))
    got = modmath.mul_mod(a, b, qa, neg_qinv, r, rs).tolist()
    assert got == [x * y % q for x, y in zip(a.tolist(), b.tolist())]


def test_mul_shoup_accepts_full_range_left_operand():
    q = _prime(60)
    rng = np.random.default_rng(3)
    a = rng.integers(0, 1 << 64, 1000, dtype=np.uint64)
    w = int(rng.integers(1, q))
    ws = np.uint64(modmath.shoup(w, q))
    got = modmath.mul_shoup(a, np.uint64(w), ws, np.uint64(q))
    assert got.tolist() == [x * w % q for x in a.tolist()]


def test_rns_arith_rows():
    mods = [_prime(30), _prime(40), _prime(60)]
    ar = RnsArith(mods)
    rng = np.random.default_rng(11)
    a = np.stack([rng.integers(0, q, 64, dtype=np.uint64) for q in mods])
    b = np.stack([rng.integers(0, q, 64, dtype=np.uint64) for q in mods])

    s = ar.add(a, b)
    d = ar.sub(a, b)
    m = ar.mul(a, b)
    for i, q in enumerate(mods):
        assert s[i].tolist() == [(x + y) % q for x, y in zip(a[i].tolist(), b[i].tolist())]
        assert d[i].tolist() == [(x - y) % q for x, y in zip(a[i].tolist(), b[i].tolist())]
        assert m[i].tolist() == [x * y % q for x, y in zip(a[i].tolist(), b[i].tolist())]

    rows = np.array([2])
    m2 = ar.mul(a[2:3], b[2:3], rows)
    assert m2.tolist() == m[2:3].tolist()


def test_spread_and_center_roundtrip():
    mods = [_prime(30), _prime(40)]
    ar = RnsArith(mods)
    rng = np.random.default_rng(5)
    r = rng.integers(-(1 << 40), 1 << 40, 256)
    spread = ar.spread_signed(r)
    for i, q in enumerate(mods):
        assert spread[i].tolist() == [x % q for x in r.tolist()]
    # centering returns the signed representative for small magnitudes
    small = rng.integers(-100, 100, 256)
    enc = ar.spread_signed(small, np.array([0]))[0]
    back = ar.center(enc, 0)
    assert back.tolist() == small.tolist()


def test_find_ntt_primes_properties():
    two_n = 2 * 4096
    ps = modmath.find_ntt_primes(40, 4, two_n)
    assert len(set(ps)) == 4
    for p in ps:
        assert p.bit_length() == 40
        assert p % two_n == 1
        assert modmath.is_prime(p)
    assert ps == sorted(ps, reverse=True)
    more = modmath.find_ntt_primes(40, 1, two_n, exclude=ps)
    assert more[0] not in ps


def test_primitive_root_has_exact_order():
    two_n = 64
    q = modmath.find_ntt_primes(30, 1, two_n)[0]
    c = modmath.primitive_root_2n(q, two_n)
    assert pow(c, two_n, q) == 1
    assert pow(c, two_n // 2, q) == q - 1


def test_rns_arith_rejects_bad_moduli():
    with pytest.raises(InvalidParams):
        RnsArith([4])
    with pytest.raises(InvalidParams):
        RnsArith([(1 << 63) + 1])
    with pytest.raises(InvalidParams):
        RnsArith([97, 97])
