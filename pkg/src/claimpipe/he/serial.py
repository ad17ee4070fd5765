"""Binary serialization for parameters, keys, plaintexts, ciphertexts.

Layout: magic "HEC1", version u16, kind u8, then kind-specific fields.
Everything is little-endian; arrays are length-prefixed and stored
row-major. Deserializers consume the whole buffer and raise
SerializationError on any structural defect, including trailing bytes,
so a roundtrip is the identity in both directions.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import InvalidParams, SerializationError
from .engine import Ciphertext, HeContext, KeySwitchKey, Plaintext, PublicKey, SecretKey
from .params import HeParams

MAGIC = b"HEC1"
VERSION = 1

KIND_PARAMS = 1
KIND_PLAINTEXT = 2
KIND_CIPHERTEXT = 3
KIND_CONTEXT_PRIVATE = 4
KIND_CONTEXT_PUBLIC = 5

_FINGERPRINT_BYTES = 8  # 16 hex chars


class ByteWriter:
    def __init__(self):
        self._parts: list[bytes] = []

    def u8(self, v: int) -> None:
        self._parts.append(struct.pack("<B", v))

    def u16(self, v: int) -> None:
        self._parts.append(struct.pack("<H", v))

    def u32(self, v: int) -> None:
        self._parts.append(struct.pack("<I", v))

    def u64(self, v: int) -> None:
        self._parts.append(struct.pack("<Q", v))

    def f64(self, v: float) -> None:
        self._parts.append(struct.pack("<d", v))

    def raw(self, b: bytes) -> None:
        self._parts.append(b)

    def blob(self, b: bytes) -> None:
        self.u32(len(b))
        self.raw(b)

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class ByteReader:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def _take(self, n: int) -> bytes:
        end = self._pos + n
        if end > len(self._data):
            raise SerializationError("truncated stream")
        out = self._data[self._pos : end]
        self._pos = end
        return out

    def u8(self) -> int:
        return struct.unpack("<B", self._take(1))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self._take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self._take(8))[0]

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def blob(self) -> bytes:
        return self._take(self.u32())

    def done(self) -> None:
        if self._pos != len(self._data):
            raise SerializationError(
                f"{len(self._data) - self._pos} trailing bytes after payload"
            )


def _w_header(w: ByteWriter, kind: int) -> None:
    w.raw(MAGIC)
    w.u16(VERSION)
    w.u8(kind)


def _r_header(r: ByteReader, kind: int) -> None:
    if r.raw(4) != MAGIC:
        raise SerializationError("bad magic")
    v = r.u16()
    if v != VERSION:
        raise SerializationError(f"unsupported version {v}")
    k = r.u8()
    if k != kind:
        raise SerializationError(f"expected kind {kind}, found {k}")


def _w_mat(w: ByteWriter, m: np.ndarray) -> None:
    """(k, n) uint64, row-major."""
    w.u16(m.shape[0])
    w.u32(m.shape[1])
    w.raw(np.ascontiguousarray(m, dtype="<u8").tobytes())


def _r_mat(r: ByteReader) -> np.ndarray:
    k = r.u16()
    n = r.u32()
    if k == 0 or n == 0:
        raise SerializationError("empty limb array")
    buf = r.raw(8 * k * n)
    return np.frombuffer(buf, dtype="<u8").astype(np.uint64).reshape(k, n)


def _w_ksk(w: ByteWriter, ksk: KeySwitchKey) -> None:
    w.u16(ksk.b.shape[0])
    for j in range(ksk.b.shape[0]):
        _w_mat(w, ksk.b[j])
        _w_mat(w, ksk.a[j])


def _r_ksk(r: ByteReader, params_id: str) -> KeySwitchKey:
    digits = r.u16()
    if digits == 0:
        raise SerializationError("key-switch key with zero digits")
    bs, a_s = [], []
    for _ in range(digits):
        bs.append(_r_mat(r))
        a_s.append(_r_mat(r))
    return KeySwitchKey(np.stack(bs), np.stack(a_s), params_id)


def _w_params_fields(w: ByteWriter, p: HeParams) -> None:
    w.u32(p.ring_dimension)
    w.u16(len(p.modulus_chain))
    for q in p.modulus_chain:
        w.u64(q)
    w.f64(p.scale)
    w.u64(p.special_modulus)


def _r_params_fields(r: ByteReader) -> HeParams:
    n = r.u32()
    chain = tuple(r.u64() for _ in range(r.u16()))
    scale = r.f64()
    special = r.u64()
    p = HeParams(n, chain, scale, special)
    try:
        p.validate()
    except InvalidParams as e:
        raise SerializationError(f"invalid parameters in stream: {e}") from e
    return p


def _w_fingerprint(w: ByteWriter, params_id: str) -> None:
    try:
        raw = bytes.fromhex(params_id)
    except ValueError as e:
        raise SerializationError(f"malformed params id {params_id!r}") from e
    if len(raw) != _FINGERPRINT_BYTES:
        raise SerializationError(f"malformed params id {params_id!r}")
    w.raw(raw)


def _r_fingerprint(r: ByteReader) -> str:
    return r.raw(_FINGERPRINT_BYTES).hex()


def serialize_params(p: HeParams) -> bytes:
    w = ByteWriter()
    _w_header(w, KIND_PARAMS)
    _w_params_fields(w, p)
    return w.getvalue()


def deserialize_params(data: bytes) -> HeParams:
    r = ByteReader(data)
    _r_header(r, KIND_PARAMS)
    p = _r_params_fields(r)
    r.done()
    return p


def serialize_plaintext(pt: Plaintext) -> bytes:
    w = ByteWriter()
    _w_header(w, KIND_PLAINTEXT)
    _w_fingerprint(w, pt.params_id)
    w.u16(pt.level)
    w.f64(pt.scale)
    _w_mat(w, pt.data)
    return w.getvalue()


def deserialize_plaintext(data: bytes) -> Plaintext:
    r = ByteReader(data)
    _r_header(r, KIND_PLAINTEXT)
    pid = _r_fingerprint(r)
    level = r.u16()
    scale = r.f64()
    mat = _r_mat(r)
    r.done()
    _check_body(level, scale, mat)
    return Plaintext(mat, level, scale, pid)


def serialize_ciphertext(ct: Ciphertext) -> bytes:
    w = ByteWriter()
    _w_header(w, KIND_CIPHERTEXT)
    _w_fingerprint(w, ct.params_id)
    w.u16(ct.level)
    w.f64(ct.scale)
    _w_mat(w, ct.c0)
    _w_mat(w, ct.c1)
    return w.getvalue()


def deserialize_ciphertext(data: bytes) -> Ciphertext:
    r = ByteReader(data)
    _r_header(r, KIND_CIPHERTEXT)
    pid = _r_fingerprint(r)
    level = r.u16()
    scale = r.f64()
    c0 = _r_mat(r)
    c1 = _r_mat(r)
    r.done()
    _check_body(level, scale, c0)
    if c0.shape != c1.shape:
        raise SerializationError("ciphertext halves disagree in shape")
    return Ciphertext(c0, c1, level, scale, pid)


def _check_body(level: int, scale: float, mat: np.ndarray) -> None:
    if mat.shape[0] != level + 1:
        raise SerializationError(
            f"level {level} requires {level + 1} limbs, found {mat.shape[0]}"
        )
    if not (scale > 0 and np.isfinite(scale)):
        raise SerializationError(f"non-positive or non-finite scale {scale}")


def serialize_context(ctx: HeContext, include_secret: bool) -> bytes:
    if include_secret and ctx.secret is None:
        raise SerializationError("context holds no secret key")
    w = ByteWriter()
    _w_header(w, KIND_CONTEXT_PRIVATE if include_secret else KIND_CONTEXT_PUBLIC)
    _w_params_fields(w, ctx.params)
    _w_mat(w, ctx.public.b)
    _w_mat(w, ctx.public.a)
    _w_ksk(w, ctx.relin)
    w.u16(len(ctx.rotations))
    for step in sorted(ctx.rotations):
        w.u32(step)
        _w_ksk(w, ctx.rotations[step])
    if include_secret:
        coeffs = np.ascontiguousarray(ctx.secret.coeffs, dtype=np.int8)
        w.u32(coeffs.shape[0])
        w.raw(coeffs.tobytes())
        _w_mat(w, ctx.secret.ntt)
    return w.getvalue()


def deserialize_context(data: bytes) -> HeContext:
    r = ByteReader(data)
    if r.raw(4) != MAGIC:
        raise SerializationError("bad magic")
    v = r.u16()
    if v != VERSION:
        raise SerializationError(f"unsupported version {v}")
    kind = r.u8()
    if kind not in (KIND_CONTEXT_PRIVATE, KIND_CONTEXT_PUBLIC):
        raise SerializationError(f"expected a context, found kind {kind}")
    params = _r_params_fields(r)
    pid = params.fingerprint()
    public = PublicKey(_r_mat(r), _r_mat(r), pid)
    relin = _r_ksk(r, pid)
    rotations = {}
    for _ in range(r.u16()):
        step = r.u32()
        rotations[step] = _r_ksk(r, pid)
    secret = None
    if kind == KIND_CONTEXT_PRIVATE:
        n = r.u32()
        coeffs = np.frombuffer(r.raw(n), dtype=np.int8).copy()
        secret = SecretKey(coeffs, _r_mat(r), pid)
    r.done()
    ctx = HeContext(params, public, relin, rotations, secret)
    _check_context_shapes(ctx)
    return ctx


def _check_context_shapes(ctx: HeContext) -> None:
    n = ctx.params.ring_dimension
    k = len(ctx.params.modulus_chain)
    if ctx.public.b.shape != (k, n) or ctx.public.a.shape != (k, n):
        raise SerializationError("public key shape disagrees with parameters")
    if ctx.relin.b.shape != (k, k + 1, n) or ctx.relin.a.shape != (k, k + 1, n):
        raise SerializationError("relinearization key shape disagrees with parameters")
    for step, ksk in ctx.rotations.items():
        if not 0 < step < ctx.params.slot_count:
            raise SerializationError(f"rotation step {step} out of range")
        if ksk.b.shape != (k, k + 1, n) or ksk.a.shape != (k, k + 1, n):
            raise SerializationError(f"rotation key {step} shape disagrees")
    if ctx.secret is not None:
        if ctx.secret.coeffs.shape != (n,):
            raise SerializationError("secret key length disagrees with parameters")
        if ctx.secret.ntt.shape != (k + 1, n):
            raise SerializationError("secret key transform shape disagrees")
