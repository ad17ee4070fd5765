"""Authenticated file envelopes for transporting encrypted payloads.

Layout: magic "ENV1", version u16, 12-byte nonce, then the
authenticated-cipher output (body plus 16-byte tag). The header is
bound as associated data, so every byte of the file is tamper-evident.
"""

from __future__ import annotations

import hashlib
import os
import secrets
import struct

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import AuthFailure, BadKey, BadMagic, WrongVersion

MAGIC = b"ENV1"
VERSION = 1
KEY_LEN = 32
NONCE_LEN = 12
TAG_LEN = 16

_HEADER = MAGIC + struct.pack("<H", VERSION)
_MIN_LEN = len(_HEADER) + NONCE_LEN + TAG_LEN


def sym_keygen() -> bytes:
    return secrets.token_bytes(KEY_LEN)


def _check_key(key: bytes) -> bytes:
    if not isinstance(key, (bytes, bytearray)) or len(key) != KEY_LEN:
        raise BadKey(f"key must be exactly {KEY_LEN} bytes")
    return bytes(key)


def seal(payload: bytes, key: bytes) -> bytes:
    key = _check_key(key)
    nonce = secrets.token_bytes(NONCE_LEN)
    body = AESGCM(key).encrypt(nonce, bytes(payload), _HEADER)
    return _HEADER + nonce + body


def open_envelope(env: bytes, key: bytes) -> bytes:
    key = _check_key(key)
    if len(env) < len(MAGIC) or env[:4] != MAGIC:
        raise BadMagic("not an envelope")
    if len(env) < len(_HEADER):
        raise AuthFailure("truncated envelope")
    (version,) = struct.unpack_from("<H", env, 4)
    if version != VERSION:
        raise WrongVersion(f"unsupported envelope version {version}")
    if len(env) < _MIN_LEN:
        raise AuthFailure("truncated envelope")
    nonce = env[len(_HEADER) : len(_HEADER) + NONCE_LEN]
    body = env[len(_HEADER) + NONCE_LEN :]
    try:
        return AESGCM(key).decrypt(nonce, body, _HEADER)
    except InvalidTag as e:
        raise AuthFailure("authentication tag rejected") from e


def content_hash(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def write_key(path, key: bytes) -> None:
    key = _check_key(key)
    fd = os.open(os.fspath(path), os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    try:
        os.write(fd, key)
    finally:
        os.close(fd)


def read_key(path) -> bytes:
    with open(path, "rb") as fh:
        return _check_key(fh.read())
