"""Client/server claim lifecycle over a shared exchange directory.

The client encrypts standardized features, seals them in an envelope,
and logs the ciphertext hash; the server (which never sees the secret
key) re-verifies that hash, runs the encrypted circuit, and logs the
result hash; the client finally decrypts only after the chain, both
envelopes, and both hashes check out.

Artifacts: `<claim_id>.request.bin.aes` and `<claim_id>.result.bin.aes`
inside the exchange directory. Files are written atomically and land
before the corresponding ledger log, so a crash never leaves a logged
hash without its artifact.
"""

from __future__ import annotations

import os
import secrets
import tempfile
from dataclasses import dataclass

import numpy as np

from . import envelope
from .errors import (
    EnvelopeError,
    ExchangeUnwritable,
    MissingDataLog,
    PendingResult,
    StaleSubmission,
    UnknownClaim,
)
from .he.engine import HeEngine, KeySwitchKey, PublicKey, SecretKey
from .he.serial import deserialize_ciphertext, serialize_ciphertext
from .ledger import ENVELOPE_TAMPER, Ledger, Verification
from .model import EncryptedModel, ModelWeights, N_FEATURES, decide, predict_encrypted, preprocess

REQUEST_SUFFIX = ".request.bin.aes"
RESULT_SUFFIX = ".result.bin.aes"


@dataclass(frozen=True)
class SubmissionReceipt:
    claim_id: str
    data_hash: str
    tx_hash: str
    request_path: str


@dataclass(frozen=True)
class ProcessReceipt:
    claim_id: str
    result_hash: str
    tx_hash: str
    result_path: str


@dataclass(frozen=True)
class Outcome:
    claim_id: str
    verification: Verification
    probability: float | None = None
    verdict: str | None = None


def new_claim_id() -> str:
    return secrets.token_hex(16)


def request_path(exchange_dir, claim_id: str) -> str:
    return os.path.join(os.fspath(exchange_dir), claim_id + REQUEST_SUFFIX)


def result_path(exchange_dir, claim_id: str) -> str:
    return os.path.join(os.fspath(exchange_dir), claim_id + RESULT_SUFFIX)


def _atomic_write(path: str, data: bytes) -> None:
    d = os.path.dirname(path) or "."
    try:
        os.makedirs(d, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
        try:
            os.write(fd, data)
        finally:
            os.close(fd)
        os.replace(tmp, path)
    except OSError as e:
        raise ExchangeUnwritable(f"cannot write {path}: {e}") from e


def _existing_submission(
    claim_id: str, sym_key: bytes, exchange_dir, led: Ledger
) -> SubmissionReceipt | None:
    """Original receipt when a prior submission is intact, else None.

    Resubmitting is an idempotent no-op only if the on-disk request still
    opens and hashes to the logged data_hash; otherwise the caller falls
    through to a fresh encrypt and the ledger arbitrates any conflict.
    """
    try:
        rec = led.get_record(claim_id)
    except UnknownClaim:
        return None
    if rec.data_hash is None:
        return None
    path = request_path(exchange_dir, claim_id)
    try:
        with open(path, "rb") as fh:
            blob = envelope.open_envelope(fh.read(), sym_key)
    except (OSError, EnvelopeError):
        return None
    if envelope.content_hash(blob) != rec.data_hash:
        return None
    receipt = led.log_computation(claim_id, rec.data_hash)
    return SubmissionReceipt(claim_id, rec.data_hash, receipt.tx_hash, path)


def client_submit(
    record,
    weights: ModelWeights,
    eng: HeEngine,
    public: PublicKey,
    sym_key: bytes,
    exchange_dir,
    led: Ledger,
    claim_id: str | None = None,
) -> SubmissionReceipt:
    if claim_id is not None:
        existing = _existing_submission(claim_id, sym_key, exchange_dir, led)
        if existing is not None:
            return existing
    claim_id = claim_id or new_claim_id()
    features = preprocess(record, weights.stats)
    packed = np.zeros(eng.slots)
    packed[:N_FEATURES] = features
    ct = eng.encrypt(eng.encode(packed), public)
    blob = serialize_ciphertext(ct)
    data_hash = envelope.content_hash(blob)
    path = request_path(exchange_dir, claim_id)
    _atomic_write(path, envelope.seal(blob, sym_key))
    receipt = led.log_computation(claim_id, data_hash)
    return SubmissionReceipt(claim_id, data_hash, receipt.tx_hash, path)


def pending_claims(exchange_dir) -> list[str]:
    """Request files with no result file yet, oldest naming first."""
    d = os.fspath(exchange_dir)
    if not os.path.isdir(d):
        return []
    out = []
    for name in sorted(os.listdir(d)):
        if name.endswith(REQUEST_SUFFIX):
            cid = name[: -len(REQUEST_SUFFIX)]
            if not os.path.exists(result_path(d, cid)):
                out.append(cid)
    return out


def process_claim(
    claim_id: str,
    eng: HeEngine,
    em: EncryptedModel,
    relin: KeySwitchKey,
    rotations: dict[int, KeySwitchKey],
    sym_key: bytes,
    exchange_dir,
    led: Ledger,
) -> ProcessReceipt:
    try:
        rec = led.get_record(claim_id)
    except UnknownClaim as e:
        raise MissingDataLog(f"claim {claim_id} was never logged") from e
    if rec.data_hash is None:
        raise MissingDataLog(f"claim {claim_id} has no data log")
    with open(request_path(exchange_dir, claim_id), "rb") as fh:
        blob = envelope.open_envelope(fh.read(), sym_key)
    if envelope.content_hash(blob) != rec.data_hash:
        raise StaleSubmission(
            f"request payload for {claim_id} disagrees with the chain; refusing to compute"
        )
    ct = deserialize_ciphertext(blob)
    out_ct = predict_encrypted(eng, ct, em, relin, rotations)
    result_blob = serialize_ciphertext(out_ct)
    result_hash = envelope.content_hash(result_blob)
    path = result_path(exchange_dir, claim_id)
    _atomic_write(path, envelope.seal(result_blob, sym_key))
    receipt = led.log_computation(claim_id, rec.data_hash, result_hash)
    return ProcessReceipt(claim_id, result_hash, receipt.tx_hash, path)


def server_process(
    eng: HeEngine,
    em: EncryptedModel,
    relin: KeySwitchKey,
    rotations: dict[int, KeySwitchKey],
    sym_key: bytes,
    exchange_dir,
    led: Ledger,
) -> list[ProcessReceipt]:
    return [
        process_claim(cid, eng, em, relin, rotations, sym_key, exchange_dir, led)
        for cid in pending_claims(exchange_dir)
    ]


def client_retrieve(
    claim_id: str,
    eng: HeEngine,
    secret: SecretKey,
    sym_key: bytes,
    exchange_dir,
    led: Ledger,
    threshold: float = 0.5,
) -> Outcome:
    res_path = result_path(exchange_dir, claim_id)
    if not os.path.exists(res_path):
        raise PendingResult(f"no result yet for claim {claim_id}")
    chain = led.verify_chain()
    if not chain.valid:
        return Outcome(claim_id, chain)
    try:
        with open(request_path(exchange_dir, claim_id), "rb") as fh:
            req_blob = envelope.open_envelope(fh.read(), sym_key)
        with open(res_path, "rb") as fh:
            res_blob = envelope.open_envelope(fh.read(), sym_key)
    except (EnvelopeError, OSError):
        return Outcome(claim_id, Verification(False, ENVELOPE_TAMPER))
    verification = led.verify_computation(
        claim_id, envelope.content_hash(req_blob), envelope.content_hash(res_blob)
    )
    if not verification.valid:
        return Outcome(claim_id, verification)
    out_ct = deserialize_ciphertext(res_blob)
    raw = float(eng.decode(eng.decrypt(out_ct, secret))[0])
    # the polynomial can stray slightly outside [0, 1]; clamp before deciding
    probability = min(max(raw, 0.0), 1.0)
    decision = decide(probability, threshold)
    return Outcome(claim_id, verification, decision.probability, decision.verdict)
