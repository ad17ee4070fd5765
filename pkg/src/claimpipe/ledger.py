"""Append-only hash-chained ledger with computation attestation.

One transaction per block. A claim is attested in two steps: a data
log (result hash still unbound) and a later result log that completes
the record. Verification recomputes every block hash and back-link
from the file, so any byte-level mutation is attributed to the first
block it damages.

Block timestamps come from an append-time monotonic rule
(max(previous + 1, wall clock)), so chronological-order proofs cannot
be broken by clock adjustments; the raw wall clock is stored alongside
for display.
"""

from __future__ import annotations

import hashlib
import os
import re
import struct
import threading
import time
from dataclasses import dataclass, replace

from .errors import (
    CorruptLedger,
    DataHashConflict,
    DuplicateResult,
    LedgerError,
    MissingDataLog,
    UnknownClaim,
)

MAGIC = b"LGR1"
VERSION = 1

OP_GENESIS = "genesis"
OP_DATA = "data"
OP_RESULT = "result"

GENESIS_PREV = "0" * 64

_HEX64 = re.compile(r"^[0-9a-f]{64}$")

# verification reasons
CHAIN_CORRUPT = "ChainCorrupt"
UNKNOWN_CLAIM = "UnknownClaim"
DATA_HASH_MISMATCH = "DataHashMismatch"
RESULT_MISSING = "ResultMissing"
RESULT_HASH_MISMATCH = "ResultHashMismatch"
ORDER_VIOLATION = "OrderViolation"
ENVELOPE_TAMPER = "EnvelopeTamper"  # used by the retrieval workflow


@dataclass(frozen=True)
class Verification:
    valid: bool
    reason: str | None = None
    index: int | None = None

    @property
    def label(self) -> str:
        if self.valid:
            return "Valid"
        if self.index is not None:
            return f"Invalid ({self.reason}: block {self.index})"
        return f"Invalid ({self.reason})"


VALID = Verification(True)


@dataclass(frozen=True)
class Block:
    index: int
    prev_hash: str
    ts_mono: int  # ms, strictly increasing across the chain
    ts_wall: int  # ms since epoch, display only
    payload: bytes
    block_hash: str


@dataclass(frozen=True)
class TxReceipt:
    tx_hash: str  # "0x" + 64 hex over the canonical payload
    block_index: int
    timestamp: int  # wall ms


@dataclass
class ComputationRecord:
    claim_id: str
    data_hash: str | None = None
    result_hash: str | None = None
    ts_data: int | None = None
    ts_result: int | None = None
    data_block: int | None = None
    result_block: int | None = None


def _lp(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def tx_payload(claim_id: str, data_hash: str, result_hash: str | None, op: str) -> bytes:
    """Canonical transaction bytes: length-prefixed UTF-8 fields in fixed order."""
    return _lp(claim_id) + _lp(data_hash) + _lp(result_hash or "") + _lp(op)


def tx_hash(payload: bytes) -> str:
    return "0x" + hashlib.sha256(payload).hexdigest()


def _parse_payload(payload: bytes):
    fields = []
    pos = 0
    for _ in range(4):
        if pos + 4 > len(payload):
            raise ValueError("truncated transaction")
        (ln,) = struct.unpack_from("<I", payload, pos)
        pos += 4
        if pos + ln > len(payload):
            raise ValueError("truncated transaction field")
        fields.append(payload[pos : pos + ln].decode("utf-8"))
        pos += ln
    if pos != len(payload):
        raise ValueError("trailing transaction bytes")
    return fields  # claim_id, data_hash, result_hash ("" if none), op


def _block_hash(index: int, prev_hash: str, ts_mono: int, ts_wall: int, payload: bytes) -> str:
    h = hashlib.sha256()
    h.update(struct.pack("<Q", index))
    h.update(bytes.fromhex(prev_hash))
    h.update(struct.pack("<QQ", ts_mono, ts_wall))
    h.update(struct.pack("<I", len(payload)))
    h.update(payload)
    return h.hexdigest()


def _block_bytes(b: Block) -> bytes:
    body = (
        struct.pack("<Q", b.index)
        + bytes.fromhex(b.prev_hash)
        + struct.pack("<QQ", b.ts_mono, b.ts_wall)
        + struct.pack("<I", len(b.payload))
        + b.payload
        + bytes.fromhex(b.block_hash)
    )
    return struct.pack("<I", len(body)) + body


def _check_hex64(value: str, what: str) -> str:
    if not isinstance(value, str) or not _HEX64.match(value):
        raise LedgerError(f"{what} must be 64 lowercase hex characters")
    return value


def _replay(data: bytes):
    """Parse and verify a ledger image; never raises on malformed bytes.

    Returns (blocks, records, Verification). Record construction is
    lenient: a hand-forged chain (for example a result logged before
    its data) still loads, and verify_computation reports the
    violation.
    """
    blocks: list[Block] = []
    records: dict[str, ComputationRecord] = {}
    if len(data) < 6 or data[:4] != MAGIC or struct.unpack_from("<H", data, 4)[0] != VERSION:
        return blocks, records, Verification(False, CHAIN_CORRUPT, 0)
    pos = 6
    prev_hash = GENESIS_PREV
    prev_mono = -1
    index = 0
    while pos < len(data):
        bad = Verification(False, CHAIN_CORRUPT, index)
        if pos + 4 > len(data):
            return blocks, records, bad
        (ln,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if ln < 8 + 32 + 16 + 4 + 32 or pos + ln > len(data):
            return blocks, records, bad
        body = data[pos : pos + ln]
        pos += ln
        idx, = struct.unpack_from("<Q", body, 0)
        prev = body[8:40].hex()
        ts_mono, ts_wall = struct.unpack_from("<QQ", body, 40)
        (plen,) = struct.unpack_from("<I", body, 56)
        if 60 + plen + 32 != ln:
            return blocks, records, bad
        payload = body[60 : 60 + plen]
        stored_hash = body[60 + plen :].hex()
        if idx != index or prev != prev_hash or ts_mono <= prev_mono:
            return blocks, records, bad
        if _block_hash(idx, prev, ts_mono, ts_wall, payload) != stored_hash:
            return blocks, records, bad
        try:
            claim_id, data_hash, result_hash, op = _parse_payload(payload)
        except ValueError:
            return blocks, records, bad
        if index == 0 and op != OP_GENESIS:
            return blocks, records, bad
        block = Block(idx, prev, ts_mono, ts_wall, payload, stored_hash)
        blocks.append(block)
        _apply_tx(records, claim_id, data_hash, result_hash, op, block)
        prev_hash = stored_hash
        prev_mono = ts_mono
        index += 1
    if not blocks:
        return blocks, records, Verification(False, CHAIN_CORRUPT, 0)
    return blocks, records, VALID


def _apply_tx(records, claim_id, data_hash, result_hash, op, block: Block) -> None:
    if op == OP_DATA:
        rec = records.setdefault(claim_id, ComputationRecord(claim_id))
        if rec.data_block is None:
            rec.data_hash = data_hash
            rec.ts_data = block.ts_mono
            rec.data_block = block.index
    elif op == OP_RESULT:
        rec = records.setdefault(claim_id, ComputationRecord(claim_id))
        if rec.result_block is None:
            rec.result_hash = result_hash or None
            rec.ts_result = block.ts_mono
            rec.result_block = block.index


class Ledger:
    """Single-writer append-only chain backed by one file."""

    def __init__(self, path):
        self.path = os.fspath(path)
        self._lock = threading.Lock()
        if os.path.exists(self.path) and os.path.getsize(self.path) > 0:
            with open(self.path, "rb") as fh:
                data = fh.read()
            blocks, records, verdict = _replay(data)
            if not verdict.valid:
                raise CorruptLedger(verdict.index)
            self._blocks = blocks
            self._records = records
        else:
            with open(self.path, "wb") as fh:
                fh.write(MAGIC + struct.pack("<H", VERSION))
            self._blocks = []
            self._records = {}
            self._append(tx_payload("", "", None, OP_GENESIS))

    # ----- append path ----------------------------------------------------

    def _append(self, payload: bytes) -> Block:
        index = len(self._blocks)
        prev = self._blocks[-1].block_hash if self._blocks else GENESIS_PREV
        wall = int(time.time() * 1000)
        mono = max((self._blocks[-1].ts_mono + 1) if self._blocks else 0, wall)
        block = Block(
            index, prev, mono, wall, payload,
            _block_hash(index, prev, mono, wall, payload),
        )
        with open(self.path, "ab") as fh:
            fh.write(_block_bytes(block))
        self._blocks.append(block)
        return block

    def log_computation(self, claim_id: str, data_hash: str, result_hash: str | None = None) -> TxReceipt:
        if not claim_id:
            raise LedgerError("claim_id must be non-empty")
        _check_hex64(data_hash, "data_hash")
        if result_hash is not None:
            _check_hex64(result_hash, "result_hash")
        with self._lock:
            rec = self._records.get(claim_id)
            if result_hash is None:
                if rec is not None and rec.data_block is not None:
                    if rec.data_hash != data_hash:
                        raise DataHashConflict(
                            f"claim {claim_id} already logged with a different data hash"
                        )
                    # idempotent re-log: return the original receipt
                    orig = self._blocks[rec.data_block]
                    return TxReceipt(tx_hash(orig.payload), orig.index, orig.ts_wall)
                payload = tx_payload(claim_id, data_hash, None, OP_DATA)
                block = self._append(payload)
            else:
                if rec is None or rec.data_block is None:
                    raise MissingDataLog(f"no data log for claim {claim_id}")
                if rec.result_block is not None:
                    raise DuplicateResult(f"claim {claim_id} already has a result")
                if rec.data_hash != data_hash:
                    raise DataHashConflict(
                        f"data hash disagrees with the chain for claim {claim_id}"
                    )
                payload = tx_payload(claim_id, data_hash, result_hash, OP_RESULT)
                block = self._append(payload)
            _apply_tx(self._records, claim_id, data_hash, result_hash,
                      OP_RESULT if result_hash else OP_DATA, block)
            return TxReceipt(tx_hash(payload), block.index, block.ts_wall)

    # ----- verification -----------------------------------------------------

    def verify_chain(self) -> Verification:
        """Re-reads the file, so on-disk tampering after open is caught."""
        try:
            with open(self.path, "rb") as fh:
                data = fh.read()
        except OSError:
            return Verification(False, CHAIN_CORRUPT, 0)
        _, _, verdict = _replay(data)
        return verdict

    def verify_computation(self, claim_id: str, data_hash: str, result_hash: str) -> Verification:
        with self._lock:
            rec = self._records.get(claim_id)
            if rec is None:
                return Verification(False, UNKNOWN_CLAIM)
            if rec.data_block is None:
                return Verification(False, ORDER_VIOLATION)
            if rec.result_block is not None and (
                rec.data_block > rec.result_block or rec.ts_data > rec.ts_result
            ):
                return Verification(False, ORDER_VIOLATION)
            if rec.data_hash != data_hash:
                return Verification(False, DATA_HASH_MISMATCH)
            if rec.result_block is None or rec.result_hash is None:
                return Verification(False, RESULT_MISSING)
            if rec.result_hash != result_hash:
                return Verification(False, RESULT_HASH_MISMATCH)
            return VALID

    # ----- inspection ---------------------------------------------------------

    def get_record(self, claim_id: str) -> ComputationRecord:
        with self._lock:
            rec = self._records.get(claim_id)
            if rec is None:
                raise UnknownClaim(f"no record for claim {claim_id}")
            return replace(rec)

    @property
    def blocks(self) -> list[Block]:
        with self._lock:
            return list(self._blocks)

    def dump(self) -> list[dict]:
        out = []
        for b in self.blocks:
            claim_id, data_hash, result_hash, op = _parse_payload(b.payload)
            out.append(
                {
                    "index": b.index,
                    "op": op,
                    "claim_id": claim_id,
                    "data_hash": data_hash,
                    "result_hash": result_hash,
                    "tx_hash": tx_hash(b.payload),
                    "prev_hash": b.prev_hash,
                    "block_hash": b.block_hash,
                    "timestamp_ms": b.ts_wall,
                }
            )
        return out
