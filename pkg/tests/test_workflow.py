"""End-to-end claim lifecycle and tamper handling over an exchange dir."""

import os

import numpy as np
import pytest

from claimpipe import envelope, workflow
from claimpipe.dataset import RawRecord, derive_labels, synthesize
from claimpipe.errors import (
    AuthFailure,
    DataHashConflict,
    ExchangeUnwritable,
    MissingDataLog,
    PendingResult,
    SchemaViolation,
    StaleSubmission,
)
from claimpipe.he.engine import HeEngine
from claimpipe.he.params import HeParams
from claimpipe.he.serial import serialize_ciphertext
from claimpipe.ledger import (
    ENVELOPE_TAMPER,
    RESULT_HASH_MISMATCH,
    Ledger,
)
from claimpipe.model import encrypt_model, predict_replica, preprocess, train_logistic


@pytest.fixture(scope="module")
def env():
    params = HeParams.create(ring_dimension=2048, scale_primes=3)
    eng = HeEngine(params, seed=11)
    suffix = eng.slots - 8
    ctx = eng.keygen(rotation_steps=[1, 2, 4, suffix])
    records = synthesize(240, seed=5)
    labels = derive_labels(records)
    weights = train_logistic(records, labels)
    em = encrypt_model(weights, eng, ctx.public)
    key = envelope.sym_keygen()
    return eng, ctx, weights, em, key, records


def _submit(env, tmp_path, record, claim_id=None):
    eng, ctx, weights, em, key, _ = env
    led = Ledger(tmp_path / "ledger.bin")
    exchange = tmp_path / "exchange"
    receipt = workflow.client_submit(
        record, weights, eng, ctx.public, key, exchange, led, claim_id
    )
    return led, exchange, receipt


def _full_run(env, tmp_path, record):
    eng, ctx, weights, em, key, _ = env
    led, exchange, sub = _submit(env, tmp_path, record)
    procs = workflow.server_process(eng, em, ctx.relin, ctx.rotations, key, exchange, led)
    assert len(procs) == 1
    out = workflow.client_retrieve(sub.claim_id, eng, ctx.secret, key, exchange, led)
    return led, exchange, sub, procs[0], out


def test_lifecycle_probability_tracks_plain_replica(env, tmp_path):
    eng, ctx, weights, em, key, records = env
    led = Ledger(tmp_path / "ledger.bin")
    exchange = tmp_path / "exchange"
    for rec in records[:3]:
        sub = workflow.client_submit(rec, weights, eng, ctx.public, key, exchange, led)
        workflow.server_process(eng, em, ctx.relin, ctx.rotations, key, exchange, led)
        out = workflow.client_retrieve(sub.claim_id, eng, ctx.secret, key, exchange, led)
        assert out.verification.valid
        assert out.verification.label == "Valid"
        expected = predict_replica(preprocess(rec, weights.stats), weights)
        assert abs(out.probability - expected) <= 0.02
        want = "Approved" if expected > weights.threshold else "Denied"
        if abs(expected - weights.threshold) > 0.02:
            assert out.verdict == want


def test_submission_receipt_hash_matches_sealed_payload(env, tmp_path):
    eng, ctx, weights, em, key, records = env
    led, exchange, sub = _submit(env, tmp_path, records[0])
    with open(sub.request_path, "rb") as fh:
        blob = envelope.open_envelope(fh.read(), key)
    assert envelope.content_hash(blob) == sub.data_hash
    rec = led.get_record(sub.claim_id)
    assert rec.data_hash == sub.data_hash
    assert rec.result_hash is None


def test_retrieve_before_process_is_pending(env, tmp_path):
    eng, ctx, weights, em, key, records = env
    led, exchange, sub = _submit(env, tmp_path, records[0])
    with pytest.raises(PendingResult):
        workflow.client_retrieve(sub.claim_id, eng, ctx.secret, key, exchange, led)


def test_pending_claims_listing_clears_after_process(env, tmp_path):
    eng, ctx, weights, em, key, records = env
    led, exchange, sub = _submit(env, tmp_path, records[0])
    assert workflow.pending_claims(exchange) == [sub.claim_id]
    workflow.server_process(eng, em, ctx.relin, ctx.rotations, key, exchange, led)
    assert workflow.pending_claims(exchange) == []
    assert workflow.pending_claims(tmp_path / "nowhere") == []


def test_process_with_no_pending_claims_returns_empty(env, tmp_path):
    eng, ctx, weights, em, key, _ = env
    led = Ledger(tmp_path / "ledger.bin")
    assert workflow.server_process(
        eng, em, ctx.relin, ctx.rotations, key, tmp_path / "exchange", led
    ) == []


def test_invalid_record_rejected_before_any_io(env, tmp_path):
    eng, ctx, weights, em, key, _ = env
    led = Ledger(tmp_path / "ledger.bin")
    bad = RawRecord(age=30, sex=3, bmi=25.0, children=0, smoker=0, region=1, charges=100.0)
    with pytest.raises(SchemaViolation):
        workflow.client_submit(bad, weights, eng, ctx.public, key, tmp_path / "x", led)
    assert not os.path.exists(tmp_path / "x")
    assert len(led.blocks) == 1


def test_unwritable_exchange_leaves_ledger_untouched(env, tmp_path):
    eng, ctx, weights, em, key, records = env
    led = Ledger(tmp_path / "ledger.bin")
    blocker = tmp_path / "blocked"
    blocker.write_bytes(b"not a directory")
    with pytest.raises(ExchangeUnwritable):
        workflow.client_submit(
            records[0], weights, eng, ctx.public, key, blocker / "sub", led
        )
    assert len(led.blocks) == 1


def test_resubmission_with_intact_artifact_is_idempotent(env, tmp_path):
    eng, ctx, weights, em, key, records = env
    led, exchange, first = _submit(env, tmp_path, records[0], claim_id="a" * 32)
    blocks_before = len(led.blocks)
    again = workflow.client_submit(
        records[0], weights, eng, ctx.public, key, exchange, led, claim_id="a" * 32
    )
    assert again == first
    assert len(led.blocks) == blocks_before


def test_resubmission_after_artifact_loss_conflicts_at_ledger(env, tmp_path):
    eng, ctx, weights, em, key, records = env
    led, exchange, first = _submit(env, tmp_path, records[0], claim_id="b" * 32)
    os.remove(first.request_path)
    # fresh encryption is randomized, so the re-minted hash cannot match
    with pytest.raises(DataHashConflict):
        workflow.client_submit(
            records[0], weights, eng, ctx.public, key, exchange, led, claim_id="b" * 32
        )


def test_process_without_data_log_is_rejected(env, tmp_path):
    eng, ctx, weights, em, key, records = env
    led = Ledger(tmp_path / "ledger.bin")
    exchange = tmp_path / "exchange"
    os.makedirs(exchange)
    blob = serialize_ciphertext(
        eng.encrypt(eng.encode(np.zeros(eng.slots)), ctx.public)
    )
    with open(workflow.request_path(exchange, "c" * 32), "wb") as fh:
        fh.write(envelope.seal(blob, key))
    with pytest.raises(MissingDataLog):
        workflow.server_process(eng, em, ctx.relin, ctx.rotations, key, exchange, led)


def test_swapped_request_payload_is_stale_and_never_computed(env, tmp_path):
    eng, ctx, weights, em, key, records = env
    led, exchange, sub = _submit(env, tmp_path, records[0])
    # a key-holding insider swaps in a different, validly sealed ciphertext
    other = serialize_ciphertext(
        eng.encrypt(eng.encode(np.ones(eng.slots)), ctx.public)
    )
    with open(sub.request_path, "wb") as fh:
        fh.write(envelope.seal(other, key))
    with pytest.raises(StaleSubmission):
        workflow.server_process(eng, em, ctx.relin, ctx.rotations, key, exchange, led)
    assert led.get_record(sub.claim_id).result_hash is None
    assert not os.path.exists(workflow.result_path(exchange, sub.claim_id))


def test_keyless_request_tamper_fails_authentication(env, tmp_path):
    eng, ctx, weights, em, key, records = env
    led, exchange, sub = _submit(env, tmp_path, records[0])
    raw = bytearray(open(sub.request_path, "rb").read())
    raw[len(raw) // 2] ^= 0x01
    with open(sub.request_path, "wb") as fh:
        fh.write(bytes(raw))
    with pytest.raises(AuthFailure):
        workflow.server_process(eng, em, ctx.relin, ctx.rotations, key, exchange, led)


def test_tampered_result_envelope_yields_envelope_tamper(env, tmp_path):
    eng, ctx, weights, em, key, records = env
    led, exchange, sub, proc, _ = _full_run(env, tmp_path, records[0])
    raw = bytearray(open(proc.result_path, "rb").read())
    raw[-1] ^= 0xFF
    with open(proc.result_path, "wb") as fh:
        fh.write(bytes(raw))
    out = workflow.client_retrieve(sub.claim_id, eng, ctx.secret, key, exchange, led)
    assert not out.verification.valid
    assert out.verification.reason == ENVELOPE_TAMPER
    assert out.verification.label == "Invalid (EnvelopeTamper)"
    assert out.probability is None and out.verdict is None


def test_tampered_request_envelope_after_process(env, tmp_path):
    eng, ctx, weights, em, key, records = env
    led, exchange, sub, proc, _ = _full_run(env, tmp_path, records[0])
    raw = bytearray(open(sub.request_path, "rb").read())
    raw[10] ^= 0x40
    with open(sub.request_path, "wb") as fh:
        fh.write(bytes(raw))
    out = workflow.client_retrieve(sub.claim_id, eng, ctx.secret, key, exchange, led)
    assert out.verification.reason == ENVELOPE_TAMPER
    assert out.verdict is None


def test_insider_reseal_of_mutated_result_is_hash_mismatch(env, tmp_path):
    eng, ctx, weights, em, key, records = env
    led, exchange, sub, proc, _ = _full_run(env, tmp_path, records[0])
    blob = bytearray(
        envelope.open_envelope(open(proc.result_path, "rb").read(), key)
    )
    blob[-9] ^= 0x02  # flip one inner HE byte, then re-seal with the real key
    with open(proc.result_path, "wb") as fh:
        fh.write(envelope.seal(bytes(blob), key))
    out = workflow.client_retrieve(sub.claim_id, eng, ctx.secret, key, exchange, led)
    assert not out.verification.valid
    assert out.verification.reason == RESULT_HASH_MISMATCH
    assert out.verification.label == "Invalid (ResultHashMismatch)"
    assert out.probability is None and out.verdict is None


def test_ledger_file_mutation_detected_at_retrieve(env, tmp_path):
    eng, ctx, weights, em, key, records = env
    led, exchange, sub, proc, _ = _full_run(env, tmp_path, records[0])
    path = tmp_path / "ledger.bin"
    raw = bytearray(path.read_bytes())
    raw[len(raw) - 40] ^= 0x10
    path.write_bytes(bytes(raw))
    out = workflow.client_retrieve(sub.claim_id, eng, ctx.secret, key, exchange, led)
    assert not out.verification.valid
    assert out.verification.reason == "ChainCorrupt"
    assert out.verdict is None


def test_server_inputs_exclude_secret_key():
    import inspect

    for fn in (workflow.server_process, workflow.process_claim):
        names = " ".join(inspect.signature(fn).parameters)
        assert "secret" not in names and "private" not in names


def test_probability_is_always_clamped_into_unit_interval(env, tmp_path):
    # an extreme record drives the raw polynomial output past the bounds
    eng, ctx, weights, em, key, _ = env
    extreme = RawRecord(age=64, sex=1, bmi=53.0, children=5, smoker=1, region=3, charges=1.0)
    led, exchange, sub, proc, out = _full_run(env, tmp_path, extreme)
    assert out.verification.valid
    assert 0.0 <= out.probability <= 1.0
