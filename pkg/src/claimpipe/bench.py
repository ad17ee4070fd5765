"""Benchmark harness: full claim lifecycles against throwaway artifacts.

Times are wall-clock means and vary with hardware; sizes come from the
real files written during each run, so the storage ratio is
deterministic for a fixed parameter set and record.
"""

from __future__ import annotations

import hashlib
import os
import platform
import tempfile
import time
from dataclasses import dataclass, field

from . import envelope, workflow
from .dataset import FEATURE_NAMES, synthesize
from .errors import InvalidArgument
from .he.engine import HeContext, HeEngine
from .he.serial import deserialize_ciphertext
from .ledger import Ledger
from .model import EncryptedModel, ModelWeights


@dataclass(frozen=True)
class MetricsReport:
    enc_time_per_record_s: float
    claim_processing_s: float
    dec_time_s: float
    contract_exec_s: float
    throughput_tps: float
    storage_overhead_ratio: float
    n_records: int
    parameters: dict = field(default_factory=dict)
    hardware: str = ""

    def rows(self) -> list[tuple[str, str]]:
        return [
            ("Data encryption time per record (s)", f"{self.enc_time_per_record_s:.4f}"),
            ("Claim processing time (s)", f"{self.claim_processing_s:.4f}"),
            ("Result decryption time (s)", f"{self.dec_time_s:.4f}"),
            ("Contract execution time (s)", f"{self.contract_exec_s:.6f}"),
            ("Transaction throughput (tx/s)", f"{self.throughput_tps:.1f}"),
            ("Storage overhead ratio", f"{self.storage_overhead_ratio:.1f}x"),
        ]


def _hardware_note() -> str:
    return f"{platform.platform()}, {os.cpu_count()} cpu(s), python {platform.python_version()}"


def _record_csv_bytes(record) -> int:
    row = ",".join(str(getattr(record, name)) for name in FEATURE_NAMES)
    return len(row.encode("utf-8")) + 1


def _contract_micro(tmp: str, n_ops: int) -> tuple[float, float]:
    """Mean latency and throughput of ledger appends, measured alone."""
    led = Ledger(os.path.join(tmp, "contract-bench.bin"))
    t0 = time.perf_counter()
    for i in range(n_ops):
        h = hashlib.sha256(i.to_bytes(8, "little")).hexdigest()
        r = hashlib.sha256(b"r" + i.to_bytes(8, "little")).hexdigest()
        led.log_computation(f"{i:032x}", h)
        led.log_computation(f"{i:032x}", h, r)
    total = time.perf_counter() - t0
    ops = 2 * n_ops
    return total / ops, ops / total


def run_benchmark(
    n_records: int,
    eng: HeEngine,
    ctx: HeContext,
    weights: ModelWeights,
    em: EncryptedModel,
    sym_key: bytes,
    seed: int = 0,
) -> MetricsReport:
    if n_records < 1:
        raise InvalidArgument("n_records must be >= 1")
    if ctx.secret is None:
        raise InvalidArgument("benchmark needs the private context to decrypt results")
    records = synthesize(n_records, seed=seed)
    enc_t, proc_t, dec_t = [], [], []
    cipher_bytes = plain_bytes = 0
    with tempfile.TemporaryDirectory(prefix="claimpipe-bench-") as tmp:
        led = Ledger(os.path.join(tmp, "ledger.bin"))
        exchange = os.path.join(tmp, "exchange")
        for rec in records:
            t0 = time.perf_counter()
            sub = workflow.client_submit(
                rec, weights, eng, ctx.public, sym_key, exchange, led
            )
            enc_t.append(time.perf_counter() - t0)

            t0 = time.perf_counter()
            procs = workflow.server_process(
                eng, em, ctx.relin, ctx.rotations, sym_key, exchange, led
            )
            proc_t.append(time.perf_counter() - t0)

            with open(procs[0].result_path, "rb") as fh:
                blob = envelope.open_envelope(fh.read(), sym_key)
            ct = deserialize_ciphertext(blob)
            t0 = time.perf_counter()
            eng.decode(eng.decrypt(ct, ctx.secret))
            dec_t.append(time.perf_counter() - t0)

            cipher_bytes += os.path.getsize(sub.request_path)
            cipher_bytes += os.path.getsize(procs[0].result_path)
            plain_bytes += _record_csv_bytes(rec)
        contract_s, tps = _contract_micro(tmp, max(50, n_records))
    params = eng.params
    return MetricsReport(
        enc_time_per_record_s=sum(enc_t) / len(enc_t),
        claim_processing_s=sum(proc_t) / len(proc_t),
        dec_time_s=sum(dec_t) / len(dec_t),
        contract_exec_s=contract_s,
        throughput_tps=tps,
        storage_overhead_ratio=cipher_bytes / plain_bytes,
        n_records=n_records,
        parameters={
            "ring_dimension": params.ring_dimension,
            "slots": params.slot_count,
            "modulus_chain_length": len(params.modulus_chain),
            "scale_bits": int(params.scale).bit_length() - 1,
        },
        hardware=_hardware_note(),
    )
