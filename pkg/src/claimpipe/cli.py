"""Command-line interface for the claim pipeline.

Subcommands: keygen, train, submit, process, retrieve, ledger, bench.
Exit codes: 0 success, 1 verification failure, 2 usage or schema error,
3 cryptographic or ledger failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import bench, envelope, workflow
from .config import Config, load_config
from .dataset import RawRecord, derive_labels, load_csv
from .errors import (
    ConfigError,
    CorruptLedger,
    EnvelopeError,
    HeError,
    InvalidArgument,
    LedgerError,
    ModelError,
    WorkflowError,
)
from .he.engine import HeContext, HeEngine
from .he.serial import deserialize_context, serialize_context
from .ledger import Ledger
from .model import (
    ModelWeights,
    deserialize_encrypted_model,
    encrypt_model,
    fit_sigmoid_poly,
    forest_baseline_accuracy,
    predict_plain,
    preprocess,
    serialize_encrypted_model,
    train_logistic,
)

PROMPTS = (
    ("age", "age: "),
    ("sex", "sex (0=female, 1=male): "),
    ("bmi", "bmi: "),
    ("children", "children: "),
    ("smoker", "smoker (0=no, 1=yes): "),
    ("region", "region (0-3): "),
    ("charges", "charges: "),
)


def _read_bytes(path: str, hint: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read {hint} at {path}: {e} (run keygen/train first?)") from e


def _load_context(cfg: Config, need_secret: bool) -> tuple[HeEngine, HeContext]:
    name = "private_context" if need_secret else "public_context"
    ctx = deserialize_context(_read_bytes(cfg.path(name), name.replace("_", " ")))
    return HeEngine(ctx.params, seed=cfg.seed), ctx


def _load_key(cfg: Config) -> bytes:
    return envelope.read_key(cfg.path("aes_key"))


def _emit(args, payload: dict, human_lines: list[str]) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        for line in human_lines:
            print(line)


def cmd_keygen(args, cfg: Config) -> int:
    paths = [cfg.path("private_context"), cfg.path("public_context"), cfg.path("aes_key")]
    if not args.force:
        for p in paths:
            if os.path.exists(p):
                raise FileExistsError(f"{p} exists; pass --force to overwrite")
    params = cfg.he_params()
    eng = HeEngine(params, seed=cfg.seed)
    steps = sorted(set(eng.default_rotation_steps()) | {eng.slots - 8})
    ctx = eng.keygen(rotation_steps=steps)
    os.makedirs(cfg.work_dir, exist_ok=True)
    for path, blob in (
        (paths[0], serialize_context(ctx, include_secret=True)),
        (paths[1], serialize_context(ctx, include_secret=False)),
    ):
        with open(path, "wb") as fh:
            fh.write(blob)
    envelope.write_key(paths[2], envelope.sym_keygen())
    _emit(
        args,
        {"private_context": paths[0], "public_context": paths[1], "aes_key": paths[2]},
        [
            "Keys written.",
            f"  private context: {paths[0]}",
            f"  public context: {paths[1]}",
            f"  aes key: {paths[2]}",
        ],
    )
    return 0


def _accuracy(records, labels, w: ModelWeights) -> float:
    hits = sum(
        (predict_plain(preprocess(r, w.stats), w) > w.threshold) == bool(y)
        for r, y in zip(records, labels)
    )
    return hits / len(records)


def cmd_train(args, cfg: Config) -> int:
    records, labels = load_csv(args.dataset)
    rule = ""
    if labels is None:
        labels = derive_labels(records)
        rule = "charges <= 75th percentile"
    rng = np.random.default_rng(cfg.seed if cfg.seed is not None else 0)
    order = rng.permutation(len(records))
    cut = max(1, int(len(records) * 0.75))
    train_idx, test_idx = order[:cut], order[cut:]
    w = train_logistic(
        [records[i] for i in train_idx],
        labels[train_idx],
        epochs=args.epochs,
        fit_interval=cfg.fit_interval,
        label_rule=rule or cfg.label_rule,
    )
    w.threshold = cfg.threshold
    train_acc = _accuracy([records[i] for i in train_idx], labels[train_idx], w)
    test_acc = (
        _accuracy([records[i] for i in test_idx], labels[test_idx], w)
        if len(test_idx)
        else float("nan")
    )
    baseline = forest_baseline_accuracy(records, labels, seed=cfg.seed or 0)
    fit_err = fit_sigmoid_poly(w.fit_interval)[3]
    eng, ctx = _load_context(cfg, need_secret=False)
    em = encrypt_model(w, eng, ctx.public)
    model_path = cfg.path("model_file")
    enc_path = cfg.path("encrypted_model_file")
    w.save(model_path)
    with open(enc_path, "wb") as fh:
        fh.write(serialize_encrypted_model(em))
    _emit(
        args,
        {
            "n_records": len(records),
            "train_accuracy": round(train_acc, 4),
            "test_accuracy": round(test_acc, 4),
            "forest_baseline_accuracy": round(baseline, 4),
            "sigmoid_fit_max_error": round(fit_err, 6),
            "model_file": model_path,
            "encrypted_model_file": enc_path,
        },
        [
            f"Trained on {len(train_idx)} records ({len(test_idx)} held out).",
            f"Train accuracy: {train_acc:.4f}",
            f"Test accuracy: {test_acc:.4f}",
            f"Forest baseline accuracy: {baseline:.4f}",
            f"Sigmoid fit max error: {fit_err:.4f} on [-{w.fit_interval}, {w.fit_interval}]",
            f"Model written: {model_path}",
            f"Encrypted model written: {enc_path}",
        ],
    )
    return 0


def _prompt_record(args) -> RawRecord:
    values = {}
    for name, prompt in PROMPTS:
        given = getattr(args, name)
        if given is not None:
            values[name] = given
            continue
        raw = input(prompt).strip()
        values[name] = float(raw) if name in ("bmi", "charges") else int(raw)
    return RawRecord(**values)


def cmd_submit(args, cfg: Config) -> int:
    record = _prompt_record(args)
    eng, ctx = _load_context(cfg, need_secret=False)
    weights = ModelWeights.load(cfg.path("model_file"))
    led = Ledger(cfg.path("ledger_file"))
    receipt = workflow.client_submit(
        record,
        weights,
        eng,
        ctx.public,
        _load_key(cfg),
        cfg.path("exchange_dir"),
        led,
        claim_id=args.claim_id,
    )
    _emit(
        args,
        dataclasses.asdict(receipt),
        [
            "Encryption complete. Files saved.",
            f"Claim ID: {receipt.claim_id}",
            f"Data hash: {receipt.data_hash}",
            f"Tx hash: {receipt.tx_hash}",
            f"Request file: {receipt.request_path}",
        ],
    )
    return 0


def cmd_process(args, cfg: Config) -> int:
    eng, ctx = _load_context(cfg, need_secret=False)
    em = deserialize_encrypted_model(
        _read_bytes(cfg.path("encrypted_model_file"), "encrypted model")
    )
    led = Ledger(cfg.path("ledger_file"))
    receipts = workflow.server_process(
        eng, em, ctx.relin, ctx.rotations, _load_key(cfg), cfg.path("exchange_dir"), led
    )
    lines = []
    if not receipts:
        lines.append("No pending claims.")
    for r in receipts:
        lines.append("Computation complete. Encrypted result saved.")
        lines.append(f"Claim ID: {r.claim_id}")
        lines.append(f"Result hash: {r.result_hash}")
        lines.append(f"Tx hash: {r.tx_hash}")
    _emit(args, {"processed": [dataclasses.asdict(r) for r in receipts]}, lines)
    return 0


def cmd_retrieve(args, cfg: Config) -> int:
    eng, ctx = _load_context(cfg, need_secret=True)
    led = Ledger(cfg.path("ledger_file"))
    out = workflow.client_retrieve(
        args.claim_id,
        eng,
        ctx.secret,
        _load_key(cfg),
        cfg.path("exchange_dir"),
        led,
        threshold=cfg.threshold,
    )
    payload = {
        "claim_id": out.claim_id,
        "probability": out.probability,
        "verdict": out.verdict,
        "verification": out.verification.label,
    }
    lines = []
    if out.verification.valid:
        lines.append(f"Model output (probability): {out.probability:.4f}")
        lines.append(f"Claim {out.verdict}")
    lines.append(f"Blockchain Verification: {out.verification.label}")
    _emit(args, payload, lines)
    return 0 if out.verification.valid else 1


def cmd_ledger(args, cfg: Config) -> int:
    led = Ledger(cfg.path("ledger_file"))
    if args.ledger_cmd == "show":
        rows = led.dump()
        lines = [
            f"{r['index']:4d}  {r['op']:7s}  {r['claim_id'] or '-':34s}  tx={r['tx_hash']}"
            for r in rows
        ]
        _emit(args, {"blocks": rows}, lines)
        return 0
    v = led.verify_chain()
    _emit(
        args,
        {"valid": v.valid, "label": v.label, "blocks": len(led.blocks)},
        [f"Blockchain Verification: {v.label} ({len(led.blocks)} blocks)"],
    )
    return 0 if v.valid else 1


def cmd_bench(args, cfg: Config) -> int:
    eng, ctx = _load_context(cfg, need_secret=True)
    weights = ModelWeights.load(cfg.path("model_file"))
    em = deserialize_encrypted_model(
        _read_bytes(cfg.path("encrypted_model_file"), "encrypted model")
    )
    report = bench.run_benchmark(
        args.n, eng, ctx, weights, em, _load_key(cfg), seed=cfg.seed or 0
    )
    lines = [f"Benchmark over {report.n_records} record(s):"]
    lines += [f"  {name:40s} {value}" for name, value in report.rows()]
    lines.append(f"  parameters: {report.parameters}")
    lines.append(f"  hardware: {report.hardware}")
    _emit(args, dataclasses.asdict(report), lines)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="claimpipe",
        description="Privacy-preserving insurance claim pipeline with a verifiable ledger.",
    )
    p.add_argument("--config", help="path to a JSON config file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--json", action="store_true", help="emit one JSON object instead of text")
    sub = p.add_subparsers(dest="command", required=True)

    k = sub.add_parser("keygen", help="generate HE contexts and the symmetric key")
    k.add_argument("--force", action="store_true", help="overwrite existing key files")
    k.set_defaults(fn=cmd_keygen)

    t = sub.add_parser("train", help="train the model and encrypt its weights")
    t.add_argument("dataset", help="CSV of claim records (label column optional)")
    t.add_argument("--epochs", type=int, default=500)
    t.set_defaults(fn=cmd_train)

    s = sub.add_parser("submit", help="encrypt a claim record and log it")
    for name, _ in PROMPTS:
        kind = float if name in ("bmi", "charges") else int
        s.add_argument(f"--{name}", type=kind, help=f"record field {name}")
    s.add_argument("--claim-id", help="reuse a claim id instead of minting one")
    s.set_defaults(fn=cmd_submit)

    pr = sub.add_parser("process", help="run encrypted inference on pending claims")
    pr.set_defaults(fn=cmd_process)

    r = sub.add_parser("retrieve", help="verify and decrypt a claim result")
    r.add_argument("claim_id")
    r.set_defaults(fn=cmd_retrieve)

    led = sub.add_parser("ledger", help="inspect or verify the ledger")
    led.add_argument("ledger_cmd", choices=["show", "verify"])
    led.set_defaults(fn=cmd_ledger)

    b = sub.add_parser("bench", help="measure lifecycle timings and sizes")
    b.add_argument("-n", type=int, default=20, help="number of records")
    b.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        return args.fn(args, cfg)
    except CorruptLedger as e:
        print(f"Blockchain Verification: Invalid (ChainCorrupt: block {e.index})", file=sys.stderr)
        return 1
    except (ConfigError, InvalidArgument, ModelError, FileExistsError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (HeError, EnvelopeError, LedgerError, WorkflowError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
