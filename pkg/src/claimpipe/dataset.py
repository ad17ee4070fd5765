"""Claim records: schema validation, CSV ingestion, labels, synthesis.

A record carries the seven numeric fields used for scoring (age, sex,
bmi, children, smoker, region, charges) plus claim/policy identifiers
that never enter the model.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDataset, SchemaViolation

FEATURE_NAMES = ("age", "sex", "bmi", "children", "smoker", "region", "charges")
LABEL_COLUMN = "label"


@dataclass
class RawRecord:
    age: float
    sex: int
    bmi: float
    children: int
    smoker: int
    region: int
    charges: float
    claim_id: str = ""
    policy_id: str = ""

    def validate(self) -> "RawRecord":
        if self.sex not in (0, 1):
            raise SchemaViolation(f"sex must be 0 or 1, got {self.sex}")
        if self.smoker not in (0, 1):
            raise SchemaViolation(f"smoker must be 0 or 1, got {self.smoker}")
        if self.region not in (0, 1, 2, 3):
            raise SchemaViolation(f"region must be in 0..3, got {self.region}")
        for name in ("age", "bmi", "charges"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)) or v < 0:
                raise SchemaViolation(f"{name} must be finite and non-negative, got {v}")
        if not (isinstance(self.children, int) and self.children >= 0):
            raise SchemaViolation(f"children must be a count >= 0, got {self.children}")
        return self

    def features(self) -> np.ndarray:
        return np.array(
            [getattr(self, name) for name in FEATURE_NAMES], dtype=np.float64
        )


def feature_matrix(records: list[RawRecord]) -> np.ndarray:
    if not records:
        raise EmptyDataset("no records")
    return np.stack([r.features() for r in records])


def _parse_row(row: dict, line: int) -> RawRecord:
    try:
        rec = RawRecord(
            age=float(row["age"]),
            sex=int(row["sex"]),
            bmi=float(row["bmi"]),
            children=int(row["children"]),
            smoker=int(row["smoker"]),
            region=int(row["region"]),
            charges=float(row["charges"]),
            claim_id=row.get("claim_id", "") or "",
            policy_id=row.get("policy_id", "") or "",
        )
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaViolation(f"line {line}: unparseable row ({e})") from e
    try:
        return rec.validate()
    except SchemaViolation as e:
        raise SchemaViolation(f"line {line}: {e}") from e


def load_csv(path) -> tuple[list[RawRecord], np.ndarray | None]:
    """Read `age,sex,bmi,children,smoker,region,charges[,label]` rows.

    Returns (records, labels); labels is None when the column is absent.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if header is None:
            raise SchemaViolation(f"{path}: empty file")
        missing = [c for c in FEATURE_NAMES if c not in header]
        if missing:
            raise SchemaViolation(f"{path}: header lacks columns {missing}")
        has_label = LABEL_COLUMN in header
        records, labels = [], []
        for line, row in enumerate(reader, start=2):
            records.append(_parse_row(row, line))
            if has_label:
                raw = (row.get(LABEL_COLUMN) or "").strip()
                if raw not in ("0", "1"):
                    raise SchemaViolation(f"line {line}: label must be 0 or 1, got {raw!r}")
                labels.append(int(raw))
    if not records:
        raise SchemaViolation(f"{path}: no data rows")
    return records, (np.array(labels, dtype=np.int64) if has_label else None)


def write_csv(path, records: list[RawRecord], labels=None) -> None:
    cols = list(FEATURE_NAMES) + (["label"] if labels is not None else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for i, r in enumerate(records):
            row = [r.age, r.sex, r.bmi, r.children, r.smoker, r.region, r.charges]
            if labels is not None:
                row.append(int(labels[i]))
            w.writerow(row)


def derive_labels(records: list[RawRecord], percentile: float = 75.0) -> np.ndarray:
    """1 = approve: charges at or below the given percentile of this set."""
    if not records:
        raise EmptyDataset("no records to derive labels from")
    charges = np.array([r.charges for r in records])
    cap = float(np.percentile(charges, percentile))
    return (charges <= cap).astype(np.int64)


def synthesize(n: int, seed: int = 0) -> list[RawRecord]:
    """Plausible claims: charges grow with age, bmi, children and smoking."""
    if n < 1:
        raise EmptyDataset("need at least one record")
    rng = np.random.default_rng(seed)
    age = rng.integers(18, 65, n)
    sex = rng.integers(0, 2, n)
    bmi = np.clip(rng.normal(30.0, 6.0, n), 16.0, 55.0)
    children = np.minimum(rng.poisson(1.1, n), 5)
    smoker = (rng.random(n) < 0.2).astype(int)
    region = rng.integers(0, 4, n)
    charges = (
        1200.0
        + 230.0 * (age - 18)
        + 320.0 * np.maximum(bmi - 21.0, 0.0)
        + 480.0 * children
        + 22000.0 * smoker
        + rng.normal(0.0, 1800.0, n)
    )
    charges = np.round(np.maximum(charges, 50.0), 2)
    return [
        RawRecord(
            age=float(age[i]),
            sex=int(sex[i]),
            bmi=float(np.round(bmi[i], 2)),
            children=int(children[i]),
            smoker=int(smoker[i]),
            region=int(region[i]),
            charges=float(charges[i]),
        ).validate()
        for i in range(n)
    ]
