"""Claim decision model.

Plaintext side: z-score standardization, full-batch gradient-descent
logistic training, and a degree-3 least-squares sigmoid approximation.
Encrypted side: the same linear score plus polynomial evaluated
slotwise on ciphertexts; nothing in that path accepts secret key
material.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .dataset import FEATURE_NAMES, RawRecord, feature_matrix
from .errors import (
    DegenerateColumn,
    EmptyDataset,
    InvalidInterval,
    NonBinaryLabels,
    OutOfRange,
    SchemaViolation,
    SerializationError,
)
from .he.engine import Ciphertext, HeEngine, KeySwitchKey, Plaintext, PublicKey
from .he.serial import (
    ByteReader,
    ByteWriter,
    deserialize_ciphertext,
    deserialize_plaintext,
    serialize_ciphertext,
    serialize_plaintext,
)

N_FEATURES = len(FEATURE_NAMES)

MODEL_MAGIC = b"HEM1"
MODEL_VERSION = 1
MODE_CT = 1  # weights encrypted
MODE_PT = 2  # weights only encoded


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


@dataclass
class NormStats:
    mean: np.ndarray  # (7,)
    std: np.ndarray  # (7,)

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.std


def fit_stats(records: list[RawRecord]) -> NormStats:
    if len(records) < 2:
        raise EmptyDataset("need at least two records to fit statistics")
    x = feature_matrix(records)
    mean = x.mean(axis=0)
    std = x.std(axis=0, ddof=1)
    for i, s in enumerate(std):
        if s == 0.0:
            raise DegenerateColumn(f"feature {FEATURE_NAMES[i]} is constant")
    return NormStats(mean, std)


def preprocess(record: RawRecord, stats: NormStats) -> np.ndarray:
    record.validate()
    return stats.apply(record.features())


# ----- logistic training ----------------------------------------------------


def logistic_loss(beta, intercept, x, y) -> float:
    z = x @ beta + intercept
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def logistic_gradient(beta, intercept, x, y):
    r = sigmoid(x @ beta + intercept) - y
    return x.T @ r / len(y), float(np.mean(r))


def fit_logistic(x, y, learning_rate: float = 0.1, epochs: int = 500):
    """Full-batch gradient descent from zero initialization."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size == 0 or len(y) == 0:
        raise EmptyDataset("no training rows")
    if not np.isin(y, (0.0, 1.0)).all():
        raise NonBinaryLabels("labels must be 0 or 1")
    beta = np.zeros(x.shape[1])
    intercept = 0.0
    for _ in range(epochs):
        g_beta, g_b = logistic_gradient(beta, intercept, x, y)
        beta = beta - learning_rate * g_beta
        intercept -= learning_rate * g_b
    return beta, intercept


def fit_sigmoid_poly(interval: float, grid_points: int = 2001):
    """Least-squares sigmoid fit on [-B, B] restricted to {1, x, x^3}.

    Returns (c0, c1, c3, max_err) with max_err measured on the grid.
    """
    b = float(interval)
    if not (math.isfinite(b) and b > 0):
        raise InvalidInterval(f"interval bound must be positive and finite, got {interval}")
    if grid_points < 4:
        raise InvalidInterval("grid must have at least 4 points")
    x = np.linspace(-b, b, grid_points)
    y = sigmoid(x)
    basis = np.stack([np.ones_like(x), x, x**3], axis=1)
    coeffs, *_ = np.linalg.lstsq(basis, y, rcond=None)
    max_err = float(np.max(np.abs(basis @ coeffs - y)))
    return float(coeffs[0]), float(coeffs[1]), float(coeffs[2]), max_err


@dataclass
class ModelWeights:
    beta: np.ndarray  # (7,)
    intercept: float
    stats: NormStats
    sigmoid_coeffs: tuple[float, float, float]  # c0, c1, c3
    fit_interval: float
    threshold: float = 0.5
    label_rule: str = ""
    score_tail_fraction: float = 0.0  # training |z| > fit_interval - 1

    def save(self, path) -> None:
        doc = {
            "version": MODEL_VERSION,
            "beta": self.beta.tolist(),
            "intercept": self.intercept,
            "mean": self.stats.mean.tolist(),
            "std": self.stats.std.tolist(),
            "sigmoid_coeffs": list(self.sigmoid_coeffs),
            "fit_interval": self.fit_interval,
            "threshold": self.threshold,
            "label_rule": self.label_rule,
            "score_tail_fraction": self.score_tail_fraction,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ModelWeights":
        try:
            with open(path) as fh:
                doc = json.load(fh)
            if doc["version"] != MODEL_VERSION:
                raise SchemaViolation(f"unsupported model version {doc['version']}")
            beta = np.array(doc["beta"], dtype=np.float64)
            mean = np.array(doc["mean"], dtype=np.float64)
            std = np.array(doc["std"], dtype=np.float64)
            c = doc["sigmoid_coeffs"]
            if beta.shape != (N_FEATURES,) or mean.shape != (N_FEATURES,) or std.shape != (N_FEATURES,):
                raise SchemaViolation("model file has wrong feature count")
            return cls(
                beta=beta,
                intercept=float(doc["intercept"]),
                stats=NormStats(mean, std),
                sigmoid_coeffs=(float(c[0]), float(c[1]), float(c[2])),
                fit_interval=float(doc["fit_interval"]),
                threshold=float(doc["threshold"]),
                label_rule=str(doc.get("label_rule", "")),
                score_tail_fraction=float(doc.get("score_tail_fraction", 0.0)),
            )
        except (OSError, ValueError, KeyError, TypeError) as e:
            raise SchemaViolation(f"unreadable model file {path}: {e}") from e


def train_logistic(
    records: list[RawRecord],
    labels,
    learning_rate: float = 0.1,
    epochs: int = 500,
    fit_interval: float = 5.0,
    label_rule: str = "",
) -> ModelWeights:
    if not records:
        raise EmptyDataset("no training records")
    y = np.asarray(labels, dtype=np.float64)
    if len(y) != len(records):
        raise NonBinaryLabels(f"{len(y)} labels for {len(records)} records")
    stats = fit_stats(records)
    x = stats.apply(feature_matrix(records))
    beta, intercept = fit_logistic(x, y, learning_rate, epochs)
    c0, c1, c3, _ = fit_sigmoid_poly(fit_interval)
    z = x @ beta + intercept
    tail = float(np.mean(np.abs(z) > fit_interval - 1))
    return ModelWeights(
        beta=beta,
        intercept=float(intercept),
        stats=stats,
        sigmoid_coeffs=(c0, c1, c3),
        fit_interval=float(fit_interval),
        label_rule=label_rule,
        score_tail_fraction=tail,
    )


# ----- plaintext prediction ---------------------------------------------------


@dataclass
class ClaimDecision:
    probability: float
    verdict: str  # "Approved" | "Denied"


def predict_plain(features: np.ndarray, w: ModelWeights) -> float:
    return float(sigmoid(float(np.dot(features, w.beta)) + w.intercept))


def predict_replica(features: np.ndarray, w: ModelWeights) -> float:
    """The plaintext twin of the encrypted circuit: fitted poly at z."""
    z = float(np.dot(features, w.beta)) + w.intercept
    c0, c1, c3 = w.sigmoid_coeffs
    return c0 + c1 * z + c3 * z**3


def decide(probability: float, threshold: float = 0.5) -> ClaimDecision:
    p = float(probability)
    if not (math.isfinite(p) and 0.0 <= p <= 1.0):
        raise OutOfRange(f"probability {probability} outside [0, 1]")
    return ClaimDecision(p, "Approved" if p > threshold else "Denied")


# ----- encrypted prediction ---------------------------------------------------


@dataclass
class EncryptedModel:
    mode: int  # MODE_CT or MODE_PT
    beta_ct: Ciphertext | None
    beta_pt: Plaintext | None
    intercept_ct: Ciphertext | None
    intercept_pt: Plaintext | None
    sigmoid_coeffs: tuple[float, float, float]
    fit_interval: float

    @property
    def beta(self):
        return self.beta_ct if self.mode == MODE_CT else self.beta_pt


def _intercept_slot(eng: HeEngine):
    """Level and scale of the score after the dot product's rescale."""
    level = eng.params.max_level
    scale = eng.params.scale * eng.params.scale / float(eng.params.modulus_chain[level])
    return level - 1, scale


def encrypt_model(
    w: ModelWeights, eng: HeEngine, public: PublicKey, mode: str = "ct-ct"
) -> EncryptedModel:
    if mode not in ("ct-ct", "ct-pt"):
        raise SchemaViolation(f"unknown weight mode {mode!r}")
    packed = np.zeros(eng.slots)
    packed[:N_FEATURES] = w.beta
    beta_pt = eng.encode(packed)
    level, scale = _intercept_slot(eng)
    icpt_pt = eng.encode_const(w.intercept, level, scale)
    if mode == "ct-ct":
        return EncryptedModel(
            mode=MODE_CT,
            beta_ct=eng.encrypt(beta_pt, public),
            beta_pt=None,
            intercept_ct=eng.encrypt(icpt_pt, public),
            intercept_pt=None,
            sigmoid_coeffs=w.sigmoid_coeffs,
            fit_interval=w.fit_interval,
        )
    return EncryptedModel(
        mode=MODE_PT,
        beta_ct=None,
        beta_pt=beta_pt,
        intercept_ct=None,
        intercept_pt=icpt_pt,
        sigmoid_coeffs=w.sigmoid_coeffs,
        fit_interval=w.fit_interval,
    )


def predict_encrypted(
    eng: HeEngine,
    enc_x: Ciphertext,
    em: EncryptedModel,
    relin: KeySwitchKey,
    rotations: dict[int, KeySwitchKey],
) -> Ciphertext:
    """Slot 0 of the result decrypts to c0 + c1*z + c3*z^3, z = beta.x + b."""
    acc = eng.inner_product(enc_x, em.beta, N_FEATURES, relin, rotations)
    if em.mode == MODE_CT:
        acc = eng.add(acc, em.intercept_ct)
    else:
        acc = eng.add_plain(acc, em.intercept_pt)
    return eng.eval_poly_odd(acc, em.sigmoid_coeffs, relin)


def serialize_encrypted_model(em: EncryptedModel) -> bytes:
    w = ByteWriter()
    w.raw(MODEL_MAGIC)
    w.u16(MODEL_VERSION)
    w.u8(em.mode)
    for c in em.sigmoid_coeffs:
        w.f64(c)
    w.f64(em.fit_interval)
    if em.mode == MODE_CT:
        w.blob(serialize_ciphertext(em.beta_ct))
        w.blob(serialize_ciphertext(em.intercept_ct))
    else:
        w.blob(serialize_plaintext(em.beta_pt))
        w.blob(serialize_plaintext(em.intercept_pt))
    return w.getvalue()


def deserialize_encrypted_model(data: bytes) -> EncryptedModel:
    r = ByteReader(data)
    if r.raw(4) != MODEL_MAGIC:
        raise SerializationError("bad model magic")
    v = r.u16()
    if v != MODEL_VERSION:
        raise SerializationError(f"unsupported model version {v}")
    mode = r.u8()
    if mode not in (MODE_CT, MODE_PT):
        raise SerializationError(f"unknown weight mode {mode}")
    coeffs = (r.f64(), r.f64(), r.f64())
    interval = r.f64()
    beta_blob = r.blob()
    icpt_blob = r.blob()
    r.done()
    if mode == MODE_CT:
        return EncryptedModel(
            mode, deserialize_ciphertext(beta_blob), None,
            deserialize_ciphertext(icpt_blob), None, coeffs, interval,
        )
    return EncryptedModel(
        mode, None, deserialize_plaintext(beta_blob),
        None, deserialize_plaintext(icpt_blob), coeffs, interval,
    )


# ----- plaintext-only baseline -------------------------------------------------


def forest_baseline_accuracy(records: list[RawRecord], labels, seed: int = 0) -> float:
    """Held-out accuracy of a random forest; comparison report only."""
    from sklearn.ensemble import RandomForestClassifier
    from sklearn.model_selection import train_test_split

    x = feature_matrix(records)
    y = np.asarray(labels, dtype=np.int64)
    x_tr, x_te, y_tr, y_te = train_test_split(x, y, test_size=0.25, random_state=seed)
    clf = RandomForestClassifier(n_estimators=100, random_state=seed)
    clf.fit(x_tr, y_tr)
    return float(clf.score(x_te, y_te))
