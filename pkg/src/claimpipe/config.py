"""Run configuration: HE parameter overrides, model knobs, artifact paths.

Loaded from a JSON file (``--config`` flag or the CLAIMPIPE_CONFIG
environment variable); every field has a working default so a missing
file just means "use the stock setup". Relative paths resolve under
``work_dir``.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

from .errors import ConfigError, InvalidParams
from .he.params import HeParams

ENV_VAR = "CLAIMPIPE_CONFIG"


@dataclass
class Config:
    ring_dimension: int = 8192
    base_prime_bits: int = 60
    scale_prime_bits: int = 40
    scale_primes: int = 4
    scale_bits: int = 40
    fit_interval: float = 5.0
    label_rule: str = ""
    threshold: float = 0.5
    seed: int | None = None
    work_dir: str = "claimpipe-data"
    private_context: str = "private_context.bin"
    public_context: str = "public_context.bin"
    aes_key: str = "aes.key"
    ledger_file: str = "ledger.bin"
    exchange_dir: str = "exchange"
    model_file: str = "model.json"
    encrypted_model_file: str = "model.enc"

    def path(self, name: str) -> str:
        value = getattr(self, name)
        if os.path.isabs(value):
            return value
        return os.path.join(self.work_dir, value)

    def he_params(self) -> HeParams:
        try:
            return HeParams.create(
                ring_dimension=self.ring_dimension,
                base_prime_bits=self.base_prime_bits,
                scale_prime_bits=self.scale_prime_bits,
                scale_primes=self.scale_primes,
                scale_bits=self.scale_bits,
            )
        except InvalidParams as e:
            raise ConfigError(f"invalid HE parameters: {e}") from e


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(Config)}


def _coerce(name: str, value):
    default = getattr(Config(), name)
    if name == "seed":
        if value is None or isinstance(value, int) and not isinstance(value, bool):
            return value
        raise ConfigError(f"seed must be an integer or null, got {value!r}")
    if isinstance(default, bool) or isinstance(value, bool):
        raise ConfigError(f"{name} has the wrong type: {value!r}")
    if isinstance(default, int):
        if isinstance(value, int):
            return value
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if isinstance(default, float):
        if isinstance(value, (int, float)):
            return float(value)
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if isinstance(default, str):
        if isinstance(value, str):
            return value
        raise ConfigError(f"{name} must be a string, got {value!r}")
    raise ConfigError(f"unsupported field {name}")


def load_config(path: str | None = None) -> Config:
    """Config from an explicit path, the env var, or pure defaults."""
    if path is None:
        path = os.environ.get(ENV_VAR) or None
    if path is None:
        return Config()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    kwargs = {}
    for name, value in raw.items():
        if name not in _FIELD_TYPES:
            raise ConfigError(f"unknown config field: {name}")
        kwargs[name] = _coerce(name, value)
    cfg = Config(**kwargs)
    cfg.he_params()
    return cfg


def save_config(cfg: Config, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataclasses.asdict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
