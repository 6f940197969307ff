"""Run configuration: flat ``key = value`` files with ``#`` comments.

Defaults reproduce the published hyperparameters (d=64, d'=256, L=10,
K=20, lr=1e-3, batch 256, weight decay 1e-4, dropout 0.2). Unknown keys
are an error; command-line ``key=value`` overrides win over the file.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

from .time_sequence import TimeFusionMode


class ConfigError(ValueError):
    """Invalid configuration key or value."""


VALID_LAYERS = frozenset("SEN")


@dataclass
class RunConfig:
    d: int = 64
    d_prime: int = 256
    L: int = 10
    K: int = 20
    lr: float = 1e-3
    batch_size: int = 256
    weight_decay: float = 1e-4
    dropout: float = 0.2
    epochs: int = 30
    seed: int = 0
    time_mode: str = "both"  # none | relative | absolute | both
    layers: str = "S+E+N"
    heads: int = 1
    dns_enabled: bool = True
    dns_pool_size: int = 128
    dns_k: int = 4
    min_year: int = 1970
    max_year: int = 2100
    min_interactions: int = 15
    n_eval_negatives: int = 99
    interactions: str = ""
    news: str = ""
    out_dir: str = "runs"

    # config-file key -> field (dots are not valid identifiers)
    _KEY_ALIASES = {
        "dns.enabled": "dns_enabled",
        "dns.pool_size": "dns_pool_size",
        "dns.k": "dns_k",
    }

    def fusion_mode(self) -> TimeFusionMode:
        try:
            return TimeFusionMode(self.time_mode)
        except ValueError:
            raise ConfigError(f"invalid time_mode {self.time_mode!r}") from None

    def layer_set(self) -> frozenset[str]:
        parts = [p for p in self.layers.replace(" ", "").split("+") if p]
        bad = [p for p in parts if p not in VALID_LAYERS]
        if bad or not parts:
            raise ConfigError(f"invalid layers spec {self.layers!r}")
        return frozenset(parts)

    def validate(self) -> "RunConfig":
        self.fusion_mode()
        self.layer_set()
        if self.heads not in (1, 2, 4, 8):
            raise ConfigError(f"heads must be one of 1/2/4/8: {self.heads}")
        if self.d % self.heads:
            raise ConfigError(f"d={self.d} not divisible by heads={self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1): {self.dropout}")
        for name in ("d", "d_prime", "L", "K", "batch_size", "dns_pool_size"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.epochs < 0 or self.dns_k < 0:
            raise ConfigError("epochs and dns.k must be >= 0")
        if self.min_year > self.max_year:
            raise ConfigError("min_year must be <= max_year")
        return self


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, raw: str):
    ftype = _FIELDS[name].type
    raw = raw.strip()
    if ftype == "bool":
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {ftype}") from None
    return raw


def apply_setting(cfg: RunConfig, key: str, value: str) -> None:
    name = RunConfig._KEY_ALIASES.get(key, key)
    if name not in _FIELDS or name.startswith("_"):
        raise ConfigError(f"unknown config key {key!r}")
    setattr(cfg, name, _coerce(name, value))


def parse_config_text(text: str, cfg: RunConfig | None = None) -> RunConfig:
    cfg = cfg or RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        apply_setting(cfg, key, value)
    return cfg


def load_config(path: str | None, overrides: list[str] = ()) -> RunConfig:
    """File (optional) + key=value overrides + DHAN_SEED env override."""
    cfg = RunConfig()
    if path:
        with open(path, encoding="utf-8") as fh:
            parse_config_text(fh.read(), cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value: {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        apply_setting(cfg, key, value)
    env_seed = os.environ.get("DHAN_SEED")
    if env_seed is not None:
        try:
            cfg.seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"DHAN_SEED must be an integer: {env_seed!r}") from None
    return cfg.validate()


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_from_dict(d: dict) -> RunConfig:
    cfg = RunConfig(**d)
    return cfg.validate()
