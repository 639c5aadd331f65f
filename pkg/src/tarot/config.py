"""Run configuration: defaults, config file, environment, CLI flags.

Precedence is flags > environment > file > defaults. The file format is
flat ``key = value`` lines (booleans true/false or on/off, # comments).
Resolved values are logged into every trace header together with the
config digest.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields
from typing import Optional

from tarot.errors import ConfigError

ENV_CONFIG = "TAROT_CONFIG"
ENV_GATEWAY = "TAROT_GATEWAY_URL"
ENV_OUT_DIR = "TAROT_OUT_DIR"


@dataclass
class PipelineConfig:
    tau: float = 0.80
    s_neg: float = 0.30
    anchors: int = 5
    min_region_frac: float = 0.001
    rpo: bool = True
    text_aug: bool = True
    bbox_aug: bool = True
    ips: bool = True
    opm: bool = True
    max_rounds: int = 2
    shift_dist_frac: float = 0.05
    backend_mode: str = "scripted"
    scenario: Optional[str] = None
    gateway: Optional[str] = None
    timeout_s: float = 120.0
    retries: int = 2
    inflight_cap: int = 4
    workers: int = 4
    strict: bool = False

    def validate(self) -> "PipelineConfig":
        if not (0.0 <= self.tau <= 1.0):
            raise ConfigError(f"tau must be in [0, 1], got {self.tau}")
        if not (0.0 <= self.s_neg <= 1.0):
            raise ConfigError(f"s_neg must be in [0, 1], got {self.s_neg}")
        if self.anchors < 1:
            raise ConfigError(f"anchors must be >= 1, got {self.anchors}")
        if not (0.0 < self.min_region_frac < 1.0):
            raise ConfigError(f"min_region_frac must be in (0, 1), got {self.min_region_frac}")
        if self.max_rounds < 0:
            raise ConfigError(f"max_rounds must be >= 0, got {self.max_rounds}")
        if self.backend_mode not in ("scripted", "remote"):
            raise ConfigError(f"backend_mode must be scripted or remote, got {self.backend_mode!r}")
        if self.backend_mode == "remote" and not self.gateway:
            raise ConfigError("backend_mode=remote requires a gateway URL")
        if self.workers < 1 or self.inflight_cap < 1:
            raise ConfigError("workers and inflight_cap must be >= 1")
        if self.retries < 0:
            raise ConfigError(f"retries must be >= 0, got {self.retries}")
        if self.timeout_s <= 0:
            raise ConfigError(f"timeout_s must be positive, got {self.timeout_s}")
        return self

    def as_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        text = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:12]


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}
_BOOL_WORDS = {"true": True, "on": True, "yes": True, "1": True,
               "false": False, "off": False, "no": False, "0": False}


def _coerce(key: str, raw, source: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r} (from {source})")
    if isinstance(raw, str):
        raw = raw.strip().strip('"').strip("'")
    current = getattr(PipelineConfig(), key)
    if isinstance(current, bool):
        if isinstance(raw, bool):
            return raw
        word = str(raw).lower()
        if word not in _BOOL_WORDS:
            raise ConfigError(f"{key} expects a boolean, got {raw!r} (from {source})")
        return _BOOL_WORDS[word]
    if isinstance(current, int) and not isinstance(current, bool):
        try:
            return int(str(raw))
        except ValueError as exc:
            raise ConfigError(f"{key} expects an integer, got {raw!r} (from {source})") from exc
    if isinstance(current, float):
        try:
            return float(str(raw))
        except ValueError as exc:
            raise ConfigError(f"{key} expects a number, got {raw!r} (from {source})") from exc
    return None if raw in (None, "") else str(raw)


def parse_config_file(path) -> dict:
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, raw = line.split("=", 1)
                key = key.strip().replace("-", "_")
                values[key] = _coerce(key, raw, f"{path}:{lineno}")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return values


def resolve_config(flags: Optional[dict] = None, env: Optional[dict] = None,
                   config_path=None) -> PipelineConfig:
    """Merge defaults, file, environment, and flags into a validated config."""
    env = os.environ if env is None else env
    flags = dict(flags or {})

    path = config_path or flags.pop("config", None) or env.get(ENV_CONFIG)
    merged = {}
    if path:
        merged.update(parse_config_file(path))
    if env.get(ENV_GATEWAY):
        merged["gateway"] = _coerce("gateway", env[ENV_GATEWAY], ENV_GATEWAY)
    for key, value in flags.items():
        key = key.replace("-", "_")
        if value is None:
            continue
        merged[key] = _coerce(key, value, "flag")
    cfg = PipelineConfig(**{k: v for k, v in merged.items()})
    return cfg.validate()


def resolve_out_dir(flag_value=None, env: Optional[dict] = None):
    env = os.environ if env is None else env
    return flag_value or env.get(ENV_OUT_DIR) or None
