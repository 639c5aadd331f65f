"""Gateway configuration.

Each of the three roles is either "echo" (serve scripted scenarios, no
model), "none" (endpoints answer 503), or a model identifier. Model
identifiers are accepted so a deployment config parses, but this build
ships no model runtimes; such roles report not-loaded and their endpoints
answer 503 until a runtime is wired in.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from tarot_gateway.templates import ConfigurationError, load_templates

ROLE_NAMES = ("reasoner", "segmenter", "features")


@dataclass(frozen=True)
class GatewayConfig:
    host: str = "127.0.0.1"
    port: int = 8787
    reasoner: str = "echo"
    segmenter: str = "echo"
    features: str = "echo"
    scenarios: Optional[str] = None
    templates: Optional[str] = None
    max_inflight: int = 8

    def role(self, name: str) -> str:
        return getattr(self, name)

    def echo_roles(self) -> tuple:
        return tuple(name for name in ROLE_NAMES if self.role(name) == "echo")

    def role_status(self, name: str) -> str:
        value = self.role(name)
        if value == "echo":
            return "echo"
        if value == "none":
            return "disabled"
        return f"not_loaded:{value}"

    def mode(self) -> str:
        if all(self.role(name) == "echo" for name in ROLE_NAMES):
            return "echo"
        return "partial"


def validate_config(cfg: GatewayConfig) -> GatewayConfig:
    """Fail fast on a config that cannot back a server."""
    if not (1 <= cfg.port <= 65535) and cfg.port != 0:
        raise ConfigurationError(f"port {cfg.port} out of range")
    if cfg.max_inflight < 1:
        raise ConfigurationError(f"max_inflight must be >= 1, got {cfg.max_inflight}")
    if cfg.echo_roles():
        if not cfg.scenarios:
            raise ConfigurationError(
                "echo roles need --scenarios pointing at a scenario or suite"
            )
        root = Path(cfg.scenarios)
        if not root.exists():
            raise ConfigurationError(f"scenario path {root} does not exist")
    load_templates(cfg.templates)
    return cfg


def config_from_flags(flags: dict) -> GatewayConfig:
    known = {f.name for f in fields(GatewayConfig)}
    picked = {k: v for k, v in flags.items() if k in known and v is not None}
    return validate_config(GatewayConfig(**picked))
