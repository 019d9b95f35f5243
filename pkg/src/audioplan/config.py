"""Run configuration. Precedence: config file < command-line flags < environment."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .gateway.remote import RemoteConfig

BACKENDS = ("rule", "remote")
ENV_PREFIX = "AUDIOPLAN_"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    corpus_dir: Path | None = None
    backend: str = "rule"
    remote: RemoteConfig = field(default_factory=RemoteConfig)
    tau: float | None = None
    seed: int = 0
    out_dir: Path | None = None
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend!r}; expected one of {BACKENDS}")
        if self.tau is not None and (not math.isfinite(self.tau) or self.tau <= 0):
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.remote.retries < 1 or self.remote.max_concurrency < 1 or self.remote.timeout <= 0:
            raise ConfigError("remote retries, max_concurrency and timeout must be positive")


_CASTS = {"tau": float, "seed": int, "jobs": int, "corpus_dir": Path, "out_dir": Path, "backend": str}
_REMOTE_CASTS = {"endpoint": str, "model": str, "api_key": str, "timeout": float, "retries": int, "max_concurrency": int}


def _bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def _apply(cfg: dict[str, Any], remote: dict[str, Any], values: Mapping[str, Any], where: str) -> None:
    for key, value in values.items():
        if value is None:
            continue
        try:
            if key in _CASTS:
                cfg[key] = _CASTS[key](value)
            elif key in _REMOTE_CASTS:
                remote[key] = _REMOTE_CASTS[key](value)
            elif key == "trace":
                remote["trace"] = _bool(value)
            elif key == "remote" and isinstance(value, dict):
                _apply(cfg, remote, value, where)
            else:
                raise ConfigError(f"{where}: unknown setting {key!r}")
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{where}: bad value for {key!r}: {value!r}") from None


def load_config(
    path: str | Path | None = None,
    flags: Mapping[str, Any] | None = None,
    environ: Mapping[str, str] | None = None,
) -> RunConfig:
    cfg: dict[str, Any] = {}
    remote: dict[str, Any] = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc.msg} (line {exc.lineno})") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        _apply(cfg, remote, doc, str(path))
    _apply(cfg, remote, dict(flags or {}), "flags")
    env = os.environ if environ is None else environ
    from_env = {
        key[len(ENV_PREFIX):].lower(): value for key, value in env.items() if key.startswith(ENV_PREFIX)
    }
    _apply(cfg, remote, from_env, "environment")
    return RunConfig(remote=replace(RemoteConfig(), **remote), **cfg)
