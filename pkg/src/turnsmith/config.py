"""Run configuration: flags > environment > config file > defaults.

The config file is a YAML/JSON mapping whose keys are the RunConfig field
names. Environment variables use the ``TURNSMITH_`` prefix with the field
name upper-cased (e.g. ``TURNSMITH_BASE_URL``). The API key itself is never
stored in config; only the name of the environment variable that holds it is
(default ``TURNSMITH_API_KEY``).

Validation runs before anything touches the network.
"""

from __future__ import annotations

import dataclasses
import datetime as _dt
import json
import os
from dataclasses import dataclass
from pathlib import Path

import yaml

from .backends import (
    DEFAULT_MAX_ATTEMPTS,
    DEFAULT_MAX_IN_FLIGHT,
    HttpChatBackend,
    HttpEmbeddingBackend,
    JUDGE_TEMPERATURE,
    MockBackend,
    SYNTHESIS_TEMPERATURE,
)
from .errors import ConfigError
from .hashing import sha256_hex

ENV_PREFIX = "TURNSMITH_"
DEFAULT_API_KEY_ENV = "TURNSMITH_API_KEY"

BACKEND_KINDS = ("mock", "openai")


@dataclass
class RunConfig:
    backend: str = "mock"
    base_url: str = ""
    chat_model: str = ""
    embed_model: str = ""
    judge_model: str = ""
    api_key_env: str = DEFAULT_API_KEY_ENV
    taxonomy: str = ""
    template_dir: str = ""
    temperature: float = SYNTHESIS_TEMPERATURE
    judge_temperature: float = JUDGE_TEMPERATURE
    max_tokens: int | None = None
    top_p: float | None = None
    seed: int = 0
    timeout: float = 60.0
    max_attempts: int = DEFAULT_MAX_ATTEMPTS
    max_in_flight: int = DEFAULT_MAX_IN_FLIGHT
    workers: int = 1
    min_turns: int = 6
    max_turns: int = 8
    repair_budget: int = 3
    failure_threshold: float = 0.2
    out: str = "out"

    def validate(self) -> None:
        if self.backend not in BACKEND_KINDS:
            raise ConfigError(f"backend must be one of {BACKEND_KINDS}, got {self.backend!r}")
        if self.backend != "mock" and not self.base_url:
            raise ConfigError("a live backend needs --base-url (or TURNSMITH_BASE_URL)")
        if self.taxonomy and not Path(self.taxonomy).exists():
            raise ConfigError(f"taxonomy file not found: {self.taxonomy}")
        if self.template_dir and not Path(self.template_dir).is_dir():
            raise ConfigError(f"template directory not found: {self.template_dir}")
        if not 1 <= self.min_turns <= self.max_turns:
            raise ConfigError(f"turn bounds invalid: min {self.min_turns}, max {self.max_turns}")
        if self.max_in_flight < 1 or self.workers < 1:
            raise ConfigError("max_in_flight and workers must be >= 1")
        if not 0.0 <= self.failure_threshold <= 1.0:
            raise ConfigError(f"failure_threshold must be in [0, 1], got {self.failure_threshold}")

    def api_key(self) -> str | None:
        return os.environ.get(self.api_key_env) or None


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, value: object):
    if value is None:
        return None
    kind = _FIELD_TYPES[name]
    try:
        if kind in ("int", "int | None"):
            return int(value)
        if kind in ("float", "float | None"):
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config field {name!r} has invalid value {value!r}") from exc


def load_config(
    config_file: str | Path | None = None,
    flag_values: dict | None = None,
    env: dict | None = None,
) -> RunConfig:
    """Layer defaults <- file <- environment <- explicit flags."""
    env = os.environ if env is None else env
    merged = dataclasses.asdict(RunConfig())

    if config_file:
        path = Path(config_file)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = yaml.safe_load(path.read_text("utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a mapping")
        for key, value in data.items():
            if key not in merged:
                raise ConfigError(f"{path}: unknown config key {key!r}")
            merged[key] = _coerce(key, value)

    for name in merged:
        env_value = env.get(f"{ENV_PREFIX}{name.upper()}")
        if env_value is not None:
            merged[name] = _coerce(name, env_value)

    for name, value in (flag_values or {}).items():
        if value is not None and name in merged:
            merged[name] = _coerce(name, value)

    config = RunConfig(**merged)
    config.validate()
    return config


def build_chat_backend(config: RunConfig, *, judge: bool = False):
    if config.backend == "mock":
        return MockBackend(seed=config.seed)
    model = (config.judge_model if judge else config.chat_model) or config.chat_model
    if not model:
        raise ConfigError("a live backend needs --chat-model")
    return HttpChatBackend(
        config.base_url,
        model,
        api_key=config.api_key(),
        timeout=config.timeout,
        max_attempts=config.max_attempts,
        max_in_flight=config.max_in_flight,
    )


def build_embedding_backend(config: RunConfig, choice: str = "mock"):
    if choice == "mock":
        return MockBackend(seed=config.seed)
    if not config.embed_model:
        raise ConfigError("a live embedder needs --embed-model")
    if not config.base_url:
        raise ConfigError("a live embedder needs --base-url")
    return HttpEmbeddingBackend(
        config.base_url,
        config.embed_model,
        api_key=config.api_key(),
        timeout=config.timeout,
        max_attempts=config.max_attempts,
        max_in_flight=config.max_in_flight,
    )


def write_run_manifest(
    out_dir: str | Path,
    command: str,
    config: RunConfig,
    inputs: dict[str, str] | None = None,
    outputs: list[str] | None = None,
) -> Path:
    """Record what a CLI invocation did: config snapshot, seeds, input hashes."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": dataclasses.asdict(config),
        "seed": config.seed,
        "inputs": inputs or {},
        "outputs": outputs or [],
        "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    path = out_dir / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", "utf-8")
    return path


def hash_input_file(path: str | Path) -> str:
    return sha256_hex(Path(path).read_text("utf-8"))
