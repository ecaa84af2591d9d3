"""Service configuration: one JSON file, overridable per key through
FEEDBACKFORGE_* environment variables (documented in the README)."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from pathlib import Path

from ..errors import ConfigError

_ENV_PREFIX = "FEEDBACKFORGE_"

DEFAULT_PROVIDERS = [
    {
        "id": "gpt-4.1-mini",
        "display_name": "GPT-4.1 mini",
        "endpoint_config": {"adapter": "mock", "seed": 11},
        "timeout": 30.0,
        "max_attempts": 3,
    },
    {
        "id": "gemini-2.5-flash",
        "display_name": "Gemini 2.5 Flash",
        "endpoint_config": {"adapter": "mock", "seed": 22},
        "timeout": 30.0,
        "max_attempts": 3,
    },
    {
        "id": "llama-3.1",
        "display_name": "Llama 3.1",
        "endpoint_config": {"adapter": "mock", "seed": 33},
        "timeout": 30.0,
        "max_attempts": 3,
    },
]


@dataclass(frozen=True)
class AppConfig:
    database_path: str = "data/feedbackforge.db"
    documents_path: str = "data/documents"
    files_path: str = "data/files"
    host: str = "127.0.0.1"
    port: int = 8000
    #: Start generation automatically once this many evaluations have been
    #: submitted for an instance (0 disables the auto trigger).
    auto_generate_after: int = 0
    #: Directory with a prebuilt dashboard bundle to serve at /ui, if any.
    static_frontend_path: str | None = None
    log_level: str = "INFO"
    #: Provider descriptor dicts; see gateway.ProviderDescriptor.
    provider_dicts: tuple = ()

    def providers_list(self) -> list[dict]:
        return [dict(p) for p in self.provider_dicts] or [dict(p) for p in DEFAULT_PROVIDERS]


def _coerce_int(name: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}") from None


def load_config(path: str | Path | None = None,
                env: dict[str, str] | None = None) -> AppConfig:
    """Read the JSON config file (if given) and apply env overrides."""
    env = os.environ if env is None else env
    data: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc

    cfg = AppConfig(
        database_path=data.get("database_path", AppConfig.database_path),
        documents_path=data.get("documents_path", AppConfig.documents_path),
        files_path=data.get("files_path", AppConfig.files_path),
        host=data.get("host", AppConfig.host),
        port=int(data.get("port", AppConfig.port)),
        auto_generate_after=int(data.get("auto_generate_after", 0)),
        static_frontend_path=data.get("static_frontend_path"),
        log_level=data.get("log_level", AppConfig.log_level),
        provider_dicts=tuple(data.get("providers", ())),
    )

    def override(key: str):
        return env.get(_ENV_PREFIX + key.upper())

    updates: dict = {}
    for key in ("database_path", "documents_path", "files_path", "host",
                "static_frontend_path", "log_level"):
        value = override(key)
        if value is not None:
            updates[key] = value
    for key in ("port", "auto_generate_after"):
        value = override(key)
        if value is not None:
            updates[key] = _coerce_int(_ENV_PREFIX + key.upper(), value)
    raw_providers = override("providers")
    if raw_providers is not None:
        try:
            parsed = json.loads(raw_providers)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{_ENV_PREFIX}PROVIDERS must be a JSON array: {exc}") from exc
        if not isinstance(parsed, list):
            raise ConfigError(f"{_ENV_PREFIX}PROVIDERS must be a JSON array")
        updates["provider_dicts"] = tuple(parsed)
    return replace(cfg, **updates) if updates else cfg
