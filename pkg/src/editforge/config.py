"""Structured TOML configuration with defaults, dotted-path overrides,
and type validation that reports the offending field path."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Optional, Union

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib  # type: ignore[no-redef]

from editforge.filtering import RULE_ORDER, _SCRIPT_RANGES


class ConfigError(Exception):
    def __init__(self, path: str, message: str) -> None:
        self.path = path
        super().__init__(f"{path}: {message}")


def default_config() -> dict:
    return {
        "seed": 7,
        "pipeline": {
            "timestep_id": "T1",
            "date_start": "",
            "date_end": "",
            "max_error_fraction": 0.5,
        },
        "ingest": {
            "label_lang": "en",
            "format": "tsv",
            "old": "",
            "new": "",
            "spool_threshold": 0,  # 0: keep rows in memory
            "snapshot_date_old": "",
            "snapshot_date_new": "",
        },
        "diff": {
            "in_memory_threshold": 2_000_000,
            "chunk_size": 100_000,
        },
        "filters": {
            "max_phrase_words": 5,
            "enabled": list(RULE_ORDER),
            "allow_scripts": list(_SCRIPT_RANGES),
        },
        "locality": {
            "use_ann": False,
            "batch_size": 128,
        },
        "mhop": {},
        "qa": {
            "provider": "synth",  # synth | replay | http
            "endpoint": "",
            "replay_dir": "",
            "record": False,
            "temperature": 0.7,
            "max_tokens": 256,
            "max_inflight": 8,
            "timeout_s": 30.0,
            "max_retries": 3,
            "model_update": "default",
            "model_locality": "default",
            "model_rephrase": "default",
            "model_persona": "default",
            "model_mhop": "default",
            "template_dir": "",
        },
        "rag": {
            "k": 2,
            "mode": "exact",  # exact | approx
            "recall_floor": 0.95,
            "embedder": "stub",  # stub | http
            "embed_endpoint": "",
            "embed_dim": 64,
        },
        "eval": {
            "axes": ["update", "rephrase", "personas", "mhop", "locality"],
            "judge": "contains",
            "model": "constant:unknown",
            "max_inflight": 8,
            "annotations": "",
        },
    }


def _merge(defaults: dict, loaded: dict, path: str = "") -> dict:
    merged = dict(defaults)
    for key, value in loaded.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(here, "unknown configuration key")
        base = defaults[key]
        if isinstance(base, dict):
            if not isinstance(value, dict):
                raise ConfigError(here, f"expected a section, got {type(value).__name__}")
            merged[key] = _merge(base, value, here)
            continue
        merged[key] = _coerce(here, base, value)
    return merged


def _coerce(path: str, base: Any, value: Any) -> Any:
    if isinstance(base, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected bool, got {type(value).__name__}")
        return value
    if isinstance(base, int) and not isinstance(base, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected int, got {type(value).__name__}")
        return int(value)
    if isinstance(base, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected number, got {type(value).__name__}")
        return float(value)
    if isinstance(base, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected string, got {type(value).__name__}")
        return value
    if isinstance(base, list):
        if not isinstance(value, list):
            raise ConfigError(path, f"expected list, got {type(value).__name__}")
        return list(value)
    return value


class Config:
    def __init__(self, data: dict) -> None:
        self.data = data

    def __getitem__(self, section: str) -> dict:
        return self.data[section]

    def get(self, dotted: str, default: Any = None) -> Any:
        node: Any = self.data
        for part in dotted.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    @property
    def seed(self) -> int:
        return int(self.data["seed"])


def load_config(path: Optional[Union[str, Path]] = None) -> Config:
    data = default_config()
    if path is not None:
        file_path = Path(path)
        if not file_path.exists():
            raise ConfigError(str(file_path), "config file not found")
        try:
            loaded = tomllib.loads(file_path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(file_path), f"invalid TOML: {exc}") from exc
        data = _merge(data, loaded)
    return Config(data)


def apply_overrides(config: Config, pairs: list[str]) -> Config:
    """Apply ``--set section.key=value`` style overrides (values parsed
    as JSON where possible, otherwise taken as strings)."""
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(pair, "override must look like key=value")
        dotted, raw = pair.split("=", 1)
        try:
            value: Any = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node: Any = config.data
        parts = dotted.split(".")
        defaults: Any = default_config()
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(dotted, "unknown configuration key")
            node = node[part]
            defaults = defaults.get(part, {}) if isinstance(defaults, dict) else {}
        leaf = parts[-1]
        if not isinstance(node, dict) or leaf not in node:
            raise ConfigError(dotted, "unknown configuration key")
        base = defaults.get(leaf) if isinstance(defaults, dict) else None
        node[leaf] = _coerce(dotted, base, value) if base is not None else value
    return config
