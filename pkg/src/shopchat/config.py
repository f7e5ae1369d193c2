"""Runtime configuration: packaged defaults, JSON file and SHOPCHAT_* env overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from importlib import resources


def default_data_path(name: str) -> str:
    return str(resources.files("shopchat").joinpath("data", name))


@dataclass
class AppConfig:
    catalog_path: str = default_data_path("catalog.json")
    forms_path: str = default_data_path("forms.json")
    templates_path: str = default_data_path("templates.json")
    nlu_corpus_path: str = default_data_path("nlu_corpus.json")
    guardrail_rules_path: str = default_data_path("guardrail_rules.json")
    few_shots_path: str = default_data_path("few_shots.json")
    nlu_threshold: float = 0.55
    memory_window: int = 20
    few_shot_count: int = 4
    adapter: str = "scripted"  # scripted | live
    llm_endpoint: str = ""
    llm_model: str = ""
    llm_api_key_env: str = "LLM_API_KEY"
    llm_timeout_ms: int = 30000
    store_url: str | None = None  # None selects the in-memory store
    session_ttl_s: int = 86400
    listen_addr: str = "127.0.0.1:8080"
    ui_origin: str | None = None
    currency: str = "BRL"

    @classmethod
    def from_file(cls, path: str) -> "AppConfig":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls._apply(cls(), data)

    @classmethod
    def from_env(cls, environ: dict | None = None) -> "AppConfig":
        """SHOPCHAT_CONFIG names a JSON file; SHOPCHAT_<KEY> overrides single keys."""
        environ = os.environ if environ is None else environ
        config_path = environ.get("SHOPCHAT_CONFIG")
        config = cls.from_file(config_path) if config_path else cls()
        overrides = {}
        for spec in fields(cls):
            raw = environ.get(f"SHOPCHAT_{spec.name.upper()}")
            if raw is not None:
                overrides[spec.name] = raw
        return cls._apply(config, overrides)

    @classmethod
    def _apply(cls, config: "AppConfig", data: dict) -> "AppConfig":
        known = {spec.name: spec for spec in fields(cls)}
        for key, value in data.items():
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            if isinstance(value, str):
                current = getattr(config, key)
                if isinstance(current, bool):
                    value = value.lower() in ("1", "true", "yes")
                elif isinstance(current, int):
                    value = int(value)
                elif isinstance(current, float):
                    value = float(value)
            setattr(config, key, value)
        return config
