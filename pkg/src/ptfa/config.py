"""Service configuration: one JSON file, fully optional, strictly checked.

Top-level sections: scheduler, provider, service, hats, topics. Every key has
a shipped default, so an empty file (or no file) is a valid configuration.
Unknown keys fail loudly with their dotted path, which beats silently running
a misconfigured study. Credentials never live here: the provider section
names an environment variable, not a key.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping

from .engine import HatAgentConfig, default_hat_registry, validate_registry
from .gateway import API_KEY_ENV, HttpProvider, Provider, ScriptedProvider
from .model import TOPICS, Hat, TopicId
from .scheduler import SchedulerConfig


class BadConfig(Exception):
    """Configuration rejected; the message names the offending key."""


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "http"  # http | scripted
    base_url: str = "http://127.0.0.1:8080/v1"
    model: str = "gpt-4"
    api_key_env: str = API_KEY_ENV
    script: tuple[str, ...] = ()

    def build(self) -> Provider:
        if self.kind == "scripted":
            return ScriptedProvider(list(self.script) or ["Good"])
        return HttpProvider(
            base_url=self.base_url, model=self.model, api_key_env=self.api_key_env
        )


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8642
    data_dir: str = "./ptfa_data"
    show_hats: bool = True  # hat badges visible to participants


@dataclass(frozen=True)
class AppConfig:
    scheduler: SchedulerConfig
    provider: ProviderConfig
    service: ServiceConfig
    hats: dict[Hat, HatAgentConfig]
    topics: dict[int, TopicId]


def default_config() -> AppConfig:
    return AppConfig(
        scheduler=SchedulerConfig(),
        provider=ProviderConfig(),
        service=ServiceConfig(),
        hats=default_hat_registry(),
        topics=dict(TOPICS),
    )


def _check_keys(section: Mapping[str, Any], allowed: set[str], prefix: str) -> None:
    for key in section:
        if key not in allowed:
            raise BadConfig(f"unknown key {prefix}{key}")


def _typed(section: Mapping[str, Any], key: str, kinds: type | tuple, prefix: str) -> Any:
    value = section[key]
    if isinstance(value, bool) and bool not in (kinds if isinstance(kinds, tuple) else (kinds,)):
        raise BadConfig(f"bad value for {prefix}{key}: expected {kinds}")
    if not isinstance(value, kinds):
        raise BadConfig(f"bad value for {prefix}{key}: expected {kinds}")
    return value


def _load_scheduler(section: Mapping[str, Any]) -> SchedulerConfig:
    fields = {f.name for f in dataclasses.fields(SchedulerConfig)}
    _check_keys(section, fields, "scheduler.")
    kwargs: dict[str, Any] = {}
    for key in section:
        kinds: tuple = (int,) if key != "clock_scale" else (int, float)
        kwargs[key] = _typed(section, key, kinds, "scheduler.")
    try:
        return SchedulerConfig(**kwargs)
    except ValueError as exc:
        raise BadConfig(f"scheduler: {exc}") from exc


def _load_provider(section: Mapping[str, Any]) -> ProviderConfig:
    _check_keys(section, {"kind", "base_url", "model", "api_key_env", "script"}, "provider.")
    kwargs: dict[str, Any] = {}
    for key in ("kind", "base_url", "model", "api_key_env"):
        if key in section:
            kwargs[key] = _typed(section, key, str, "provider.")
    if "script" in section:
        script = section["script"]
        if not isinstance(script, list) or any(not isinstance(s, str) for s in script):
            raise BadConfig("bad value for provider.script: expected a list of strings")
        kwargs["script"] = tuple(script)
    cfg = ProviderConfig(**kwargs)
    if cfg.kind not in ("http", "scripted"):
        raise BadConfig(f"bad value for provider.kind: {cfg.kind!r}")
    return cfg


def _load_service(section: Mapping[str, Any]) -> ServiceConfig:
    _check_keys(section, {"host", "port", "data_dir", "show_hats"}, "service.")
    kwargs: dict[str, Any] = {}
    if "host" in section:
        kwargs["host"] = _typed(section, "host", str, "service.")
    if "port" in section:
        kwargs["port"] = _typed(section, "port", int, "service.")
    if "data_dir" in section:
        kwargs["data_dir"] = _typed(section, "data_dir", str, "service.")
    if "show_hats" in section:
        kwargs["show_hats"] = _typed(section, "show_hats", bool, "service.")
    return ServiceConfig(**kwargs)


def _load_hats(section: Mapping[str, Any]) -> dict[Hat, HatAgentConfig]:
    registry = default_hat_registry()
    hat_names = {h.value for h in Hat}
    _check_keys(section, hat_names, "hats.")
    overridable = {
        "role_name",
        "macro_prompt",
        "situational_templates",
        "divergent_priority",
        "convergent_priority",
        "temperature",
    }
    for name, overrides in section.items():
        hat = Hat(name)
        if not isinstance(overrides, Mapping):
            raise BadConfig(f"bad value for hats.{name}: expected an object")
        _check_keys(overrides, overridable, f"hats.{name}.")
        kwargs: dict[str, Any] = {}
        for key, value in overrides.items():
            prefix = f"hats.{name}."
            if key in ("role_name", "macro_prompt"):
                kwargs[key] = _typed(overrides, key, str, prefix)
            elif key == "situational_templates":
                if not isinstance(value, list) or any(not isinstance(t, str) for t in value):
                    raise BadConfig(f"bad value for {prefix}{key}: expected a list of strings")
                kwargs[key] = tuple(value)
            elif key in ("divergent_priority", "convergent_priority"):
                kwargs[key] = _typed(overrides, key, int, prefix)
            else:
                kwargs[key] = _typed(overrides, key, (int, float), prefix)
        registry[hat] = replace(registry[hat], **kwargs)
    try:
        validate_registry(registry)
    except ValueError as exc:
        raise BadConfig(f"hats: {exc}") from exc
    return registry


def _load_topics(section: Mapping[str, Any]) -> dict[int, TopicId]:
    topics = dict(TOPICS)
    for key, prompt in section.items():
        try:
            topic_id = int(key)
        except ValueError:
            raise BadConfig(f"bad key topics.{key}: expected an integer id") from None
        if not isinstance(prompt, str) or not prompt.strip():
            raise BadConfig(f"bad value for topics.{key}: expected a non-empty string")
        topics[topic_id] = TopicId(topic_id, prompt)
    return topics


def parse_config(payload: Any, source: str = "<config>") -> AppConfig:
    if not isinstance(payload, Mapping):
        raise BadConfig(f"{source}: top level must be a JSON object")
    _check_keys(payload, {"scheduler", "provider", "service", "hats", "topics"}, "")
    for key in payload:
        if not isinstance(payload[key], Mapping):
            raise BadConfig(f"bad value for {key}: expected an object")
    return AppConfig(
        scheduler=_load_scheduler(payload.get("scheduler", {})),
        provider=_load_provider(payload.get("provider", {})),
        service=_load_service(payload.get("service", {})),
        hats=_load_hats(payload.get("hats", {})),
        topics=_load_topics(payload.get("topics", {})),
    )


def load_config(path: str | Path | None) -> AppConfig:
    """Load the file if given, otherwise the shipped defaults."""
    if path is None:
        return default_config()
    path = Path(path)
    if not path.exists():
        raise BadConfig(f"config file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise BadConfig(f"{path}: not valid JSON: {exc}") from exc
    return parse_config(payload, source=str(path))
