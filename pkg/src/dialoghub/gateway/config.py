"""Gateway configuration: a human-editable YAML file with sections for
the server, routing, store, slot schema, domain rules, and preregistered
systems. Anything omitted falls back to a sensible default."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..errors import InvalidConfigError
from ..orchestrator import DEFAULT_TOPIC_PROMPTS
from ..slots import (
    DomainRule,
    ExtractorKind,
    SlotExtractor,
    SlotSchema,
    DATE_PATTERNS,
    _builtin_cities,
    default_domain_rules,
    default_schema,
)

DEFAULT_CONNECTOR_TIMEOUT = 10.0
DEFAULT_PROBE_INTERVAL = 30.0
DEFAULT_DOWN_AFTER = 3
DEFAULT_MIN_TURNS = 4
DEFAULT_GREETING = "Hi! Say anything to get the conversation going."


@dataclass
class SystemConfig:
    system_id: str
    name: str
    endpoint: str
    domains: list[str]
    bearer_token: str | None = None


@dataclass
class GatewayConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    admin_token: str | None = None
    greeting: str | None = DEFAULT_GREETING
    log_dir: str = "./data/events"
    connector_timeout_seconds: float = DEFAULT_CONNECTOR_TIMEOUT
    probe_interval_seconds: float = DEFAULT_PROBE_INTERVAL
    down_after_failures: int = DEFAULT_DOWN_AFTER
    selection_seed: int | None = None
    min_turns_usable: int = DEFAULT_MIN_TURNS
    quality_scorer: str = "null"
    topic_prompts: tuple[str, ...] = DEFAULT_TOPIC_PROMPTS
    schema: SlotSchema = field(default_factory=default_schema)
    domain_rules: list[DomainRule] = field(default_factory=default_domain_rules)
    systems: list[SystemConfig] = field(default_factory=list)


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise InvalidConfigError(f"{where}: missing required key {key!r}")
    return mapping[key]


def _parse_slots(raw: list, where: str = "slots") -> SlotSchema:
    extractors = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise InvalidConfigError(f"{where}[{i}]: expected a mapping")
        name = _require(entry, "name", f"{where}[{i}]")
        kind_raw = str(_require(entry, "kind", f"{where}[{i}]")).upper()
        try:
            kind = ExtractorKind(kind_raw)
        except ValueError:
            raise InvalidConfigError(f"{where}[{i}]: kind must be gazetteer or pattern") from None
        data = _require(entry, "data", f"{where}[{i}]")
        if data == "builtin:cities":
            words: tuple[str, ...] = _builtin_cities()
        elif data == "builtin:dates":
            words = DATE_PATTERNS
        elif isinstance(data, list):
            words = tuple(str(w) for w in data)
        elif isinstance(data, str):
            path = Path(data)
            if not path.exists():
                raise InvalidConfigError(f"{where}[{i}]: word list file {data!r} not found")
            words = tuple(
                line.strip()
                for line in path.read_text(encoding="utf-8").splitlines()
                if line.strip() and not line.startswith("#")
            )
        else:
            raise InvalidConfigError(f"{where}[{i}]: data must be a list, a file path, or builtin:*")
        extractors.append(SlotExtractor(name=str(name), kind=kind, data=words))
    return SlotSchema(extractors=tuple(extractors))


def _parse_domains(raw: list, where: str = "domains") -> list[DomainRule]:
    rules = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise InvalidConfigError(f"{where}[{i}]: expected a mapping")
        domain = str(_require(entry, "domain", f"{where}[{i}]"))
        keywords = _require(entry, "keywords", f"{where}[{i}]")
        if not isinstance(keywords, list) or not keywords:
            raise InvalidConfigError(f"{where}[{i}]: keywords must be a non-empty list")
        rules.append(DomainRule(domain=domain, keywords=frozenset(str(k).lower() for k in keywords)))
    return rules


def _parse_systems(raw: list, where: str = "systems") -> list[SystemConfig]:
    systems = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise InvalidConfigError(f"{where}[{i}]: expected a mapping")
        domains = _require(entry, "domains", f"{where}[{i}]")
        if not isinstance(domains, list) or not domains:
            raise InvalidConfigError(f"{where}[{i}]: domains must be a non-empty list")
        systems.append(
            SystemConfig(
                system_id=str(_require(entry, "system_id", f"{where}[{i}]")),
                name=str(_require(entry, "name", f"{where}[{i}]")),
                endpoint=str(_require(entry, "endpoint", f"{where}[{i}]")),
                domains=[str(d) for d in domains],
                bearer_token=entry.get("bearer_token"),
            )
        )
    return systems


def load_config(path: str | Path) -> GatewayConfig:
    """Parse and validate a gateway config file. Syntax errors carry the
    YAML line/column; semantic errors carry the offending key path."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidConfigError(f"cannot read {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        detail = str(exc)
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            detail = f"line {mark.line + 1}, column {mark.column + 1}: {getattr(exc, 'problem', exc)}"
        raise InvalidConfigError(f"{path.name}: {detail}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise InvalidConfigError(f"{path.name}: top level must be a mapping")
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> GatewayConfig:
    cfg = GatewayConfig()
    server = raw.get("server", {}) or {}
    cfg.host = str(server.get("host", cfg.host))
    cfg.port = int(server.get("port", cfg.port))
    cfg.admin_token = server.get("admin_token")
    cfg.greeting = server.get("greeting", cfg.greeting)

    store = raw.get("store", {}) or {}
    cfg.log_dir = str(store.get("log_dir", cfg.log_dir))

    routing = raw.get("routing", {}) or {}
    cfg.connector_timeout_seconds = float(
        routing.get("connector_timeout_seconds", cfg.connector_timeout_seconds)
    )
    cfg.probe_interval_seconds = float(routing.get("probe_interval_seconds", cfg.probe_interval_seconds))
    cfg.down_after_failures = int(routing.get("down_after_failures", cfg.down_after_failures))
    if routing.get("selection_seed") is not None:
        cfg.selection_seed = int(routing["selection_seed"])
    cfg.min_turns_usable = int(routing.get("min_turns_usable", cfg.min_turns_usable))
    cfg.quality_scorer = str(routing.get("quality_scorer", cfg.quality_scorer))
    if "topic_prompts" in routing:
        prompts = routing["topic_prompts"]
        if not isinstance(prompts, list) or not prompts:
            raise InvalidConfigError("routing.topic_prompts must be a non-empty list")
        cfg.topic_prompts = tuple(str(p) for p in prompts)

    if cfg.connector_timeout_seconds <= 0:
        raise InvalidConfigError("routing.connector_timeout_seconds must be positive")
    if cfg.down_after_failures < 1:
        raise InvalidConfigError("routing.down_after_failures must be >= 1")

    if "slots" in raw:
        cfg.schema = _parse_slots(raw["slots"] or [])
    if "domains" in raw:
        cfg.domain_rules = _parse_domains(raw["domains"] or [])
    if "systems" in raw:
        cfg.systems = _parse_systems(raw["systems"] or [])
    return cfg
