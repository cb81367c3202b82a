"""Registration, health tracking, and equivalence grouping of remote
dialog systems.

Health is a pure function of the consecutive-failure counter: 0 failures
is UP, 1..k-1 is DEGRADED, k or more is DOWN (any successful probe
resets the counter). DEGRADED systems stay selectable; DOWN systems do
not appear in equivalence lookups.
"""

from __future__ import annotations

import enum
import threading
import time
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Callable, Iterable
from urllib.parse import urlparse

from .errors import DuplicateIdError, EmptyDomainsError, InvalidEndpointError, UnknownSystemError
from .model import format_ts, parse_ts, utc_now

DEFAULT_DOWN_AFTER = 3


class Health(str, enum.Enum):
    UP = "UP"
    DEGRADED = "DEGRADED"
    DOWN = "DOWN"


class ProbeResult(str, enum.Enum):
    OK = "OK"
    TIMEOUT = "TIMEOUT"
    ERROR = "ERROR"


def health_for_failures(consecutive_failures: int, down_after: int = DEFAULT_DOWN_AFTER) -> Health:
    """The health state implied by a consecutive-failure count."""
    if consecutive_failures <= 0:
        return Health.UP
    if consecutive_failures < down_after:
        return Health.DEGRADED
    return Health.DOWN


@dataclass(frozen=True)
class SystemDescriptor:
    """A registered remote dialog system."""

    system_id: str
    name: str
    endpoint: str
    domains: frozenset[str]
    health: Health = Health.UP
    registered_at: datetime = field(default_factory=utc_now)
    bearer_token: str | None = None

    def to_dict(self) -> dict:
        return {
            "system_id": self.system_id,
            "name": self.name,
            "endpoint": self.endpoint,
            "domains": sorted(self.domains),
            "health": self.health.value,
            "registered_at": format_ts(self.registered_at),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SystemDescriptor":
        return cls(
            system_id=d["system_id"],
            name=d["name"],
            endpoint=d["endpoint"],
            domains=frozenset(d["domains"]),
            health=Health(d.get("health", "UP")),
            registered_at=parse_ts(d["registered_at"]) if "registered_at" in d else utc_now(),
            bearer_token=d.get("bearer_token"),
        )


@dataclass(frozen=True)
class EquivalenceGroup:
    """Systems serving the same domain; derived from the registry, never stored."""

    domain: str
    members: frozenset[str]


def _validate_endpoint(endpoint: str) -> None:
    parsed = urlparse(endpoint)
    if parsed.scheme not in ("http", "https") or not parsed.netloc:
        raise InvalidEndpointError(f"endpoint must be an http(s) URL, got {endpoint!r}")


class Registry:
    """Shared read-mostly system registry. Reads take a snapshot under the
    lock; writes (registration, probe updates) are serialized, so readers
    never observe a partially registered system.

    `listener(kind, payload)` is invoked outside hot paths for
    SYSTEM_REGISTERED and HEALTH_CHANGED so the event log can record them.
    """

    def __init__(
        self,
        down_after: int = DEFAULT_DOWN_AFTER,
        listener: Callable[[str, dict], None] | None = None,
    ):
        if down_after < 1:
            raise ValueError("down_after must be >= 1")
        self._down_after = down_after
        self._listener = listener
        self._lock = threading.RLock()
        self._systems: dict[str, SystemDescriptor] = {}
        self._failures: dict[str, int] = {}

    def register(self, descriptor: SystemDescriptor) -> str:
        if not descriptor.domains:
            raise EmptyDomainsError("a system must declare at least one domain")
        _validate_endpoint(descriptor.endpoint)
        with self._lock:
            if descriptor.system_id in self._systems:
                raise DuplicateIdError(f"system_id {descriptor.system_id!r} already registered")
            # Health starts UP pending the first probe.
            stored = replace(descriptor, health=Health.UP)
            self._systems[descriptor.system_id] = stored
            self._failures[descriptor.system_id] = 0
        if self._listener is not None:
            self._listener("SYSTEM_REGISTERED", stored.to_dict())
        return descriptor.system_id

    def get(self, system_id: str) -> SystemDescriptor:
        with self._lock:
            try:
                return self._systems[system_id]
            except KeyError:
                raise UnknownSystemError(f"unknown system {system_id!r}") from None

    def __contains__(self, system_id: str) -> bool:
        with self._lock:
            return system_id in self._systems

    def all_systems(self) -> list[SystemDescriptor]:
        with self._lock:
            return sorted(self._systems.values(), key=lambda s: s.system_id)

    def eligible(self) -> list[SystemDescriptor]:
        """All systems currently selectable (health != DOWN), ordered by id."""
        return [s for s in self.all_systems() if s.health is not Health.DOWN]

    def health_of(self, system_id: str) -> Health:
        return self.get(system_id).health

    def record_probe(self, system_id: str, result: ProbeResult) -> Health:
        with self._lock:
            if system_id not in self._systems:
                raise UnknownSystemError(f"unknown system {system_id!r}")
            failures = 0 if result is ProbeResult.OK else self._failures[system_id] + 1
            self._failures[system_id] = failures
            new_health = health_for_failures(failures, self._down_after)
            old_health = self._systems[system_id].health
            if new_health is not old_health:
                self._systems[system_id] = replace(self._systems[system_id], health=new_health)
        if new_health is not old_health and self._listener is not None:
            self._listener(
                "HEALTH_CHANGED",
                {"system_id": system_id, "health": new_health.value, "previous": old_health.value},
            )
        return new_health

    def equivalents(self, domain: str, exclude: str | None = None) -> list[str]:
        """Systems serving `domain` that are not DOWN and not `exclude`,
        ordered by system_id for determinism."""
        with self._lock:
            return sorted(
                s.system_id
                for s in self._systems.values()
                if domain in s.domains and s.health is not Health.DOWN and s.system_id != exclude
            )

    def equivalence_group(self, domain: str) -> EquivalenceGroup:
        return EquivalenceGroup(domain=domain, members=frozenset(self.equivalents(domain)))

    def domains(self) -> set[str]:
        with self._lock:
            out: set[str] = set()
            for s in self._systems.values():
                out |= s.domains
            return out


class HealthProber:
    """Background loop probing every registered system's ping endpoint at a
    fixed interval and feeding results into the registry."""

    def __init__(self, registry: Registry, ping: Callable[[SystemDescriptor], ProbeResult], interval_seconds: float = 30.0):
        self._registry = registry
        self._ping = ping
        self._interval = interval_seconds
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def probe_once(self) -> None:
        for descriptor in self._registry.all_systems():
            result = self._ping(descriptor)
            self._registry.record_probe(descriptor.system_id, result)

    def start(self) -> None:
        if self._thread is not None:
            return

        def loop() -> None:
            while not self._stop.wait(self._interval):
                self.probe_once()

        self._thread = threading.Thread(target=loop, name="health-prober", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
