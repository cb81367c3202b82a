"""Session lifecycle: random matching of new sessions onto systems,
per-turn routing with shared slot state, topic-driven hand-offs,
failover to equivalent systems, and feedback recording.

Selection is seeded-pseudo-random with inverse-count weighting
(weight 1/(1+assignments)), which operationalizes "give equivalent
systems equal time" while staying fully replayable from a seed.

Per-session operations are serialized on a per-session lock; slow
connector calls on one session never block another. The registry and
the selection policy have their own short-lived locks.
"""

from __future__ import annotations

import random
import secrets
import threading
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime
from typing import Callable, Protocol

from .errors import (
    AllSystemsFailedError,
    ConnectorError,
    EmptyCandidatesError,
    InvalidTurnIndexError,
    NoSystemsAvailableError,
    SessionEndedError,
    UnknownSessionError,
)
from .model import (
    FeedbackEvent,
    FeedbackKind,
    Session,
    SessionStatus,
    Side,
    Turn,
    Utterance,
    utc_now,
)
from .registry import Health, ProbeResult, Registry, SystemDescriptor
from .slots import DomainRule, SlotSchema, default_domain_rules, default_schema, detect_domain, extract_slots, merge_state
from .store import DialogStore

# Provenance marker for slots the portal itself extracted from user text.
PORTAL_SOURCE = "portal"

DEFAULT_TOPIC_PROMPTS = (
    "Let's talk about something else - would you like a restaurant recommendation?",
    "That topic seems to be unavailable right now. How about we chat about the weather?",
    "Let's switch gears - want to play a game instead?",
)


@dataclass(frozen=True)
class ConnectorRequest:
    """What a remote system receives each turn: an opaque per-session token
    (never the internal session id), the user utterance, and the full
    shared slot state."""

    session_token: str
    user_utterance: str
    dialog_state: dict[str, str]

    def to_dict(self) -> dict:
        return {
            "session_token": self.session_token,
            "user_utterance": self.user_utterance,
            "dialog_state": self.dialog_state,
        }


@dataclass(frozen=True)
class ConnectorResponse:
    response_text: str
    state_updates: dict[str, str] | None = None
    end_session: bool = False

    def to_dict(self) -> dict:
        return {
            "response_text": self.response_text,
            "state_updates": self.state_updates,
            "end_session": self.end_session,
        }


class Connector(Protocol):
    """Transport used to call remote systems; the HTTP implementation lives
    in the gateway, tests plug in fakes."""

    def call(self, descriptor: SystemDescriptor, request: ConnectorRequest) -> ConnectorResponse: ...


@dataclass
class RoutingOutcome:
    response_text: str
    responder: str
    handed_off: bool = False
    failover_used: bool = False
    topic_changed: bool = False


class SelectionPolicy:
    """Seeded inverse-count weighted selection.

    Each draw picks a candidate with probability proportional to
    1/(1 + assignment_count) and increments the winner's count, so
    under-assigned systems are favored and long-run shares equalize.
    Counts never decrease.
    """

    def __init__(self, rng_seed: int | None = None):
        self.rng_seed = rng_seed
        self._rng = random.Random(rng_seed)
        self._counts: dict[str, int] = {}
        self._lock = threading.Lock()

    @property
    def assignment_counts(self) -> dict[str, int]:
        with self._lock:
            return dict(self._counts)

    def copy(self) -> "SelectionPolicy":
        """Independent clone with the same counts and a fresh RNG stream."""
        clone = SelectionPolicy(self.rng_seed)
        clone._counts = self.assignment_counts
        return clone

    def choose(self, candidates: list[str]) -> str:
        if not candidates:
            raise EmptyCandidatesError("no candidates to select from")
        with self._lock:
            weights = [1.0 / (1 + self._counts.get(c, 0)) for c in candidates]
            winner = self._rng.choices(candidates, weights=weights)[0]
            self._counts[winner] = self._counts.get(winner, 0) + 1
            return winner

    def preference_order(self, candidates: list[str]) -> list[str]:
        """Candidates ordered the way the policy leans: fewest assignments
        first, ties by system_id. Used for deterministic failover sweeps."""
        with self._lock:
            return sorted(candidates, key=lambda c: (self._counts.get(c, 0), c))

    def pick(self, options: tuple[str, ...]) -> str:
        """Uniform draw from the policy's RNG stream (replayable by seed)."""
        with self._lock:
            return options[self._rng.randrange(len(options))]


def select_system(candidates: list[str], policy: SelectionPolicy) -> str:
    return policy.choose(candidates)


@dataclass
class _LiveSession:
    session: Session
    connector_token: str
    lock: threading.Lock = field(default_factory=threading.Lock)


class Orchestrator:
    def __init__(
        self,
        registry: Registry,
        store: DialogStore,
        connector: Connector,
        schema: SlotSchema | None = None,
        domain_rules: list[DomainRule] | None = None,
        policy: SelectionPolicy | None = None,
        topic_prompts: tuple[str, ...] = DEFAULT_TOPIC_PROMPTS,
        clock: Callable[[], datetime] = utc_now,
    ):
        self.registry = registry
        self.store = store
        self.connector = connector
        self.schema = schema if schema is not None else default_schema()
        self.domain_rules = domain_rules if domain_rules is not None else default_domain_rules()
        self.policy = policy if policy is not None else SelectionPolicy()
        self.topic_prompts = topic_prompts
        self._clock = clock
        self._sessions: dict[str, _LiveSession] = {}
        self._sessions_lock = threading.Lock()
        self._in_flight = 0
        self._idle = threading.Condition()

    # -- lifecycle ------------------------------------------------------------

    def start_session(self, user_meta: dict | None = None) -> Session:
        """Open a session on a pseudo-randomly selected eligible system.
        Nothing client-visible identifies the chosen system."""
        eligible = [s.system_id for s in self.registry.eligible()]
        if not eligible:
            raise NoSystemsAvailableError("no registered system is currently available")
        chosen = select_system(eligible, self.policy)
        session = Session(
            session_id=uuid.uuid4().hex,
            active_system=chosen,
            created_at=self._clock(),
        )
        live = _LiveSession(session=session, connector_token=secrets.token_hex(16))
        with self._sessions_lock:
            self._sessions[session.session_id] = live
        self.store.record_session_started(session, user_meta)
        return session

    def get_session(self, session_id: str) -> Session:
        return self._live(session_id).session

    def _live(self, session_id: str) -> _LiveSession:
        with self._sessions_lock:
            try:
                return self._sessions[session_id]
            except KeyError:
                raise UnknownSessionError(f"unknown session {session_id!r}") from None

    # -- turn handling ----------------------------------------------------------

    def handle_utterance(self, session_id: str, text: str) -> RoutingOutcome:
        """Route one user utterance: extract and merge slots, detect a topic
        change, call the responder over the connector (failing over if it
        breaks), and append the completed turn."""
        live = self._live(session_id)
        with live.lock:
            self._track_start()
            try:
                return self._handle_locked(live, text)
            finally:
                self._track_end()

    def _handle_locked(self, live: _LiveSession, text: str) -> RoutingOutcome:
        session = live.session
        if session.status is SessionStatus.ENDED:
            raise SessionEndedError(f"session {session.session_id} is ended")

        previous_active = session.active_system
        turn_index = len(session.turns)
        user_utterance = Utterance(side=Side.USER, text=text, timestamp=self._clock())

        staged = session.state
        slot_updates = extract_slots(text, self.schema)
        if slot_updates:
            staged = merge_state(staged, slot_updates, PORTAL_SOURCE, turn_index)

        responder = previous_active
        handed_off = False
        domain = detect_domain(text, self.domain_rules)
        if domain is not None and domain not in self.registry.get(responder).domains:
            candidates = self.registry.equivalents(domain)
            if candidates:
                responder = select_system(candidates, self.policy)
                handed_off = True
            # No system serves the detected domain: stay where we are.

        request = ConnectorRequest(
            session_token=live.connector_token,
            user_utterance=text,
            dialog_state=staged.values_only(),
        )

        failover_used = False
        topic_changed = False
        latency_ms = 0
        response: ConnectorResponse | None = None
        attempted: list[str] = []

        if self.registry.get(responder).health is Health.DOWN:
            # Known-dead active system: skip the doomed call, go straight
            # to failover.
            attempted.append(responder)
            failover_used = True
        else:
            started = time.monotonic()
            try:
                response = self.connector.call(self.registry.get(responder), request)
                latency_ms = int((time.monotonic() - started) * 1000)
                self.registry.record_probe(responder, ProbeResult.OK)
            except ConnectorError as exc:
                self._record_failure(responder, exc)
                attempted.append(responder)
                failover_used = True

        if response is None:
            responder, response, topic_changed, latency_ms = self._failover(
                attempted, request, domain
            )
            handed_off = responder != previous_active

        system_utterance = Utterance(
            side=Side.SYSTEM, text=response.response_text, timestamp=self._clock()
        )
        turn = Turn(
            user=user_utterance,
            system=system_utterance,
            responder=responder,
            latency_ms=latency_ms,
        )
        if response.state_updates:
            staged = merge_state(staged, response.state_updates, responder, turn_index)

        session.turns.append(turn)
        session.state = staged
        session.active_system = responder
        self.store.record_turn(
            session.session_id,
            turn,
            staged,
            handed_off=handed_off,
            failover_used=failover_used,
            topic_changed=topic_changed,
        )
        if response.end_session:
            self._end(live)
        return RoutingOutcome(
            response_text=response.response_text,
            responder=responder,
            handed_off=handed_off,
            failover_used=failover_used,
            topic_changed=topic_changed,
        )

    def _record_failure(self, system_id: str, exc: ConnectorError) -> None:
        result = ProbeResult.TIMEOUT if exc.code == "TIMEOUT" else ProbeResult.ERROR
        self.registry.record_probe(system_id, result)

    def _failover(
        self,
        attempted: list[str],
        request: ConnectorRequest,
        domain: str | None,
    ) -> tuple[str, ConnectorResponse, bool, int]:
        """Back off to an equivalent system, replaying the utterance; with
        no equivalent left, change the topic onto a different-domain
        system. Raises when nothing at all can take the session."""
        failed = attempted[0]
        failed_domains = set(self.registry.get(failed).domains)
        if domain is not None:
            failed_domains.add(domain)

        candidates: set[str] = set()
        for d in sorted(failed_domains):
            candidates.update(self.registry.equivalents(d, exclude=failed))
        candidates -= set(attempted)

        for backup in self.policy.preference_order(sorted(candidates)):
            started = time.monotonic()
            try:
                response = self.connector.call(self.registry.get(backup), request)
                latency_ms = int((time.monotonic() - started) * 1000)
                self.registry.record_probe(backup, ProbeResult.OK)
                return backup, response, False, latency_ms
            except ConnectorError as exc:
                self._record_failure(backup, exc)
                attempted.append(backup)

        # Same-domain options exhausted: change the topic.
        others = [
            s.system_id
            for s in self.registry.eligible()
            if s.system_id not in attempted and not (set(s.domains) & failed_domains)
        ]
        if others:
            target = select_system(others, self.policy)
            prompt = self.policy.pick(self.topic_prompts)
            return target, ConnectorResponse(response_text=prompt), True, 0
        raise AllSystemsFailedError("every reachable system failed for this utterance")

    # -- feedback -----------------------------------------------------------------

    def record_feedback(self, session_id: str, event: FeedbackEvent) -> None:
        """Append a feedback event; END_CONVERSATION also ends the session."""
        live = self._live(session_id)
        with live.lock:
            session = live.session
            if event.turn_index >= len(session.turns):
                raise InvalidTurnIndexError(
                    f"turn_index {event.turn_index} out of range ({len(session.turns)} turns)"
                )
            session.feedback.append(event)
            self.store.record_feedback(session.session_id, event)
            if event.kind is FeedbackKind.END_CONVERSATION and session.status is SessionStatus.OPEN:
                self._end(live)

    def end_session(self, session_id: str) -> None:
        """End a session; records END_CONVERSATION feedback when there is a
        turn to anchor it to, otherwise just flips the status."""
        live = self._live(session_id)
        with live.lock:
            session = live.session
            if session.status is SessionStatus.ENDED:
                return
            if session.turns:
                event = FeedbackEvent(
                    kind=FeedbackKind.END_CONVERSATION,
                    turn_index=len(session.turns) - 1,
                    timestamp=self._clock(),
                )
                session.feedback.append(event)
                self.store.record_feedback(session.session_id, event)
            self._end(live)

    def _end(self, live: _LiveSession) -> None:
        if live.session.status is SessionStatus.OPEN:
            live.session.status = SessionStatus.ENDED
            self.store.record_session_ended(live.session.session_id)

    # -- draining -------------------------------------------------------------------

    def _track_start(self) -> None:
        with self._idle:
            self._in_flight += 1

    def _track_end(self) -> None:
        with self._idle:
            self._in_flight -= 1
            if self._in_flight == 0:
                self._idle.notify_all()

    def drain(self, timeout: float | None = None) -> bool:
        """Wait until no turn is in flight; True if drained in time."""
        with self._idle:
            return self._idle.wait_for(lambda: self._in_flight == 0, timeout=timeout)
