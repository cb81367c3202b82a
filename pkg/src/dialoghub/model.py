"""Domain types shared across the gateway: utterances, turns, feedback,
slot state, and sessions, plus turn/utterance accounting.

All types are plain value objects with dict round-trip serialization.
Timestamps are UTC with millisecond precision; conversion to local time
is a display concern and never happens here.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

from .errors import MissingPayloadError, ModelInvariantError


class Side(str, enum.Enum):
    USER = "USER"
    SYSTEM = "SYSTEM"


class FeedbackKind(str, enum.Enum):
    LIKE = "LIKE"
    DISLIKE = "DISLIKE"
    FEEDBACK = "FEEDBACK"
    IMPROVE_RESPONSE = "IMPROVE_RESPONSE"
    END_CONVERSATION = "END_CONVERSATION"


# Kinds that carry a mandatory free-text payload.
PAYLOAD_KINDS = frozenset({FeedbackKind.FEEDBACK, FeedbackKind.IMPROVE_RESPONSE})


class SessionStatus(str, enum.Enum):
    OPEN = "OPEN"
    ENDED = "ENDED"


def utc_now() -> datetime:
    """Current UTC time truncated to millisecond precision."""
    now = datetime.now(timezone.utc)
    return now - timedelta(microseconds=now.microsecond % 1000)


def format_ts(ts: datetime) -> str:
    """RFC 3339 with milliseconds and a Z suffix, e.g. 2026-08-10T12:00:00.000Z."""
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    ts = ts.astimezone(timezone.utc)
    return ts.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ts.microsecond // 1000:03d}Z"


def parse_ts(raw: str) -> datetime:
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    ts = datetime.fromisoformat(raw)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


@dataclass(frozen=True)
class Utterance:
    """One message in a dialog. Empty text is reserved for SYSTEM
    placeholders (e.g. a system that ends the session without a reply)."""

    side: Side
    text: str
    timestamp: datetime

    def __post_init__(self) -> None:
        if self.text == "" and self.side is not Side.SYSTEM:
            raise ModelInvariantError("only SYSTEM utterances may have empty text")

    def to_dict(self) -> dict:
        return {"side": self.side.value, "text": self.text, "timestamp": format_ts(self.timestamp)}

    @classmethod
    def from_dict(cls, d: dict) -> "Utterance":
        return cls(side=Side(d["side"]), text=d["text"], timestamp=parse_ts(d["timestamp"]))


@dataclass(frozen=True)
class Turn:
    """One user utterance paired with the system utterance that answered it.
    A dangling user utterance awaiting a reply is not a turn."""

    user: Utterance
    system: Utterance
    responder: str
    latency_ms: int = 0

    def __post_init__(self) -> None:
        if self.user.side is not Side.USER:
            raise ModelInvariantError("turn.user must be a USER utterance")
        if self.system.side is not Side.SYSTEM:
            raise ModelInvariantError("turn.system must be a SYSTEM utterance")

    def to_dict(self) -> dict:
        return {
            "user": self.user.to_dict(),
            "system": self.system.to_dict(),
            "responder": self.responder,
            "latency_ms": self.latency_ms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Turn":
        return cls(
            user=Utterance.from_dict(d["user"]),
            system=Utterance.from_dict(d["system"]),
            responder=d["responder"],
            latency_ms=int(d["latency_ms"]),
        )


@dataclass(frozen=True)
class FeedbackEvent:
    """One of the five user feedback actions, anchored to a turn.

    FEEDBACK and IMPROVE_RESPONSE carry a mandatory text payload; the
    other kinds must not carry one. Whether turn_index is in range is a
    session-level check done where the session is known.
    """

    kind: FeedbackKind
    turn_index: int
    timestamp: datetime
    payload: str | None = None

    def __post_init__(self) -> None:
        if self.turn_index < 0:
            raise ModelInvariantError("turn_index must be >= 0")
        if self.kind in PAYLOAD_KINDS:
            if not self.payload:
                raise MissingPayloadError(f"{self.kind.value} requires a text payload")
        elif self.payload is not None:
            raise ModelInvariantError(f"{self.kind.value} does not take a payload")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "turn_index": self.turn_index,
            "payload": self.payload,
            "timestamp": format_ts(self.timestamp),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackEvent":
        return cls(
            kind=FeedbackKind(d["kind"]),
            turn_index=int(d["turn_index"]),
            payload=d.get("payload"),
            timestamp=parse_ts(d["timestamp"]),
        )


@dataclass(frozen=True)
class SlotValue:
    """A slot's value plus provenance: which system wrote it and at which turn."""

    value: str
    source_system: str
    set_at_turn: int

    def to_dict(self) -> dict:
        return {"value": self.value, "source_system": self.source_system, "set_at_turn": self.set_at_turn}

    @classmethod
    def from_dict(cls, d: dict) -> "SlotValue":
        return cls(value=d["value"], source_system=d["source_system"], set_at_turn=int(d["set_at_turn"]))


@dataclass
class SharedDialogState:
    """Slot map (e.g. city, date) carried across system hand-offs."""

    slots: dict[str, SlotValue] = field(default_factory=dict)

    def copy(self) -> "SharedDialogState":
        return SharedDialogState(slots=dict(self.slots))

    def values_only(self) -> dict[str, str]:
        """Slot name -> bare value, as systems see it on the wire."""
        return {name: sv.value for name, sv in self.slots.items()}

    def to_dict(self) -> dict:
        return {"slots": {name: sv.to_dict() for name, sv in sorted(self.slots.items())}}

    @classmethod
    def from_dict(cls, d: dict) -> "SharedDialogState":
        return cls(slots={name: SlotValue.from_dict(sv) for name, sv in d.get("slots", {}).items()})


@dataclass
class Session:
    """One user conversation: ordered turns, shared slot state, active system,
    and the feedback trail. ENDED sessions accept no further turns."""

    session_id: str
    active_system: str
    created_at: datetime
    turns: list[Turn] = field(default_factory=list)
    state: SharedDialogState = field(default_factory=SharedDialogState)
    feedback: list[FeedbackEvent] = field(default_factory=list)
    status: SessionStatus = SessionStatus.OPEN

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "turns": [t.to_dict() for t in self.turns],
            "state": self.state.to_dict(),
            "active_system": self.active_system,
            "feedback": [f.to_dict() for f in self.feedback],
            "status": self.status.value,
            "created_at": format_ts(self.created_at),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Session":
        return cls(
            session_id=d["session_id"],
            active_system=d["active_system"],
            created_at=parse_ts(d["created_at"]),
            turns=[Turn.from_dict(t) for t in d.get("turns", [])],
            state=SharedDialogState.from_dict(d.get("state", {})),
            feedback=[FeedbackEvent.from_dict(f) for f in d.get("feedback", [])],
            status=SessionStatus(d.get("status", "OPEN")),
        )


def count_units(session: Session) -> dict:
    """Turn and utterance counts for a session.

    A turn is one completed user/system pair, so utterances are always
    exactly twice the turns. Feedback events are not utterances.
    """
    turns = len(session.turns)
    return {"turns": turns, "utterances": 2 * turns}


def is_usable(session: Session, min_turns: int = 4) -> bool:
    """Whether the session clears the usable-dialog bar (default: 4 turns,
    i.e. 8 utterances)."""
    if min_turns < 0:
        raise ValueError("min_turns must be >= 0")
    return count_units(session)["turns"] >= min_turns
