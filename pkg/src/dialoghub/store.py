"""Durable append-only persistence for sessions, turns, and feedback.

Storage is newline-delimited JSON, one event per line, one file per UTC
day, with an in-memory index rebuilt on startup. A session is never a
mutable row: it is always the left-fold of its events in offset order,
which is what makes the crash-recovery property checkable. Applying an
event produces a fresh Session object, so anything a reader already
holds is a stable snapshot.

Record format (bit-exact, also what export emits):
    {"offset": 0, "kind": "SESSION_STARTED", "written_at": "<RFC 3339>", "payload": {...}}
"""

from __future__ import annotations

import enum
import json
import os
import threading
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path
from typing import Callable, Iterator

from .errors import StorageFailureError, UnknownSessionError
from .model import (
    FeedbackEvent,
    FeedbackKind,
    Session,
    SessionStatus,
    SharedDialogState,
    Side,
    Turn,
    Utterance,
    format_ts,
    parse_ts,
    utc_now,
)


class EventKind(str, enum.Enum):
    SESSION_STARTED = "SESSION_STARTED"
    TURN_COMPLETED = "TURN_COMPLETED"
    FEEDBACK = "FEEDBACK"
    SESSION_ENDED = "SESSION_ENDED"
    SYSTEM_REGISTERED = "SYSTEM_REGISTERED"
    HEALTH_CHANGED = "HEALTH_CHANGED"
    # Consent-withdrawal tombstone: blanks a session's utterance texts and
    # feedback payloads on fold while keeping every count intact.
    REDACTED = "REDACTED"


@dataclass(frozen=True)
class StoreEvent:
    offset: int
    kind: EventKind
    payload: dict
    written_at: datetime


def _format_line(offset: int, kind: EventKind, written_at: datetime, payload: dict) -> str:
    return json.dumps(
        {"offset": offset, "kind": kind.value, "written_at": format_ts(written_at), "payload": payload},
        ensure_ascii=False,
    )


def _blank_turn(turn: Turn) -> Turn:
    user = Utterance(side=Side.USER, text=" ", timestamp=turn.user.timestamp)
    system = Utterance(side=Side.SYSTEM, text="", timestamp=turn.system.timestamp)
    return Turn(user=user, system=system, responder=turn.responder, latency_ms=turn.latency_ms)


class DialogStore:
    """Single-writer, many-reader event store.

    With `log_dir` set, every append is flushed and fsynced before it
    returns; with `log_dir=None` the store is memory-only (used for
    offline analysis of an exported log and in tests).
    """

    def __init__(self, log_dir: str | Path | None = None, clock: Callable[[], datetime] = utc_now):
        self._clock = clock
        self._lock = threading.Lock()
        self._log_dir = Path(log_dir) if log_dir is not None else None
        self._events: list[StoreEvent] = []
        self._lines: list[str] = []
        self._sessions: dict[str, Session] = {}
        self._order: list[str] = []  # session ids in SESSION_STARTED order
        self._registered: dict[str, dict] = {}
        self._next_offset = 0
        if self._log_dir is not None:
            self._log_dir.mkdir(parents=True, exist_ok=True)
            self._load_existing()

    # -- loading ------------------------------------------------------------

    def _log_files(self) -> list[Path]:
        assert self._log_dir is not None
        return sorted(self._log_dir.glob("events-*.log"))

    def _load_existing(self) -> None:
        files = self._log_files()
        for file_index, path in enumerate(files):
            lines = path.read_text(encoding="utf-8").splitlines()
            for line_index, line in enumerate(lines):
                try:
                    record = json.loads(line)
                except json.JSONDecodeError:
                    last = file_index == len(files) - 1 and line_index == len(lines) - 1
                    if last:
                        break  # torn final write; everything before it is intact
                    raise StorageFailureError(f"corrupt record in {path.name} line {line_index + 1}")
                self._ingest(record, line)

    @classmethod
    def from_log_file(cls, path: str | Path) -> "DialogStore":
        """Memory-only store built from an exported log (offline dashboard mode)."""
        store = cls(log_dir=None)
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line:
                    store._ingest(json.loads(line), line)
        return store

    def _ingest(self, record: dict, line: str) -> None:
        offset = int(record["offset"])
        if offset != self._next_offset:
            raise StorageFailureError(f"offset {offset} out of order (expected {self._next_offset})")
        event = StoreEvent(
            offset=offset,
            kind=EventKind(record["kind"]),
            payload=record["payload"],
            written_at=parse_ts(record["written_at"]),
        )
        self._apply(event)
        self._events.append(event)
        self._lines.append(line)
        self._next_offset = offset + 1

    # -- writing ------------------------------------------------------------

    def append(self, kind: EventKind | str, payload: dict) -> int:
        """Append one event; durable before return. Returns its offset."""
        kind = EventKind(kind)
        with self._lock:
            offset = self._next_offset
            written_at = self._clock()
            try:
                line = _format_line(offset, kind, written_at, payload)
            except (TypeError, ValueError) as exc:
                raise StorageFailureError(f"payload does not serialize: {exc}") from exc
            event = StoreEvent(offset=offset, kind=kind, payload=payload, written_at=written_at)
            self._apply(event)  # validate before touching disk
            if self._log_dir is not None:
                path = self._log_dir / f"events-{written_at.strftime('%Y-%m-%d')}.log"
                try:
                    with open(path, "a", encoding="utf-8") as fh:
                        fh.write(line + "\n")
                        fh.flush()
                        os.fsync(fh.fileno())
                except OSError as exc:
                    raise StorageFailureError(str(exc)) from exc
            self._events.append(event)
            self._lines.append(line)
            self._next_offset = offset + 1
            return offset

    # Convenience wrappers keeping payload schemas in one place.

    def record_session_started(self, session: Session, user_meta: dict | None = None) -> int:
        payload = {
            "session_id": session.session_id,
            "active_system": session.active_system,
            "created_at": format_ts(session.created_at),
        }
        if user_meta:
            payload["user_meta"] = user_meta
        return self.append(EventKind.SESSION_STARTED, payload)

    def record_turn(
        self,
        session_id: str,
        turn: Turn,
        state: SharedDialogState,
        handed_off: bool = False,
        failover_used: bool = False,
        topic_changed: bool = False,
    ) -> int:
        return self.append(
            EventKind.TURN_COMPLETED,
            {
                "session_id": session_id,
                "turn": turn.to_dict(),
                "state": state.to_dict(),
                "handed_off": handed_off,
                "failover_used": failover_used,
                "topic_changed": topic_changed,
            },
        )

    def record_feedback(self, session_id: str, event: FeedbackEvent) -> int:
        return self.append(EventKind.FEEDBACK, {"session_id": session_id, "event": event.to_dict()})

    def record_session_ended(self, session_id: str) -> int:
        return self.append(EventKind.SESSION_ENDED, {"session_id": session_id})

    def redact_session(self, session_id: str) -> int:
        return self.append(EventKind.REDACTED, {"session_id": session_id})

    # -- fold ---------------------------------------------------------------

    def _apply(self, event: StoreEvent) -> None:
        kind, payload = event.kind, event.payload
        if kind is EventKind.SESSION_STARTED:
            sid = payload["session_id"]
            if sid in self._sessions:
                raise StorageFailureError(f"duplicate SESSION_STARTED for {sid}")
            self._sessions[sid] = Session(
                session_id=sid,
                active_system=payload["active_system"],
                created_at=parse_ts(payload["created_at"]),
            )
            self._order.append(sid)
        elif kind is EventKind.TURN_COMPLETED:
            session = self._require(payload["session_id"])
            turn = Turn.from_dict(payload["turn"])
            self._sessions[session.session_id] = replace(
                session,
                turns=session.turns + [turn],
                state=SharedDialogState.from_dict(payload["state"]),
                active_system=turn.responder,
            )
        elif kind is EventKind.FEEDBACK:
            session = self._require(payload["session_id"])
            fb = FeedbackEvent.from_dict(payload["event"])
            self._sessions[session.session_id] = replace(session, feedback=session.feedback + [fb])
        elif kind is EventKind.SESSION_ENDED:
            session = self._require(payload["session_id"])
            self._sessions[session.session_id] = replace(session, status=SessionStatus.ENDED)
        elif kind is EventKind.SYSTEM_REGISTERED:
            self._registered[payload["system_id"]] = payload
        elif kind is EventKind.HEALTH_CHANGED:
            pass  # audit trail only; health lives in the registry
        elif kind is EventKind.REDACTED:
            session = self._require(payload["session_id"])
            turns = [_blank_turn(t) for t in session.turns]
            feedback = [
                fb
                if fb.kind not in (FeedbackKind.FEEDBACK, FeedbackKind.IMPROVE_RESPONSE)
                else FeedbackEvent(kind=fb.kind, turn_index=fb.turn_index, timestamp=fb.timestamp, payload=" ")
                for fb in session.feedback
            ]
            state = SharedDialogState(
                slots={name: replace(sv, value="") for name, sv in session.state.slots.items()}
            )
            self._sessions[session.session_id] = replace(session, turns=turns, feedback=feedback, state=state)

    def _require(self, session_id: str) -> Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise StorageFailureError(f"event references unknown session {session_id!r}") from None

    # -- reading ------------------------------------------------------------

    def __len__(self) -> int:
        with self._lock:
            return len(self._events)

    def iter_events(self) -> Iterator[StoreEvent]:
        with self._lock:
            snapshot = list(self._events)
        return iter(snapshot)

    def sessions(self) -> list[Session]:
        """All sessions, in SESSION_STARTED order. Snapshots: never mutated."""
        with self._lock:
            return [self._sessions[sid] for sid in self._order]

    def get_session(self, session_id: str) -> Session:
        with self._lock:
            try:
                return self._sessions[session_id]
            except KeyError:
                raise UnknownSessionError(f"no stored session {session_id!r}") from None

    def known_system_ids(self) -> set[str]:
        """Registered ids plus every id seen as an active system or responder."""
        with self._lock:
            ids = set(self._registered)
            for session in self._sessions.values():
                ids.add(session.active_system)
                for turn in session.turns:
                    ids.add(turn.responder)
            return ids

    def registered_systems(self) -> list[dict]:
        with self._lock:
            return list(self._registered.values())

    def query(self, dialog_filter) -> list[Session]:
        """Sessions satisfying all filter predicates, newest first.

        `dialog_filter` is an analytics DialogFilter (or anything with
        `validate()` and `matches(session)`).
        """
        dialog_filter.validate()
        matched = [s for s in self.sessions() if dialog_filter.matches(s)]
        matched.sort(key=lambda s: (-s.created_at.timestamp(), s.session_id))
        return matched

    # -- export -------------------------------------------------------------

    def export_bytes(self) -> bytes:
        """The full log in wire format, byte-identical to the on-disk files."""
        if self._log_dir is not None:
            return b"".join(path.read_bytes() for path in self._log_files())
        with self._lock:
            body = "\n".join(self._lines)
        return (body + "\n").encode("utf-8") if body else b""

    def export_to(self, path: str | Path) -> int:
        data = self.export_bytes()
        Path(path).write_bytes(data)
        return len(data)
