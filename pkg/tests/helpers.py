"""Shared test builders: deterministic clocks, session factories, and
store ingestion helpers."""

from __future__ import annotations

from datetime import datetime, timedelta

from dialoghub.model import (
    FeedbackEvent,
    FeedbackKind,
    Session,
    SharedDialogState,
    Side,
    Turn,
    Utterance,
    parse_ts,
)
from dialoghub.store import DialogStore


class TickingClock:
    """Returns strictly increasing ms-truncated UTC instants."""

    def __init__(self, start: str = "2026-01-05T10:00:00.000Z", step_ms: int = 1000):
        self.now = parse_ts(start)
        self.step = timedelta(milliseconds=step_ms)

    def __call__(self) -> datetime:
        current = self.now
        self.now = current + self.step
        return current


def make_turn(
    user_text: str,
    system_text: str,
    responder: str,
    at: datetime,
    latency_ms: int = 50,
) -> Turn:
    return Turn(
        user=Utterance(side=Side.USER, text=user_text, timestamp=at),
        system=Utterance(side=Side.SYSTEM, text=system_text, timestamp=at + timedelta(milliseconds=500)),
        responder=responder,
        latency_ms=latency_ms,
    )


def make_session(
    session_id: str,
    system: str,
    created_at: datetime,
    n_turns: int,
    user_text: str = "hello there",
    system_text: str = "hi how can i help",
    likes: int = 0,
    dislikes: int = 0,
    comments: int = 0,
    corrections: int = 0,
) -> Session:
    session = Session(session_id=session_id, active_system=system, created_at=created_at)
    at = created_at
    for _ in range(n_turns):
        session.turns.append(make_turn(user_text, system_text, system, at))
        at = at + timedelta(seconds=30)
    kinds = (
        [(FeedbackKind.LIKE, None)] * likes
        + [(FeedbackKind.DISLIKE, None)] * dislikes
        + [(FeedbackKind.FEEDBACK, "a comment")] * comments
        + [(FeedbackKind.IMPROVE_RESPONSE, "say it better")] * corrections
    )
    for i, (kind, payload) in enumerate(kinds):
        session.feedback.append(
            FeedbackEvent(kind=kind, turn_index=i % max(n_turns, 1), payload=payload, timestamp=at)
        )
    return session


def ingest_session(store: DialogStore, session: Session, user_meta: dict | None = None) -> None:
    """Replay a hand-built session into a store as its event sequence."""
    store.record_session_started(session, user_meta)
    running_state = SharedDialogState()
    for i, turn in enumerate(session.turns):
        if i == len(session.turns) - 1:
            running_state = session.state
        store.record_turn(session.session_id, turn, running_state)
    for fb in session.feedback:
        store.record_feedback(session.session_id, fb)
    if session.status.value == "ENDED":
        store.record_session_ended(session.session_id)
