from datetime import timedelta, timezone

import pytest
from hypothesis import given, strategies as st

from dialoghub.errors import MissingPayloadError, ModelInvariantError
from dialoghub.model import (
    FeedbackEvent,
    FeedbackKind,
    Session,
    SessionStatus,
    SharedDialogState,
    Side,
    SlotValue,
    Turn,
    Utterance,
    count_units,
    format_ts,
    is_usable,
    parse_ts,
    utc_now,
)
from helpers import TickingClock, make_session


class TestCounts:
    def test_four_turns_is_eight_utterances(self):
        session = make_session("s1", "sys-a", TickingClock()(), n_turns=4)
        assert count_units(session) == {"turns": 4, "utterances": 8}

    def test_empty_session(self):
        session = make_session("s1", "sys-a", TickingClock()(), n_turns=0)
        assert count_units(session) == {"turns": 0, "utterances": 0}

    def test_three_turns(self):
        session = make_session("s1", "sys-a", TickingClock()(), n_turns=3)
        assert count_units(session) == {"turns": 3, "utterances": 6}

    def test_feedback_does_not_change_counts(self):
        session = make_session("s1", "sys-a", TickingClock()(), n_turns=2, likes=3, comments=2)
        assert count_units(session) == {"turns": 2, "utterances": 4}

    @given(n=st.integers(min_value=0, max_value=30))
    def test_utterances_always_twice_turns(self, n):
        session = make_session("s", "sys-a", parse_ts("2026-01-01T00:00:00.000Z"), n_turns=n)
        units = count_units(session)
        assert units["utterances"] == 2 * units["turns"]


class TestUsable:
    def test_four_turn_session_is_usable(self):
        assert is_usable(make_session("s", "a", utc_now(), 4), min_turns=4) is True

    def test_three_turn_session_is_not(self):
        assert is_usable(make_session("s", "a", utc_now(), 3), min_turns=4) is False

    def test_zero_threshold(self):
        assert is_usable(make_session("s", "a", utc_now(), 0), min_turns=0) is True

    def test_default_threshold_is_four(self):
        assert is_usable(make_session("s", "a", utc_now(), 4))
        assert not is_usable(make_session("s", "a", utc_now(), 3))

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            is_usable(make_session("s", "a", utc_now(), 1), min_turns=-1)


class TestInvariants:
    def test_empty_user_text_rejected(self):
        with pytest.raises(ModelInvariantError):
            Utterance(side=Side.USER, text="", timestamp=utc_now())

    def test_empty_system_text_allowed_as_placeholder(self):
        Utterance(side=Side.SYSTEM, text="", timestamp=utc_now())

    def test_turn_sides_enforced(self):
        now = utc_now()
        user = Utterance(side=Side.USER, text="hi", timestamp=now)
        system = Utterance(side=Side.SYSTEM, text="hello", timestamp=now)
        with pytest.raises(ModelInvariantError):
            Turn(user=system, system=system, responder="x")
        with pytest.raises(ModelInvariantError):
            Turn(user=user, system=user, responder="x")

    def test_feedback_payload_required_for_comment_kinds(self):
        for kind in (FeedbackKind.FEEDBACK, FeedbackKind.IMPROVE_RESPONSE):
            with pytest.raises(MissingPayloadError):
                FeedbackEvent(kind=kind, turn_index=0, payload=None, timestamp=utc_now())
            with pytest.raises(MissingPayloadError):
                FeedbackEvent(kind=kind, turn_index=0, payload="", timestamp=utc_now())

    def test_feedback_payload_forbidden_for_button_kinds(self):
        for kind in (FeedbackKind.LIKE, FeedbackKind.DISLIKE, FeedbackKind.END_CONVERSATION):
            with pytest.raises(ModelInvariantError):
                FeedbackEvent(kind=kind, turn_index=0, payload="nope", timestamp=utc_now())
            FeedbackEvent(kind=kind, turn_index=0, payload=None, timestamp=utc_now())

    def test_negative_turn_index_rejected(self):
        with pytest.raises(ModelInvariantError):
            FeedbackEvent(kind=FeedbackKind.LIKE, turn_index=-1, timestamp=utc_now())


# ms-truncated UTC instants, within a sane range
timestamps = st.datetimes(
    min_value=parse_ts("2020-01-01T00:00:00.000Z").replace(tzinfo=None),
    max_value=parse_ts("2030-12-31T23:59:59.000Z").replace(tzinfo=None),
).map(lambda dt: dt.replace(microsecond=(dt.microsecond // 1000) * 1000, tzinfo=timezone.utc))

texts = st.text(min_size=1, max_size=40).filter(lambda s: s.strip())


@st.composite
def sessions(draw):
    created = draw(timestamps)
    session = Session(session_id=draw(st.uuids()).hex, active_system="sys-a", created_at=created)
    at = created
    for _ in range(draw(st.integers(0, 5))):
        at = at + timedelta(seconds=1)
        session.turns.append(
            Turn(
                user=Utterance(side=Side.USER, text=draw(texts), timestamp=at),
                system=Utterance(side=Side.SYSTEM, text=draw(texts), timestamp=at),
                responder=draw(st.sampled_from(["sys-a", "sys-b"])),
                latency_ms=draw(st.integers(0, 5000)),
            )
        )
    if session.turns:
        for _ in range(draw(st.integers(0, 3))):
            kind = draw(st.sampled_from(list(FeedbackKind)))
            payload = draw(texts) if kind in (FeedbackKind.FEEDBACK, FeedbackKind.IMPROVE_RESPONSE) else None
            session.feedback.append(
                FeedbackEvent(
                    kind=kind,
                    turn_index=draw(st.integers(0, len(session.turns) - 1)),
                    payload=payload,
                    timestamp=at,
                )
            )
    slots = draw(st.dictionaries(st.sampled_from(["city", "date"]), texts, max_size=2))
    session.state = SharedDialogState(
        slots={k: SlotValue(value=v, source_system="sys-a", set_at_turn=0) for k, v in slots.items()}
    )
    if draw(st.booleans()):
        session.status = SessionStatus.ENDED
    return session


class TestRoundTrip:
    @given(session=sessions())
    def test_session_round_trip(self, session):
        assert Session.from_dict(session.to_dict()) == session

    @given(ts=timestamps)
    def test_timestamp_round_trip(self, ts):
        assert parse_ts(format_ts(ts)) == ts

    def test_timestamp_format_is_rfc3339_with_ms(self):
        ts = parse_ts("2026-08-10T03:04:05.067Z")
        assert format_ts(ts) == "2026-08-10T03:04:05.067Z"

    def test_utc_now_is_ms_truncated(self):
        assert utc_now().microsecond % 1000 == 0
