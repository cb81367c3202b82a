"""Dashboard computations over store snapshots: per-system summaries,
dialog filtering and ranking, n-gram frequencies, collection-progress
series, usable-dialog cost accounting, and the pluggable quality-scorer
socket.

Everything here is a pure read over immutable session snapshots; at the
scale this gateway targets (thousands of dialogs) a full recompute is
well under a second, so there are no incremental caches.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Protocol, Sequence

from .errors import InvalidFilterError, UnknownRankAttributeError, UnknownSystemError
from .model import FeedbackKind, Session, Side, count_units, is_usable
from .slots import tokenize
from .store import DialogStore

DEFAULT_MIN_TURNS = 4

BUCKETS = ("HOUR", "DAY", "WEEK")

RANK_ATTRIBUTES = ("turns", "utterances", "likes", "dislikes", "created_at", "quality")


def likes(session: Session) -> int:
    return sum(1 for fb in session.feedback if fb.kind is FeedbackKind.LIKE)


def dislikes(session: Session) -> int:
    return sum(1 for fb in session.feedback if fb.kind is FeedbackKind.DISLIKE)


def participated(session: Session, system_id: str) -> bool:
    """A dialog belongs to a system if the system answered at least one
    turn, or was assigned to a session that never produced a turn."""
    if any(t.responder == system_id for t in session.turns):
        return True
    return not session.turns and session.active_system == system_id


# --- filtering ---------------------------------------------------------------


@dataclass
class DialogFilter:
    """Conjunction of optional predicates; an empty filter matches all.

    Threshold strictness is explicit: strict means "more than n",
    non-strict means "at least n" (spans the dashboard's "more than
    n turns / more than 3 utterances" style filters).
    """

    system_id: str | None = None
    min_turns: int | None = None
    min_turns_strict: bool = False
    min_utterances: int | None = None
    min_utterances_strict: bool = False
    min_likes: int | None = None
    max_likes: int | None = None
    contains_phrase: str | None = None
    phrase_side: Side | None = None  # None scopes the phrase to both sides
    created_after: datetime | None = None
    created_before: datetime | None = None

    def validate(self) -> None:
        for name in ("min_turns", "min_utterances", "min_likes", "max_likes"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise InvalidFilterError(f"{name} must be >= 0")
        if self.min_likes is not None and self.max_likes is not None and self.min_likes > self.max_likes:
            raise InvalidFilterError("min_likes exceeds max_likes")
        if (
            self.created_after is not None
            and self.created_before is not None
            and self.created_after > self.created_before
        ):
            raise InvalidFilterError("created_after is later than created_before")
        if self.contains_phrase is not None and not self.contains_phrase.strip():
            raise InvalidFilterError("contains_phrase must be non-empty")

    def matches(self, session: Session) -> bool:
        units = count_units(session)
        if self.system_id is not None and not participated(session, self.system_id):
            return False
        if self.min_turns is not None:
            if self.min_turns_strict and not units["turns"] > self.min_turns:
                return False
            if not self.min_turns_strict and not units["turns"] >= self.min_turns:
                return False
        if self.min_utterances is not None:
            if self.min_utterances_strict and not units["utterances"] > self.min_utterances:
                return False
            if not self.min_utterances_strict and not units["utterances"] >= self.min_utterances:
                return False
        n_likes = likes(session)
        if self.min_likes is not None and n_likes < self.min_likes:
            return False
        if self.max_likes is not None and n_likes > self.max_likes:
            return False
        if self.contains_phrase is not None and not self._phrase_hits(session):
            return False
        if self.created_after is not None and session.created_at < self.created_after:
            return False
        if self.created_before is not None and session.created_at > self.created_before:
            return False
        return True

    def _phrase_hits(self, session: Session) -> bool:
        needle = self.contains_phrase.lower()
        for turn in session.turns:
            for utt in (turn.user, turn.system):
                if self.phrase_side is not None and utt.side is not self.phrase_side:
                    continue
                if needle in utt.text.lower():
                    return True
        return False

    def to_dict(self) -> dict:
        out: dict = {}
        for name in (
            "system_id",
            "min_turns",
            "min_turns_strict",
            "min_utterances",
            "min_utterances_strict",
            "min_likes",
            "max_likes",
            "contains_phrase",
        ):
            value = getattr(self, name)
            if value not in (None, False):
                out[name] = value
        if self.phrase_side is not None:
            out["phrase_side"] = self.phrase_side.value
        if self.created_after is not None:
            out["created_after"] = self.created_after.isoformat()
        if self.created_before is not None:
            out["created_before"] = self.created_before.isoformat()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "DialogFilter":
        from .model import parse_ts

        known = {
            "system_id",
            "min_turns",
            "min_turns_strict",
            "min_utterances",
            "min_utterances_strict",
            "min_likes",
            "max_likes",
            "contains_phrase",
            "phrase_side",
            "created_after",
            "created_before",
        }
        unknown = set(d) - known
        if unknown:
            raise InvalidFilterError(f"unknown filter fields: {sorted(unknown)}")
        kwargs = dict(d)
        if "phrase_side" in kwargs and kwargs["phrase_side"] is not None:
            try:
                kwargs["phrase_side"] = Side(kwargs["phrase_side"])
            except ValueError:
                raise InvalidFilterError("phrase_side must be USER or SYSTEM") from None
        for key in ("created_after", "created_before"):
            if kwargs.get(key) is not None:
                kwargs[key] = parse_ts(kwargs[key])
        return cls(**kwargs)


# --- quality scoring ----------------------------------------------------------


class QualityScorer(Protocol):
    """Pluggable per-dialog quality metric. Implementations declare their
    own score range and return None when a session cannot be scored."""

    name: str
    score_range: tuple[float, float]

    def score(self, session: Session) -> float | None: ...


class NullScorer:
    """Default scorer: never produces a score (quality column stays absent)."""

    name = "null"
    score_range = (0.0, 1.0)

    def score(self, session: Session) -> float | None:
        return None


class TokenOverlapScorer:
    """Reference scorer exercising the plug interface: mean Jaccard overlap
    between the user and system token sets of each turn, in [0, 1]."""

    name = "token-overlap"
    score_range = (0.0, 1.0)

    def score(self, session: Session) -> float | None:
        if not session.turns:
            return None
        overlaps = []
        for turn in session.turns:
            a, b = set(tokenize(turn.user.text)), set(tokenize(turn.system.text))
            union = a | b
            overlaps.append(len(a & b) / len(union) if union else 0.0)
        return sum(overlaps) / len(overlaps)


SCORERS = {"null": NullScorer, "token-overlap": TokenOverlapScorer}


# --- summaries ----------------------------------------------------------------


@dataclass
class SystemSummary:
    system_id: str
    dialog_count: int = 0
    utterance_count: int = 0
    likes: int = 0
    dislikes: int = 0
    comments: int = 0  # FEEDBACK events
    corrections: int = 0  # IMPROVE_RESPONSE events
    avg_quality: float | None = None
    avg_human_rating: float | None = None

    def to_dict(self) -> dict:
        return {
            "system_id": self.system_id,
            "dialog_count": self.dialog_count,
            "utterance_count": self.utterance_count,
            "likes": self.likes,
            "dislikes": self.dislikes,
            "comments": self.comments,
            "corrections": self.corrections,
            "avg_quality": self.avg_quality,
            "avg_human_rating": self.avg_human_rating,
        }


def _require_known(system_id: str, store: DialogStore) -> None:
    if system_id not in store.known_system_ids():
        raise UnknownSystemError(f"unknown system {system_id!r}")


_FEEDBACK_COUNTERS = {
    FeedbackKind.LIKE: "likes",
    FeedbackKind.DISLIKE: "dislikes",
    FeedbackKind.FEEDBACK: "comments",
    FeedbackKind.IMPROVE_RESPONSE: "corrections",
}


def system_summary(
    system_id: str,
    store: DialogStore,
    scorer: QualityScorer | None = None,
    human_ratings: dict[str, float] | None = None,
) -> SystemSummary:
    """Counts over every turn the system answered, plus the feedback
    attached to those turns. Averages appear only when there is data."""
    _require_known(system_id, store)
    summary = SystemSummary(system_id=system_id)
    quality_scores: list[float] = []
    rating_values: list[float] = []
    for session in store.sessions():
        if not participated(session, system_id):
            continue
        summary.dialog_count += 1
        own_turns = {i for i, t in enumerate(session.turns) if t.responder == system_id}
        summary.utterance_count += 2 * len(own_turns)
        for fb in session.feedback:
            counter = _FEEDBACK_COUNTERS.get(fb.kind)
            if counter is not None and fb.turn_index in own_turns:
                setattr(summary, counter, getattr(summary, counter) + 1)
        if scorer is not None:
            score = scorer.score(session)
            if score is not None:
                quality_scores.append(score)
        if human_ratings and session.session_id in human_ratings:
            rating_values.append(human_ratings[session.session_id])
    if quality_scores:
        summary.avg_quality = sum(quality_scores) / len(quality_scores)
    if rating_values:
        summary.avg_human_rating = sum(rating_values) / len(rating_values)
    return summary


# --- filtering + ranking --------------------------------------------------------


@dataclass(frozen=True)
class RankBy:
    attribute: str
    direction: str = "desc"  # "asc" | "desc"


def filter_and_rank(
    dialog_filter: DialogFilter,
    rank_by: RankBy | None,
    store: DialogStore,
    scorer: QualityScorer | None = None,
) -> list[Session]:
    """Filtered dialogs ordered by the rank attribute; ties break by
    created_at descending, then session_id. No rank means newest first."""
    matched = store.query(dialog_filter)  # validates; newest first
    if rank_by is None:
        return matched
    if rank_by.attribute not in RANK_ATTRIBUTES:
        raise UnknownRankAttributeError(f"cannot rank by {rank_by.attribute!r}")
    if rank_by.direction not in ("asc", "desc"):
        raise UnknownRankAttributeError(f"direction must be asc or desc, got {rank_by.direction!r}")

    def attribute_value(session: Session):
        if rank_by.attribute == "turns":
            return count_units(session)["turns"]
        if rank_by.attribute == "utterances":
            return count_units(session)["utterances"]
        if rank_by.attribute == "likes":
            return likes(session)
        if rank_by.attribute == "dislikes":
            return dislikes(session)
        if rank_by.attribute == "created_at":
            return session.created_at.timestamp()
        score = scorer.score(session) if scorer is not None else None
        return score

    sign = -1 if rank_by.direction == "desc" else 1

    def sort_key(session: Session):
        value = attribute_value(session)
        missing = value is None  # unscored dialogs always sort last
        rank = 0 if missing else sign * value
        return (missing, rank, -session.created_at.timestamp(), session.session_id)

    return sorted(matched, key=sort_key)


# --- n-grams --------------------------------------------------------------------


def ngram_frequencies(
    system_id: str,
    side: Side,
    n: int,
    min_count: int,
    store: DialogStore,
) -> list[tuple[str, int]]:
    """N-gram counts (n in 1..3) over one side of the system's turns,
    within utterance boundaries, sorted by count descending then
    lexicographically. Entries under min_count are dropped."""
    if n not in (1, 2, 3):
        raise ValueError("n must be 1, 2, or 3")
    _require_known(system_id, store)
    counts: Counter[str] = Counter()
    for session in store.sessions():
        for turn in session.turns:
            if turn.responder != system_id:
                continue
            utt = turn.user if side is Side.USER else turn.system
            tokens = tokenize(utt.text)
            for i in range(len(tokens) - n + 1):
                counts[" ".join(tokens[i : i + n])] += 1
    kept = [(gram, c) for gram, c in counts.items() if c >= min_count]
    kept.sort(key=lambda item: (-item[1], item[0]))
    return kept


# --- progress -------------------------------------------------------------------


def _bucket_start(ts: datetime, bucket: str) -> datetime:
    ts = ts.astimezone(timezone.utc)
    if bucket == "HOUR":
        return ts.replace(minute=0, second=0, microsecond=0)
    day = ts.replace(hour=0, minute=0, second=0, microsecond=0)
    if bucket == "DAY":
        return day
    return day - timedelta(days=day.weekday())  # WEEK starts Monday


def _bucket_step(bucket: str) -> timedelta:
    return {"HOUR": timedelta(hours=1), "DAY": timedelta(days=1), "WEEK": timedelta(weeks=1)}[bucket]


def progress_series(system_id: str, bucket: str, store: DialogStore) -> list[tuple[datetime, int]]:
    """New dialogs per time bucket for one system, by session creation
    time; interior empty buckets are emitted with a zero count."""
    if bucket not in BUCKETS:
        raise ValueError(f"bucket must be one of {BUCKETS}")
    _require_known(system_id, store)
    counts: Counter[datetime] = Counter()
    for session in store.sessions():
        if participated(session, system_id):
            counts[_bucket_start(session.created_at, bucket)] += 1
    if not counts:
        return []
    step = _bucket_step(bucket)
    series: list[tuple[datetime, int]] = []
    cursor, last = min(counts), max(counts)
    while cursor <= last:
        series.append((cursor, counts.get(cursor, 0)))
        cursor = cursor + step
    return series


# --- cost accounting -------------------------------------------------------------


@dataclass(frozen=True)
class CostReport:
    usable_dialogs: int
    cost_per_usable: Decimal | None

    def to_dict(self) -> dict:
        return {
            "usable_dialogs": self.usable_dialogs,
            "cost_per_usable": str(self.cost_per_usable) if self.cost_per_usable is not None else None,
        }


def collection_cost(budget: Decimal | str | int, store: DialogStore, min_turns: int = DEFAULT_MIN_TURNS) -> CostReport:
    """Usable-dialog count and budget divided by it, rounded half-up to
    the cent. No usable dialogs means no cost figure."""
    budget = Decimal(budget)
    if budget < 0:
        raise ValueError("budget must be >= 0")
    usable = sum(1 for s in store.sessions() if is_usable(s, min_turns))
    if usable == 0:
        return CostReport(usable_dialogs=0, cost_per_usable=None)
    cost = (budget / usable).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    return CostReport(usable_dialogs=usable, cost_per_usable=cost)
