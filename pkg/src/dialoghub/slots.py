"""Slot extraction from user utterances, shared-state merging across
hand-offs, and keyword-based domain detection for topic routing.

Extraction is deliberately rule-based (gazetteer + pattern): whole-word
matching after lowercasing, no stemming, so behavior is predictable and
an ML extractor can later implement the same contract. All operations
here are pure functions.
"""

from __future__ import annotations

import enum
import re
import string
from dataclasses import dataclass
from importlib import resources

from .errors import ModelInvariantError, StaleTurnError
from .model import SharedDialogState, SlotValue


class ExtractorKind(str, enum.Enum):
    GAZETTEER = "GAZETTEER"
    PATTERN = "PATTERN"


@dataclass(frozen=True)
class SlotExtractor:
    """One slot's extraction rule: a word list (GAZETTEER) or regex
    patterns (PATTERN). Matching is case-insensitive on word boundaries;
    the returned value is the matched surface string, casing preserved."""

    name: str
    kind: ExtractorKind
    data: tuple[str, ...]

    def compile(self) -> re.Pattern:
        if self.kind is ExtractorKind.GAZETTEER:
            # Longest entries first so "New York" beats a hypothetical "York".
            entries = sorted(self.data, key=len, reverse=True)
            body = "|".join(re.escape(e) for e in entries)
        else:
            body = "|".join(f"(?:{p})" for p in self.data)
        return re.compile(rf"\b(?:{body})\b", re.IGNORECASE)


@dataclass(frozen=True)
class SlotSchema:
    extractors: tuple[SlotExtractor, ...]

    def __post_init__(self) -> None:
        names = [e.name for e in self.extractors]
        if len(names) != len(set(names)):
            raise ModelInvariantError("slot names must be unique")

    @property
    def slot_names(self) -> frozenset[str]:
        return frozenset(e.name for e in self.extractors)


@dataclass(frozen=True)
class DomainRule:
    """Trigger keywords for one domain. Keyword sets may overlap across
    domains; ties are broken by rule order in detect_domain."""

    domain: str
    keywords: frozenset[str]

    def __post_init__(self) -> None:
        if not self.keywords:
            raise ModelInvariantError(f"domain rule {self.domain!r} needs at least one keyword")
        for kw in self.keywords:
            if kw != kw.lower():
                raise ModelInvariantError(f"keywords must be lowercase, got {kw!r}")


_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation characters, split on whitespace."""
    return text.lower().translate(_PUNCT_TABLE).split()


def extract_slots(utterance_text: str, schema: SlotSchema) -> dict[str, str]:
    """Run every extractor over the text; return slot -> matched surface
    string for the slots that matched (leftmost match wins per slot)."""
    found: dict[str, str] = {}
    for extractor in schema.extractors:
        match = extractor.compile().search(utterance_text)
        if match:
            found[extractor.name] = match.group(0)
    return found


def merge_state(
    state: SharedDialogState,
    updates: dict[str, str],
    source: str,
    turn: int,
) -> SharedDialogState:
    """Last-write-wins merge of slot updates into the shared state.

    Untouched slots are preserved; every written slot records provenance
    (source system and turn). `turn` may not go backwards relative to any
    slot already set.
    """
    if state.slots:
        newest = max(sv.set_at_turn for sv in state.slots.values())
        if turn < newest:
            raise StaleTurnError(f"merge at turn {turn} behind existing turn {newest}")
    merged = state.copy()
    for name, value in updates.items():
        merged.slots[name] = SlotValue(value=value, source_system=source, set_at_turn=turn)
    return merged


def detect_domain(utterance_text: str, rules: list[DomainRule]) -> str | None:
    """The domain whose keywords hit the most tokens (whole-word,
    case-insensitive). Ties break by rule order; zero hits returns None,
    meaning "stay with the current system"."""
    tokens = tokenize(utterance_text)
    best: str | None = None
    best_hits = 0
    for rule in rules:
        hits = sum(1 for t in tokens if t in rule.keywords)
        if hits > best_hits:
            best, best_hits = rule.domain, hits
    return best


def _builtin_cities() -> tuple[str, ...]:
    raw = resources.files("dialoghub.data").joinpath("cities.txt").read_text(encoding="utf-8")
    return tuple(
        line.strip() for line in raw.splitlines() if line.strip() and not line.startswith("#")
    )


DATE_PATTERNS = (
    r"today",
    r"tomorrow",
    r"monday",
    r"tuesday",
    r"wednesday",
    r"thursday",
    r"friday",
    r"saturday",
    r"sunday",
    r"\d{4}-\d{2}-\d{2}",
)


def default_schema() -> SlotSchema:
    """The stock schema: a `city` gazetteer (~200 names) and a `date`
    pattern slot (today/tomorrow, weekday names, ISO dates)."""
    return SlotSchema(
        extractors=(
            SlotExtractor(name="city", kind=ExtractorKind.GAZETTEER, data=_builtin_cities()),
            SlotExtractor(name="date", kind=ExtractorKind.PATTERN, data=DATE_PATTERNS),
        )
    )


def default_domain_rules() -> list[DomainRule]:
    return [
        DomainRule("weather", frozenset({"weather", "forecast", "temperature", "rain", "snow", "sunny"})),
        DomainRule("restaurant", frozenset({"restaurant", "restaurants", "food", "eat", "dinner", "lunch", "menu"})),
        DomainRule("game", frozenset({"game", "games", "play", "trivia", "quiz"})),
        DomainRule("chat", frozenset({"chat", "talk", "bored", "joke"})),
    ]
