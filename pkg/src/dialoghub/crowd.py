"""Annotation-project tooling: task bundle assembly with golden and
duplicate items, payment suggestion, worker quality screening, and
inter-annotator agreement statistics (Cohen's kappa for two raters,
Fleiss' kappa for three or more).

Everything is pure computation over value objects; bundles built from
the same seed are byte-identical so task layouts are replayable.
"""

from __future__ import annotations

import enum
import html
import json
import math
import random
import statistics
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_CEILING, Decimal

from .errors import (
    IncompleteSubmissionError,
    InvalidProjectError,
    NonpositiveInputError,
    NoSubmissionsError,
    TooFewRatersError,
    UnknownLabelError,
)

MISSING = None  # matrix cell for "this rater did not label this item"


# --- project definition --------------------------------------------------------


@dataclass(frozen=True)
class LabeledExample:
    """An example (or counterexample) item with its label and a mandatory
    explanation of why the label is right (or wrong)."""

    item: str
    label: str
    explanation: str


@dataclass(frozen=True)
class TaskItem:
    item_id: str
    content: str


@dataclass(frozen=True)
class GoldenItem:
    """An item with a known correct label, injected to measure worker accuracy."""

    item_id: str
    content: str
    expected_label: str


@dataclass
class CrowdProject:
    title: str
    instructions: str
    label_set: tuple[str, ...]
    items: tuple[TaskItem, ...]
    examples: tuple[LabeledExample, ...] = ()
    counterexamples: tuple[LabeledExample, ...] = ()
    golden: tuple[GoldenItem, ...] = ()
    duplicate_rate: float = 0.0
    consent_text: str | None = None
    guidance_links: tuple[str, ...] = ()
    estimated_seconds_per_item: int = 30
    style: dict = field(default_factory=dict)

    def validate(self) -> None:
        if len(self.label_set) < 2:
            raise InvalidProjectError("label_set needs at least 2 labels")
        if len(set(self.label_set)) != len(self.label_set):
            raise InvalidProjectError("label_set has duplicate labels")
        if not self.items:
            raise InvalidProjectError("project has no items")
        ids = [it.item_id for it in self.items] + [g.item_id for g in self.golden]
        if len(ids) != len(set(ids)):
            raise InvalidProjectError("item ids must be unique across items and golden")
        for g in self.golden:
            if g.expected_label not in self.label_set:
                raise InvalidProjectError(f"golden {g.item_id!r} expects unknown label {g.expected_label!r}")
        if not 0.0 <= self.duplicate_rate <= 1.0:
            raise InvalidProjectError("duplicate_rate must be in [0, 1]")
        for ex in self.examples + self.counterexamples:
            if not ex.explanation.strip():
                raise InvalidProjectError("every example and counterexample needs an explanation")
        if self.estimated_seconds_per_item <= 0:
            raise InvalidProjectError("estimated_seconds_per_item must be positive")


# --- task bundles ---------------------------------------------------------------


class PresentedKind(str, enum.Enum):
    ITEM = "ITEM"
    GOLDEN = "GOLDEN"
    DUPLICATE = "DUPLICATE"


@dataclass(frozen=True)
class PresentedItem:
    presented_index: int
    item_id: str
    content: str
    kind: PresentedKind
    duplicate_of: int | None = None  # presented_index of the original ITEM

    def to_dict(self) -> dict:
        return {
            "presented_index": self.presented_index,
            "item_id": self.item_id,
            "content": self.content,
            "kind": self.kind.value,
            "duplicate_of": self.duplicate_of,
        }


@dataclass(frozen=True)
class BundleSection:
    kind: str  # CONSENT | INSTRUCTIONS | EXAMPLES | COUNTEREXAMPLES | LINKS
    heading: str
    body: str


@dataclass
class TaskBundle:
    """One rendered annotation task: ordered presentation sequence plus the
    instruction/consent sections, self-contained enough to hand to any
    crowdsourcing platform as a single linked page."""

    title: str
    label_set: tuple[str, ...]
    seed: int
    sequence: tuple[PresentedItem, ...]
    sections: tuple[BundleSection, ...]
    golden_answers: dict[str, str]
    estimated_seconds_per_item: int

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "label_set": list(self.label_set),
            "seed": self.seed,
            "sequence": [p.to_dict() for p in self.sequence],
            "sections": [{"kind": s.kind, "heading": s.heading, "body": s.body} for s in self.sections],
            "golden_answers": dict(sorted(self.golden_answers.items())),
            "estimated_seconds_per_item": self.estimated_seconds_per_item,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "TaskBundle":
        return cls(
            title=d["title"],
            label_set=tuple(d["label_set"]),
            seed=d["seed"],
            sequence=tuple(
                PresentedItem(
                    presented_index=p["presented_index"],
                    item_id=p["item_id"],
                    content=p["content"],
                    kind=PresentedKind(p["kind"]),
                    duplicate_of=p.get("duplicate_of"),
                )
                for p in d["sequence"]
            ),
            sections=tuple(BundleSection(s["kind"], s["heading"], s["body"]) for s in d["sections"]),
            golden_answers=dict(d["golden_answers"]),
            estimated_seconds_per_item=d["estimated_seconds_per_item"],
        )

    def to_html(self) -> str:
        parts = [
            "<!doctype html>",
            "<html><head><meta charset='utf-8'>",
            f"<title>{html.escape(self.title)}</title>",
            "<style>body{font-family:sans-serif;max-width:48em;margin:2em auto;}"
            ".item{border:1px solid #ccc;padding:0.8em;margin:0.6em 0;}"
            ".explanation{color:#555;font-style:italic;}</style>",
            "</head><body>",
            f"<h1>{html.escape(self.title)}</h1>",
        ]
        for section in self.sections:
            parts.append(f"<h2>{html.escape(section.heading)}</h2>")
            parts.append(f"<div class='{section.kind.lower()}'>{section.body}</div>")
        parts.append("<h2>Items</h2><form>")
        for p in self.sequence:
            parts.append(f"<div class='item' data-index='{p.presented_index}'>")
            parts.append(f"<p>{html.escape(p.content)}</p>")
            for label in self.label_set:
                parts.append(
                    f"<label><input type='radio' name='q{p.presented_index}' "
                    f"value='{html.escape(label)}'> {html.escape(label)}</label> "
                )
            parts.append("</div>")
        parts.append("<h2>Feedback</h2>")
        parts.append("<textarea name='feedback' rows='4' cols='60' "
                     "placeholder='Anything unclear? Tell us here.'></textarea>")
        parts.append("</form></body></html>")
        return "\n".join(parts)


def _labeled_examples_html(examples: tuple[LabeledExample, ...], wrong: bool) -> str:
    rows = []
    verb = "wrong label" if wrong else "label"
    for ex in examples:
        rows.append(
            "<div class='item'>"
            f"<p>{html.escape(ex.item)}</p>"
            f"<p><b>{verb}:</b> {html.escape(ex.label)}</p>"
            f"<p class='explanation'>{html.escape(ex.explanation)}</p>"
            "</div>"
        )
    return "\n".join(rows)


def _render_sections(project: CrowdProject) -> tuple[BundleSection, ...]:
    sections: list[BundleSection] = []
    if project.consent_text:
        # The consent form always comes first and must be acknowledged
        # before any item is shown.
        sections.append(BundleSection("CONSENT", "Consent", html.escape(project.consent_text)))
    sections.append(BundleSection("INSTRUCTIONS", "Instructions", html.escape(project.instructions)))
    if project.examples:
        sections.append(BundleSection("EXAMPLES", "Examples", _labeled_examples_html(project.examples, wrong=False)))
    if project.counterexamples:
        sections.append(
            BundleSection("COUNTEREXAMPLES", "Counterexamples", _labeled_examples_html(project.counterexamples, wrong=True))
        )
    if project.guidance_links:
        body = "<ul>" + "".join(
            f"<li><a href='{html.escape(u)}'>{html.escape(u)}</a></li>" for u in project.guidance_links
        ) + "</ul>"
        sections.append(BundleSection("LINKS", "Further guidance", body))
    return tuple(sections)


def _adjacency_ok(order: list[tuple[str, PresentedKind, str]]) -> bool:
    # entries are (item_id, kind, content); a DUPLICATE may not sit next
    # to the ITEM it copies.
    for a, b in zip(order, order[1:]):
        if a[0] == b[0] and {a[1], b[1]} == {PresentedKind.ITEM, PresentedKind.DUPLICATE}:
            return False
    return True


def build_task(project: CrowdProject, seed: int) -> TaskBundle:
    """Assemble the seeded presentation sequence: shuffled items with the
    golden items and ceil(duplicate_rate * |items|) duplicates interleaved
    at seeded-random positions, no duplicate adjacent to its original.
    The same seed reproduces the same bundle byte for byte."""
    project.validate()
    rng = random.Random(seed)
    n_duplicates = math.ceil(project.duplicate_rate * len(project.items))
    duplicated = rng.sample(list(project.items), n_duplicates)

    entries: list[tuple[str, PresentedKind, str]] = [
        (it.item_id, PresentedKind.ITEM, it.content) for it in project.items
    ]
    entries += [(g.item_id, PresentedKind.GOLDEN, g.content) for g in project.golden]
    entries += [(it.item_id, PresentedKind.DUPLICATE, it.content) for it in duplicated]

    order = list(entries)
    for _ in range(1000):
        rng.shuffle(order)
        if _adjacency_ok(order):
            break
    else:
        raise InvalidProjectError("cannot lay out duplicates away from their originals")

    original_position = {
        entry[0]: idx for idx, entry in enumerate(order) if entry[1] is PresentedKind.ITEM
    }
    sequence = tuple(
        PresentedItem(
            presented_index=idx,
            item_id=item_id,
            content=content,
            kind=kind,
            duplicate_of=original_position[item_id] if kind is PresentedKind.DUPLICATE else None,
        )
        for idx, (item_id, kind, content) in enumerate(order)
    )
    return TaskBundle(
        title=project.title,
        label_set=project.label_set,
        seed=seed,
        sequence=sequence,
        sections=_render_sections(project),
        golden_answers={g.item_id: g.expected_label for g in project.golden},
        estimated_seconds_per_item=project.estimated_seconds_per_item,
    )


# --- payment ---------------------------------------------------------------------


def suggest_payment(estimated_seconds_per_task: int, hourly_wage: Decimal | str | int) -> Decimal:
    """Per-task payment at the given hourly wage, rounded up to the cent
    and never below one cent. Rounding always favors the worker."""
    wage = Decimal(hourly_wage)
    if estimated_seconds_per_task <= 0 or wage <= 0:
        raise NonpositiveInputError("estimated seconds and hourly wage must be positive")
    payment = (Decimal(estimated_seconds_per_task) * wage / Decimal(3600)).quantize(
        Decimal("0.01"), rounding=ROUND_CEILING
    )
    return max(payment, Decimal("0.01"))


# --- agreement --------------------------------------------------------------------


class KappaKind(str, enum.Enum):
    COHEN = "COHEN"
    FLEISS = "FLEISS"


@dataclass
class AgreementReport:
    percent_agreement: float
    kappa: float
    kappa_kind: KappaKind
    per_item_agreement: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "percent_agreement": self.percent_agreement,
            "kappa": self.kappa,
            "kappa_kind": self.kappa_kind.value,
            "per_item_agreement": dict(sorted(self.per_item_agreement.items())),
        }


def _pairwise_agreement(row: list[str]) -> float:
    pairs = len(row) * (len(row) - 1) // 2
    agreeing = sum(1 for i in range(len(row)) for j in range(i + 1, len(row)) if row[i] == row[j])
    return agreeing / pairs


def _cohen_kappa(rows: list[list[str]], label_set: tuple[str, ...]) -> float:
    n = len(rows)
    observed = sum(1 for a, b in rows if a == b) / n
    first = Counter(a for a, _ in rows)
    second = Counter(b for _, b in rows)
    expected = sum((first[l] / n) * (second[l] / n) for l in label_set)
    if expected >= 1.0 - 1e-12:
        return 1.0 if observed >= 1.0 - 1e-12 else 0.0
    return (observed - expected) / (1 - expected)


def _fleiss_kappa(rows: list[list[str]], label_set: tuple[str, ...]) -> float:
    # Generalized to unequal raters per item (missing labels already
    # dropped): with equal raters it reduces to the textbook formula.
    p_observed = []
    label_totals: Counter[str] = Counter()
    total_labels = 0
    for row in rows:
        n_i = len(row)
        counts = Counter(row)
        label_totals.update(counts)
        total_labels += n_i
        p_observed.append((sum(c * c for c in counts.values()) - n_i) / (n_i * (n_i - 1)))
    p_bar = sum(p_observed) / len(p_observed)
    p_expected = sum((label_totals[l] / total_labels) ** 2 for l in label_set)
    if p_expected >= 1.0 - 1e-12:
        return 1.0 if p_bar >= 1.0 - 1e-12 else 0.0
    return (p_bar - p_expected) / (1 - p_expected)


def agreement(
    labels_matrix: list[list[str | None]],
    label_set: tuple[str, ...] | list[str],
    item_ids: list[str] | None = None,
) -> AgreementReport:
    """Chance-corrected agreement over an items x raters label matrix.

    Cells may be MISSING (None); items keep a row only while they have at
    least two non-missing labels. Two raters yields Cohen's kappa, three
    or more Fleiss'.
    """
    label_set = tuple(label_set)
    if not labels_matrix or len(labels_matrix[0]) < 2:
        raise TooFewRatersError("agreement needs at least 2 raters")
    n_raters = len(labels_matrix[0])
    for row in labels_matrix:
        if len(row) != n_raters:
            raise TooFewRatersError("each item needs a label cell for every rater")
        for cell in row:
            if cell is not MISSING and cell not in label_set:
                raise UnknownLabelError(f"label {cell!r} not in label set")
    if item_ids is None:
        item_ids = [str(i) for i in range(len(labels_matrix))]

    kept_ids: list[str] = []
    kept_rows: list[list[str]] = []
    for item_id, row in zip(item_ids, labels_matrix):
        present = [cell for cell in row if cell is not MISSING]
        if len(present) >= 2:
            kept_ids.append(item_id)
            kept_rows.append(present)
    if not kept_rows:
        raise TooFewRatersError("no item has two or more labels")

    per_item = {item_id: _pairwise_agreement(row) for item_id, row in zip(kept_ids, kept_rows)}
    percent = sum(per_item.values()) / len(per_item)
    if n_raters == 2:
        kappa = _cohen_kappa([row for row in kept_rows if len(row) == 2], label_set)
        kind = KappaKind.COHEN
    else:
        kappa = _fleiss_kappa(kept_rows, label_set)
        kind = KappaKind.FLEISS
    return AgreementReport(
        percent_agreement=percent, kappa=kappa, kappa_kind=kind, per_item_agreement=per_item
    )


# --- submissions and worker quality ------------------------------------------------


@dataclass(frozen=True)
class Answer:
    presented_index: int
    item_ref: str
    label: str
    elapsed_seconds: float


@dataclass
class WorkerSubmission:
    worker_id: str
    answers: tuple[Answer, ...]
    feedback_text: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "WorkerSubmission":
        return cls(
            worker_id=d["worker_id"],
            answers=tuple(
                Answer(
                    presented_index=a["presented_index"],
                    item_ref=a["item_ref"],
                    label=a["label"],
                    elapsed_seconds=float(a["elapsed_seconds"]),
                )
                for a in d["answers"]
            ),
            feedback_text=d.get("feedback_text"),
        )


class WorkerFlag(str, enum.Enum):
    STRAIGHT_LINING = "STRAIGHT_LINING"
    TOO_FAST = "TOO_FAST"
    GOLDEN_FAIL = "GOLDEN_FAIL"


@dataclass(frozen=True)
class QualityThresholds:
    """Bot-screening knobs; the defaults are starting points, not dogma."""

    straight_line_share: float = 0.9
    straight_line_min_answers: int = 10
    too_fast_factor: float = 0.25
    golden_fail_below: float = 0.5


DEFAULT_THRESHOLDS = QualityThresholds()


@dataclass
class WorkerQuality:
    worker_id: str
    golden_accuracy: float
    duplicate_consistency: float
    median_seconds: float
    flags: frozenset[WorkerFlag]

    def to_dict(self) -> dict:
        return {
            "worker_id": self.worker_id,
            "golden_accuracy": self.golden_accuracy,
            "duplicate_consistency": self.duplicate_consistency,
            "median_seconds": self.median_seconds,
            "flags": sorted(f.value for f in self.flags),
        }


def worker_quality(
    submission: WorkerSubmission,
    bundle: TaskBundle,
    thresholds: QualityThresholds = DEFAULT_THRESHOLDS,
) -> WorkerQuality:
    """Screen one submission against the bundle's golden items, duplicate
    pairs, and timing expectations."""
    expected_indices = {p.presented_index for p in bundle.sequence}
    answered = {a.presented_index for a in submission.answers}
    if answered != expected_indices or len(submission.answers) != len(bundle.sequence):
        raise IncompleteSubmissionError(
            f"submission covers {len(answered)}/{len(expected_indices)} presented items"
        )
    for a in submission.answers:
        if a.label not in bundle.label_set:
            raise UnknownLabelError(f"label {a.label!r} not in label set")

    by_index = {a.presented_index: a for a in submission.answers}

    golden_total = golden_right = 0
    for p in bundle.sequence:
        if p.kind is PresentedKind.GOLDEN:
            golden_total += 1
            if by_index[p.presented_index].label == bundle.golden_answers[p.item_id]:
                golden_right += 1
    golden_accuracy = golden_right / golden_total if golden_total else 1.0

    dup_total = dup_same = 0
    for p in bundle.sequence:
        if p.kind is PresentedKind.DUPLICATE:
            dup_total += 1
            if by_index[p.presented_index].label == by_index[p.duplicate_of].label:
                dup_same += 1
    duplicate_consistency = dup_same / dup_total if dup_total else 1.0

    median_seconds = statistics.median(a.elapsed_seconds for a in submission.answers)

    flags: set[WorkerFlag] = set()
    label_counts = Counter(a.label for a in submission.answers)
    n_answers = len(submission.answers)
    if n_answers >= thresholds.straight_line_min_answers:
        if max(label_counts.values()) / n_answers >= thresholds.straight_line_share:
            flags.add(WorkerFlag.STRAIGHT_LINING)
    if median_seconds < thresholds.too_fast_factor * bundle.estimated_seconds_per_item:
        flags.add(WorkerFlag.TOO_FAST)
    if golden_accuracy < thresholds.golden_fail_below:
        flags.add(WorkerFlag.GOLDEN_FAIL)

    return WorkerQuality(
        worker_id=submission.worker_id,
        golden_accuracy=golden_accuracy,
        duplicate_consistency=duplicate_consistency,
        median_seconds=median_seconds,
        flags=frozenset(flags),
    )


# --- project-level statistics -------------------------------------------------------


@dataclass
class TimeStats:
    mean_seconds: float
    median_seconds: float
    min_seconds: float
    max_seconds: float
    total_seconds: float

    def to_dict(self) -> dict:
        return {
            "mean_seconds": self.mean_seconds,
            "median_seconds": self.median_seconds,
            "min_seconds": self.min_seconds,
            "max_seconds": self.max_seconds,
            "total_seconds": self.total_seconds,
        }


@dataclass
class ProjectStatistics:
    worker_reports: dict[str, WorkerQuality]
    flagged_workers: frozenset[str]
    included_workers: tuple[str, ...]
    label_distribution: dict[str, int]
    time_stats: TimeStats
    agreement: AgreementReport | None

    def to_dict(self) -> dict:
        return {
            "worker_reports": {w: r.to_dict() for w, r in sorted(self.worker_reports.items())},
            "flagged_workers": sorted(self.flagged_workers),
            "included_workers": list(self.included_workers),
            "label_distribution": dict(sorted(self.label_distribution.items())),
            "time_stats": self.time_stats.to_dict(),
            "agreement": self.agreement.to_dict() if self.agreement else None,
        }


def project_statistics(
    submissions: list[WorkerSubmission],
    bundle: TaskBundle,
    include_flagged: bool = False,
    thresholds: QualityThresholds = DEFAULT_THRESHOLDS,
) -> ProjectStatistics:
    """Aggregate screening, timing, label patterns, and agreement across
    workers. Flagged workers are excluded from the agreement matrix and
    label/time aggregates unless include_flagged is set.

    The agreement matrix covers the project's original items only (golden
    items measure accuracy, not consensus), one answer per worker per
    item, raters ordered by worker_id.
    """
    if not submissions:
        raise NoSubmissionsError("need at least one submission")
    reports = {s.worker_id: worker_quality(s, bundle, thresholds) for s in submissions}
    flagged = frozenset(w for w, r in reports.items() if r.flags)
    included = tuple(
        sorted(s.worker_id for s in submissions if include_flagged or s.worker_id not in flagged)
    )
    by_worker = {s.worker_id: s for s in submissions}

    all_seconds = [a.elapsed_seconds for w in included for a in by_worker[w].answers]
    label_distribution = Counter(a.label for w in included for a in by_worker[w].answers)
    time_stats = TimeStats(
        mean_seconds=statistics.fmean(all_seconds) if all_seconds else 0.0,
        median_seconds=statistics.median(all_seconds) if all_seconds else 0.0,
        min_seconds=min(all_seconds, default=0.0),
        max_seconds=max(all_seconds, default=0.0),
        total_seconds=sum(all_seconds),
    )

    report: AgreementReport | None = None
    if len(included) >= 2:
        item_order = [p for p in bundle.sequence if p.kind is PresentedKind.ITEM]
        matrix: list[list[str | None]] = []
        for p in item_order:
            row: list[str | None] = []
            for worker in included:
                answer = next(
                    (a for a in by_worker[worker].answers if a.presented_index == p.presented_index),
                    None,
                )
                row.append(answer.label if answer else MISSING)
            matrix.append(row)
        report = agreement(matrix, bundle.label_set, item_ids=[p.item_id for p in item_order])

    return ProjectStatistics(
        worker_reports=reports,
        flagged_workers=flagged,
        included_workers=included,
        label_distribution=dict(label_distribution),
        time_stats=time_stats,
        agreement=report,
    )


def render_statistics_report(stats: ProjectStatistics) -> str:
    """Human-readable text report alongside the structured export."""
    lines = ["Project statistics", "=================="]
    lines.append(f"workers: {len(stats.worker_reports)} "
                 f"(flagged: {len(stats.flagged_workers)}, in aggregates: {len(stats.included_workers)})")
    ts = stats.time_stats
    lines.append(
        f"time per answer: mean {ts.mean_seconds:.1f}s, median {ts.median_seconds:.1f}s, "
        f"range {ts.min_seconds:.1f}-{ts.max_seconds:.1f}s"
    )
    lines.append("label distribution:")
    total = sum(stats.label_distribution.values()) or 1
    for label, count in sorted(stats.label_distribution.items(), key=lambda kv: (-kv[1], kv[0])):
        lines.append(f"  {label}: {count} ({100.0 * count / total:.1f}%)")
    if stats.agreement is not None:
        a = stats.agreement
        lines.append(
            f"agreement: {a.kappa_kind.value.title()} kappa {a.kappa:.4f}, "
            f"raw agreement {a.percent_agreement:.4f}"
        )
    else:
        lines.append("agreement: not computable (fewer than 2 included workers)")
    for worker_id, report in sorted(stats.worker_reports.items()):
        flag_text = ", ".join(sorted(f.value for f in report.flags)) or "clean"
        lines.append(
            f"  worker {worker_id}: golden {report.golden_accuracy:.2f}, "
            f"duplicates {report.duplicate_consistency:.2f}, "
            f"median {report.median_seconds:.1f}s [{flag_text}]"
        )
    return "\n".join(lines)
