"""Sentence-level curation: segmentation of candidate texts, teacher
composition with per-sentence provenance, contribution breakdowns, and
the versioned draft/send lifecycle.

Segmentation is lossless over whitespace-canonical text: joining the
sentences of each paragraph with single spaces and the paragraphs with
blank lines reproduces the validated text exactly. Every composed version
is an immutable snapshot; edits create new versions.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime

from .errors import ConfigError, DomainError, NotFoundError, StateError
from .model import from_rfc3339, new_id, to_rfc3339, utcnow
from .validation import (
    CLOSING_TRAILERS,
    TERMINAL_PUNCTUATION,
    ValidationVerdict,
    canonicalize_text,
)

SOURCES = ("gpt", "gemini", "llama", "teacher")

#: Token before a period that never ends a sentence. Configurable per
#: deployment; matched case-insensitively at a word boundary.
DEFAULT_ABBREVIATIONS = (
    "Dr.", "Dra.", "Sr.", "Sra.", "Prof.", "etc.", "e.g.", "i.e.",
    "p. ej.", "vs.", "no.", "núm.",
)

_OPENING_CHARS = set("\"'«“‘¿¡(")

_SOURCE_MARKERS = (("gpt", "gpt"), ("gemini", "gemini"), ("llama", "llama"))


def source_for_provider(provider_id: str, overrides: dict[str, str] | None = None) -> str:
    """Map a provider descriptor id onto a sentence source family."""
    if overrides and provider_id in overrides:
        source = overrides[provider_id]
        if source not in SOURCES:
            raise ConfigError(f"unknown sentence source {source!r}")
        return source
    lowered = provider_id.lower()
    for marker, source in _SOURCE_MARKERS:
        if marker in lowered:
            return source
    raise ConfigError(
        f"cannot infer sentence source from provider id {provider_id!r}; "
        "configure an explicit mapping")


# ---------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class Sentence:
    id: str
    text: str
    source: str
    origin_candidate_id: str | None = None
    origin_sentence_id: str | None = None
    #: Text of the origin sentence at selection time; lets breakdowns be
    #: recomputed without resolving candidate documents.
    origin_text: str | None = None
    edited: bool = False

    def __post_init__(self):
        if self.source not in SOURCES:
            raise DomainError(f"unknown sentence source {self.source!r}")
        if not self.text.strip():
            raise DomainError("sentence text must be non-empty")
        if self.source != "teacher" and not (self.origin_candidate_id and self.origin_sentence_id):
            raise DomainError("LLM-sourced sentences must carry origin references")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "source": self.source,
            "origin_candidate_id": self.origin_candidate_id,
            "origin_sentence_id": self.origin_sentence_id,
            "origin_text": self.origin_text,
            "edited": self.edited,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Sentence:
        return cls(
            id=d["id"],
            text=d["text"],
            source=d["source"],
            origin_candidate_id=d.get("origin_candidate_id"),
            origin_sentence_id=d.get("origin_sentence_id"),
            origin_text=d.get("origin_text"),
            edited=d.get("edited", False),
        )


@dataclass(frozen=True)
class FeedbackCandidate:
    id: str
    instance_id: str
    provider_id: str
    source: str
    paragraphs: tuple[tuple[Sentence, ...], ...]
    verdict: ValidationVerdict
    created_at: datetime

    @property
    def sentences(self) -> tuple[Sentence, ...]:
        return tuple(s for para in self.paragraphs for s in para)

    @property
    def text(self) -> str:
        return "\n\n".join(" ".join(s.text for s in para) for para in self.paragraphs)

    def sentence(self, sentence_id: str) -> Sentence:
        for s in self.sentences:
            if s.id == sentence_id:
                return s
        raise NotFoundError(f"candidate {self.id} has no sentence {sentence_id!r}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "instance_id": self.instance_id,
            "provider_id": self.provider_id,
            "source": self.source,
            "paragraphs": [[s.to_dict() for s in para] for para in self.paragraphs],
            "verdict": self.verdict.to_dict(),
            "created_at": to_rfc3339(self.created_at),
        }

    @classmethod
    def from_dict(cls, d: dict) -> FeedbackCandidate:
        return cls(
            id=d["id"],
            instance_id=d["instance_id"],
            provider_id=d["provider_id"],
            source=d["source"],
            paragraphs=tuple(
                tuple(Sentence.from_dict(s) for s in para) for para in d["paragraphs"]),
            verdict=ValidationVerdict.from_dict(d["verdict"]),
            created_at=from_rfc3339(d["created_at"]),
        )


@dataclass(frozen=True)
class ContributionBreakdown:
    proportions: dict[str, float]
    teacher_modification_extent: float

    def to_dict(self) -> dict:
        return {
            "proportions": {s: self.proportions[s] for s in SOURCES},
            "teacher_modification_extent": self.teacher_modification_extent,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ContributionBreakdown:
        return cls(
            proportions={s: float(d["proportions"].get(s, 0.0)) for s in SOURCES},
            teacher_modification_extent=float(d["teacher_modification_extent"]),
        )

    def display_percentages(self) -> dict[str, int]:
        return {s: round(self.proportions[s] * 100) for s in SOURCES}


@dataclass(frozen=True)
class ComposedFeedback:
    id: str
    instance_id: str
    version: int
    state: str  # draft | sent
    sentences: tuple[Sentence, ...]
    composed_by: str
    breakdown: ContributionBreakdown
    created_at: datetime
    sent_at: datetime | None = None
    #: Set when the teacher explicitly composed from a candidate whose
    #: verdict had not passed.
    includes_unpassed_origin: bool = False
    idempotency_key: str | None = None

    @property
    def text(self) -> str:
        return " ".join(s.text for s in self.sentences)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "instance_id": self.instance_id,
            "version": self.version,
            "state": self.state,
            "sentences": [s.to_dict() for s in self.sentences],
            "composed_by": self.composed_by,
            "breakdown": self.breakdown.to_dict(),
            "created_at": to_rfc3339(self.created_at),
            "sent_at": to_rfc3339(self.sent_at) if self.sent_at else None,
            "includes_unpassed_origin": self.includes_unpassed_origin,
            "idempotency_key": self.idempotency_key,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ComposedFeedback:
        return cls(
            id=d["id"],
            instance_id=d["instance_id"],
            version=int(d["version"]),
            state=d["state"],
            sentences=tuple(Sentence.from_dict(s) for s in d["sentences"]),
            composed_by=d["composed_by"],
            breakdown=ContributionBreakdown.from_dict(d["breakdown"]),
            created_at=from_rfc3339(d["created_at"]),
            sent_at=from_rfc3339(d["sent_at"]) if d.get("sent_at") else None,
            includes_unpassed_origin=d.get("includes_unpassed_origin", False),
            idempotency_key=d.get("idempotency_key"),
        )


# ---------------------------------------------------------------------------
# Segmentation


def _ends_with_abbreviation(head: str, abbreviations: tuple[str, ...]) -> bool:
    lowered = head.lower()
    for abbr in abbreviations:
        a = abbr.lower()
        if lowered.endswith(a):
            boundary = len(lowered) - len(a)
            if boundary == 0 or not lowered[boundary - 1].isalnum():
                return True
    return False


def split_sentences(paragraph: str,
                    abbreviations: tuple[str, ...] = DEFAULT_ABBREVIATIONS) -> list[str]:
    """Split one whitespace-canonical paragraph into sentences.

    A boundary is terminal punctuation (plus closing quotes/brackets)
    followed by whitespace and an uppercase or opening character, unless
    the text ends in a known abbreviation.
    """
    n = len(paragraph)
    cuts: list[tuple[int, int]] = []  # (end of sentence, start of next)
    i = 0
    while i < n:
        if paragraph[i] not in TERMINAL_PUNCTUATION:
            i += 1
            continue
        j = i
        while j + 1 < n and paragraph[j + 1] in TERMINAL_PUNCTUATION:
            j += 1
        k = j
        while k + 1 < n and paragraph[k + 1] in CLOSING_TRAILERS:
            k += 1
        t = k + 1
        while t < n and paragraph[t].isspace():
            t += 1
        if (
            t > k + 1
            and t < n
            and (paragraph[t].isupper() or paragraph[t] in _OPENING_CHARS)
            and not _ends_with_abbreviation(paragraph[:j + 1], abbreviations)
        ):
            cuts.append((k + 1, t))
        i = k + 1
    sentences = []
    start = 0
    for end, next_start in cuts:
        sentences.append(paragraph[start:end])
        start = next_start
    tail = paragraph[start:]
    if tail:
        sentences.append(tail)
    return sentences


def segment(
    candidate_text: str,
    provider_id: str,
    instance_id: str,
    verdict: ValidationVerdict,
    *,
    abbreviations: tuple[str, ...] = DEFAULT_ABBREVIATIONS,
    source_overrides: dict[str, str] | None = None,
    created_at: datetime | None = None,
    candidate_id: str | None = None,
) -> FeedbackCandidate:
    """Segment a validated candidate text into attributed sentences.

    The input is brought to whitespace-canonical form first; the resulting
    candidate reproduces that form exactly when its sentences are joined
    back (asserted here, not merely assumed).
    """
    if not candidate_text or not candidate_text.strip():
        raise DomainError("cannot segment empty candidate text")
    text = canonicalize_text(candidate_text)
    source = source_for_provider(provider_id, source_overrides)
    cid = candidate_id or new_id("cnd")

    paragraphs: list[tuple[Sentence, ...]] = []
    counter = 0
    for para in text.split("\n\n"):
        sentences = []
        for sentence_text in split_sentences(para, abbreviations):
            counter += 1
            sentences.append(Sentence(
                id=f"s{counter:02d}",
                text=sentence_text,
                source=source,
                origin_candidate_id=cid,
                origin_sentence_id=f"s{counter:02d}",
            ))
        paragraphs.append(tuple(sentences))

    candidate = FeedbackCandidate(
        id=cid,
        instance_id=instance_id,
        provider_id=provider_id,
        source=source,
        paragraphs=tuple(paragraphs),
        verdict=verdict,
        created_at=created_at or utcnow(),
    )
    if candidate.text != text:
        raise DomainError(
            f"segmentation of candidate {cid} is not lossless; this is a bug")
    return candidate


# ---------------------------------------------------------------------------
# Contribution math


def levenshtein(a: str, b: str) -> int:
    """Edit distance, iterative two-row formulation."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (ca != cb),
            ))
        previous = current
    return previous[-1]


def edit_ratio(original: str, revised: str) -> float:
    """Normalized edit distance in [0, 1]; 0 for identical strings."""
    if original == revised:
        return 0.0
    denom = max(len(original), len(revised))
    if denom == 0:
        return 0.0
    return levenshtein(original, revised) / denom


def compute_breakdown(sentences: tuple[Sentence, ...] | list[Sentence]) -> ContributionBreakdown:
    """Character-weighted contribution per source.

    An edited LLM sentence splits its weight between the originating model
    and the teacher by the normalized edit-distance ratio d against its
    origin text. The modification extent is the character-weighted mean of
    d over LLM-origin sentences only; sentences the teacher wrote from
    scratch count toward the teacher proportion but modify nothing.
    """
    if not sentences:
        raise DomainError("compute_breakdown requires at least one sentence")
    credits = {s: 0.0 for s in SOURCES}
    llm_chars = 0.0
    llm_distance_weighted = 0.0
    total = 0.0
    for sentence in sentences:
        chars = float(len(sentence.text))
        total += chars
        if sentence.source == "teacher":
            credits["teacher"] += chars
            continue
        d = edit_ratio(sentence.origin_text if sentence.origin_text is not None
                       else sentence.text, sentence.text)
        credits[sentence.source] += (1.0 - d) * chars
        credits["teacher"] += d * chars
        llm_chars += chars
        llm_distance_weighted += d * chars
    proportions = {s: credits[s] / total for s in SOURCES}
    extent = llm_distance_weighted / llm_chars if llm_chars else 0.0
    return ContributionBreakdown(proportions=proportions, teacher_modification_extent=extent)


def compose_sentences(
    instance_id: str,
    selections: list[dict],
    candidates: dict[str, FeedbackCandidate],
) -> tuple[list[Sentence], bool]:
    """Resolve teacher selections into provenance-tagged sentences.

    Each selection is either {"candidate_id", "sentence_id"} or
    {"teacher_text"}. Returns the sentences plus whether any came from an
    unpassed candidate.
    """
    if not selections:
        raise DomainError("empty selection")
    sentences: list[Sentence] = []
    touched_unpassed = False
    for sel in selections:
        if "teacher_text" in sel:
            text = (sel["teacher_text"] or "").strip()
            if not text:
                raise DomainError("teacher_text selections must be non-empty")
            sentences.append(Sentence(id=new_id("sen"), text=text, source="teacher"))
            continue
        try:
            candidate_id, sentence_id = sel["candidate_id"], sel["sentence_id"]
        except KeyError as exc:
            raise DomainError(f"selection missing field {exc}") from exc
        candidate = candidates.get(candidate_id)
        if candidate is None:
            raise NotFoundError(f"unknown candidate {candidate_id!r}")
        if candidate.instance_id != instance_id:
            raise DomainError(
                f"candidate {candidate_id} belongs to another instance")
        origin = candidate.sentence(sentence_id)
        if not candidate.verdict.passed:
            touched_unpassed = True
        sentences.append(Sentence(
            id=new_id("sen"),
            text=origin.text,
            source=candidate.source,
            origin_candidate_id=candidate.id,
            origin_sentence_id=origin.id,
            origin_text=origin.text,
            edited=False,
        ))
    return sentences, touched_unpassed


# ---------------------------------------------------------------------------
# Draft / version service


class CurationService:
    """Versioned composition lifecycle on top of the document store.

    Every compose/edit creates a new immutable snapshot with the next
    version number; send transitions one snapshot draft -> sent exactly
    once and freezes it.
    """

    CANDIDATES = "feedback_candidates"
    COMPOSED = "composed_feedback"

    def __init__(self, documents, relational=None):
        self.documents = documents
        self.relational = relational

    # -- candidates

    def store_candidate(self, candidate: FeedbackCandidate) -> str:
        return self.documents.store(self.CANDIDATES, candidate.to_dict(),
                                    doc_id=candidate.id)

    def candidates_for(self, instance_id: str) -> list[FeedbackCandidate]:
        docs = self.documents.find(self.CANDIDATES, instance_id=instance_id)
        return [FeedbackCandidate.from_dict(d) for d in docs]

    # -- versions

    def _versions(self, instance_id: str) -> list[dict]:
        return self.documents.find(self.COMPOSED, instance_id=instance_id)

    def _store_new_version(self, instance_id: str, build) -> ComposedFeedback:
        # Conditional insert per (instance, version); on a concurrent
        # collision re-read the max and try the next number.
        for _ in range(20):
            existing = self._versions(instance_id)
            version = max((d["version"] for d in existing), default=0) + 1
            composed = build(version)
            try:
                self.documents.store(
                    self.COMPOSED, composed.to_dict(), doc_id=composed.id,
                    unique_key=("instance_id", "version"))
                return composed
            except self.documents.Conflict:
                continue
        raise DomainError("could not allocate a feedback version number")

    def compose(
        self,
        instance_id: str,
        selections: list[dict],
        composed_by: str,
        *,
        allow_unpassed: bool = False,
    ) -> ComposedFeedback:
        candidates = {c.id: c for c in self.candidates_for(instance_id)}
        sentences, touched_unpassed = compose_sentences(instance_id, selections, candidates)
        if touched_unpassed and not allow_unpassed:
            raise DomainError(
                "selection includes sentences from an unpassed candidate; "
                "set allow_unpassed to override")

        def build(version: int) -> ComposedFeedback:
            return ComposedFeedback(
                id=new_id("cfb"),
                instance_id=instance_id,
                version=version,
                state="draft",
                sentences=tuple(sentences),
                composed_by=composed_by,
                breakdown=compute_breakdown(sentences),
                created_at=utcnow(),
                includes_unpassed_origin=touched_unpassed,
            )

        composed = self._store_new_version(instance_id, build)
        self._reenter_curation(instance_id)
        return composed

    def _reenter_curation(self, instance_id: str) -> None:
        # A new draft on an already-sent instance reopens curation; this is
        # the one sanctioned backward status move besides job rollback.
        if self.relational is not None:
            self.relational.cas_instance_status(instance_id, "sent", "curating")

    def get(self, draft_id: str) -> ComposedFeedback:
        doc = self.documents.get(self.COMPOSED, draft_id)
        if doc is None:
            raise NotFoundError(f"unknown feedback version {draft_id!r}")
        composed = ComposedFeedback.from_dict(doc)
        self._check_breakdown(composed)
        return composed

    def _check_breakdown(self, composed: ComposedFeedback) -> None:
        recomputed = compute_breakdown(composed.sentences)
        stored = composed.breakdown
        drift = max(
            abs(stored.proportions[s] - recomputed.proportions[s]) for s in SOURCES)
        drift = max(drift, abs(stored.teacher_modification_extent
                               - recomputed.teacher_modification_extent))
        if drift > 1e-9:
            from .errors import StorageIntegrityError

            raise StorageIntegrityError(
                f"stored breakdown of {composed.id} is stale (drift {drift:.2e})")

    def edit_sentence(self, draft_id: str, sentence_id: str, new_text: str,
                      composed_by: str | None = None) -> ComposedFeedback:
        draft = self.get(draft_id)
        if draft.state != "draft":
            raise StateError("sent feedback versions are immutable")
        new_text = new_text.strip()
        if not new_text:
            raise DomainError("sentence text must be non-empty")
        found = False
        edited_sentences = []
        for s in draft.sentences:
            if s.id != sentence_id:
                edited_sentences.append(s)
                continue
            found = True
            if s.source == "teacher":
                edited_sentences.append(replace(s, text=new_text))
            else:
                origin = s.origin_text if s.origin_text is not None else s.text
                edited_sentences.append(replace(
                    s, text=new_text, edited=(new_text != origin)))
        if not found:
            raise NotFoundError(f"draft has no sentence {sentence_id!r}")

        def build(version: int) -> ComposedFeedback:
            return ComposedFeedback(
                id=new_id("cfb"),
                instance_id=draft.instance_id,
                version=version,
                state="draft",
                sentences=tuple(edited_sentences),
                composed_by=composed_by or draft.composed_by,
                breakdown=compute_breakdown(edited_sentences),
                created_at=utcnow(),
                includes_unpassed_origin=draft.includes_unpassed_origin,
            )

        composed = self._store_new_version(draft.instance_id, build)
        self._reenter_curation(draft.instance_id)
        return composed

    def list_versions(self, instance_id: str) -> list[ComposedFeedback]:
        docs = sorted(self._versions(instance_id), key=lambda d: -d["version"])
        return [ComposedFeedback.from_dict(d) for d in docs]

    def get_version(self, instance_id: str, version: int) -> ComposedFeedback:
        for d in self._versions(instance_id):
            if d["version"] == version:
                return ComposedFeedback.from_dict(d)
        raise NotFoundError(f"instance {instance_id} has no version {version}")

    def send_feedback(
        self,
        draft_id: str,
        *,
        restricted_terms: frozenset[str] = frozenset(),
        redaction_map=None,
        idempotency_key: str | None = None,
    ) -> ComposedFeedback:
        """Transition a draft to sent after a final restricted-term check.

        The check runs over the text as a student would see it, with
        placeholders resolved back to surface forms. Double-send is
        prevented by compare-and-set on the instance status; re-sending
        with the recorded idempotency key returns the sent version
        unchanged.
        """
        from .preprocess import deanonymize
        from .validation import _restricted_term_hits

        draft = self.get(draft_id)
        if draft.state == "sent":
            if idempotency_key and draft.idempotency_key == idempotency_key:
                return draft
            raise StateError("feedback version already sent")

        visible_text = draft.text
        terms = set(restricted_terms)
        if redaction_map is not None:
            visible_text = deanonymize(visible_text, redaction_map)
            terms.update(e.surface_form for e in redaction_map.entries)
        hits = _restricted_term_hits(visible_text, sorted(terms))
        if hits:
            raise DomainError(
                f"restricted terms present in final feedback: {sorted(set(hits))}")

        if self.relational is not None:
            won = self.relational.cas_instance_status(
                draft.instance_id, "curating", "sent")
            if not won:
                current = self.get(draft_id)
                if (current.state == "sent" and idempotency_key
                        and current.idempotency_key == idempotency_key):
                    return current
                instance = self.relational.get_instance(draft.instance_id)
                status = instance.status if instance else "missing"
                raise StateError(
                    f"cannot send: instance status is {status!r}, not 'curating'")

        sent = self.documents.update_composed_state(
            draft_id, state="sent", sent_at=to_rfc3339(utcnow()),
            idempotency_key=idempotency_key)
        return ComposedFeedback.from_dict(sent)

    def history(self, *, instance_id: str | None = None, student_id: str | None = None,
                ratings: dict[str, dict] | None = None) -> list[dict]:
        """Chronological sent-feedback log with breakdowns and ratings."""
        if instance_id is not None:
            instance_ids = [instance_id]
        elif student_id is not None:
            if self.relational is None:
                raise DomainError("student history requires the relational store")
            instance_ids = self.relational.instance_ids_for_student(student_id)
        else:
            raise DomainError("history requires an instance id or a student id")

        entries = []
        for iid in instance_ids:
            for composed in self.list_versions(iid):
                if composed.state != "sent":
                    continue
                rating = (ratings or {}).get(composed.id)
                entries.append({
                    "feedback": {
                        "id": composed.id,
                        "instance_id": composed.instance_id,
                        "version": composed.version,
                        "state": composed.state,
                        "composed_by": composed.composed_by,
                        "sent_at": to_rfc3339(composed.sent_at) if composed.sent_at else None,
                        "text": composed.text,
                        "sentence_count": len(composed.sentences),
                        "includes_unpassed_origin": composed.includes_unpassed_origin,
                    },
                    "breakdown": {
                        **composed.breakdown.to_dict(),
                        "display_percentages": composed.breakdown.display_percentages(),
                    },
                    "rating": rating,
                })
        entries.sort(key=lambda e: e["feedback"]["sent_at"] or "")
        return entries
