"""Post-generation constraint checking and the automatic regeneration
loop.

``validate`` reports every violation it finds, in check order, instead of
stopping at the first; a verdict is data, never an exception. Coherence
is operationalized structurally: the required paragraph shape, a language
match, and an untruncated final sentence.
"""
from __future__ import annotations

import random
import re
import time
from dataclasses import dataclass, field
from typing import Callable

from .errors import ConfigError
from .gateway import (
    GenerationResult,
    ProviderCallError,
    ProviderDescriptor,
    provider_call,
)
from .language import detect_language
from .preprocess import RedactionMap, fold, tokenize

PARAGRAPH_SPLIT_RE = re.compile(r"\n\s*\n")
TERMINAL_PUNCTUATION = ".!?…"
#: Characters that may trail the terminal punctuation of a closing sentence.
CLOSING_TRAILERS = "\"'»)”’"

V_TOO_SHORT = "too_short"
V_TOO_LONG = "too_long"
V_WRONG_PARAGRAPH_COUNT = "wrong_paragraph_count"
V_RESTRICTED_TERM = "restricted_term"
V_EMPTY_PARAGRAPH = "empty_paragraph"
V_LANGUAGE_MISMATCH = "language_mismatch"
V_TRUNCATED_ENDING = "truncated_ending"


def canonicalize_text(text: str) -> str:
    """Whitespace-canonical form: paragraphs separated by exactly one
    blank line, runs of intra-paragraph whitespace collapsed to single
    spaces. Idempotent; segmentation round-trips are defined over this
    form."""
    paragraphs = [" ".join(p.split()) for p in PARAGRAPH_SPLIT_RE.split(text.strip())]
    return "\n\n".join(p for p in paragraphs if p)


def word_count(text: str) -> int:
    """Whitespace-delimited token count, the unit used both here and in
    the prompt's length instruction."""
    return len(text.split())


@dataclass(frozen=True)
class ValidationPolicy:
    min_words: int = 80
    max_words: int = 400
    required_paragraphs: int = 3
    restricted_terms: frozenset[str] = frozenset()
    language: str = "en"
    max_regenerations: int = 3

    def __post_init__(self):
        if not 0 < self.min_words < self.max_words:
            raise ConfigError("require 0 < min_words < max_words")
        if self.max_regenerations < 0:
            raise ConfigError("max_regenerations must be non-negative")

    def to_dict(self) -> dict:
        return {
            "min_words": self.min_words,
            "max_words": self.max_words,
            "required_paragraphs": self.required_paragraphs,
            "restricted_terms": sorted(self.restricted_terms),
            "language": self.language,
            "max_regenerations": self.max_regenerations,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ValidationPolicy:
        return cls(
            min_words=int(d.get("min_words", 80)),
            max_words=int(d.get("max_words", 400)),
            required_paragraphs=int(d.get("required_paragraphs", 3)),
            restricted_terms=frozenset(d.get("restricted_terms", ())),
            language=d.get("language", "en"),
            max_regenerations=int(d.get("max_regenerations", 3)),
        )


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str

    def to_dict(self) -> dict:
        return {"code": self.code, "detail": self.detail}


@dataclass(frozen=True)
class ValidationVerdict:
    candidate_ref: str
    violations: tuple[Violation, ...] = ()

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "candidate_ref": self.candidate_ref,
            "passed": self.passed,
            "violations": [v.to_dict() for v in self.violations],
        }

    @classmethod
    def from_dict(cls, d: dict) -> ValidationVerdict:
        return cls(
            candidate_ref=d["candidate_ref"],
            violations=tuple(Violation(v["code"], v["detail"]) for v in d["violations"]),
        )


def _restricted_term_hits(text: str, terms: list[str]) -> list[str]:
    """Case/diacritic-insensitive whole-token (or token-phrase) matches."""
    text_tokens = [tok for _, _, tok in tokenize(text)]
    hits = []
    for term in terms:
        term_tokens = [fold(t) for t in term.split()]
        if not term_tokens:
            continue
        n = len(term_tokens)
        for i in range(len(text_tokens) - n + 1):
            if text_tokens[i:i + n] == term_tokens:
                hits.append(term)
                break
    return hits


def validate(
    raw_text: str,
    policy: ValidationPolicy,
    redaction_map: RedactionMap | None = None,
    candidate_ref: str = "",
) -> ValidationVerdict:
    """Check a provider output against the policy.

    Checks run in order: paragraph count, non-empty paragraphs, word
    count, restricted terms (including every surface form in the
    redaction map), language, untruncated ending. All violations are
    reported.
    """
    violations: list[Violation] = []
    paragraphs = PARAGRAPH_SPLIT_RE.split(raw_text.strip()) if raw_text.strip() else []

    if len(paragraphs) != policy.required_paragraphs:
        violations.append(Violation(
            V_WRONG_PARAGRAPH_COUNT,
            f"expected {policy.required_paragraphs} paragraphs, found {len(paragraphs)}"))
    for i, paragraph in enumerate(paragraphs):
        if not paragraph.strip():
            violations.append(Violation(V_EMPTY_PARAGRAPH, f"paragraph {i + 1} is empty"))

    words = word_count(raw_text)
    if words < policy.min_words:
        violations.append(Violation(
            V_TOO_SHORT, f"{words} words, minimum is {policy.min_words}"))
    elif words > policy.max_words:
        violations.append(Violation(
            V_TOO_LONG, f"{words} words, maximum is {policy.max_words}"))

    terms = list(policy.restricted_terms)
    if redaction_map is not None:
        terms.extend(entry.surface_form for entry in redaction_map.entries)
    for term in sorted(set(_restricted_term_hits(raw_text, terms))):
        violations.append(Violation(V_RESTRICTED_TERM, f"restricted term present: {term}"))

    detected = detect_language(raw_text)
    if detected != policy.language:
        violations.append(Violation(
            V_LANGUAGE_MISMATCH,
            f"expected language {policy.language!r}, detected {detected!r}"))

    nonempty = [p.strip() for p in paragraphs if p.strip()]
    if nonempty:
        closing = nonempty[-1].rstrip(CLOSING_TRAILERS)
        if not closing or closing[-1] not in TERMINAL_PUNCTUATION:
            violations.append(Violation(
                V_TRUNCATED_ENDING, "final paragraph does not end in terminal punctuation"))

    return ValidationVerdict(candidate_ref=candidate_ref, violations=tuple(violations))


@dataclass(frozen=True)
class ValidatedGeneration:
    candidate: GenerationResult
    #: Whitespace-canonical text the verdict was computed over; this is
    #: the text that gets segmented and curated.
    text: str
    verdict: ValidationVerdict
    regenerations: int

    @property
    def passed(self) -> bool:
        return self.verdict.passed


def _failure_rank(verdict: ValidationVerdict, text: str, policy: ValidationPolicy) -> tuple:
    midpoint = (policy.min_words + policy.max_words) / 2
    return (len(verdict.violations), abs(word_count(text) - midpoint))


def generate_validated(
    bundle,
    descriptor: ProviderDescriptor,
    policy: ValidationPolicy,
    *,
    redaction_map: RedactionMap | None = None,
    provider=None,
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
) -> ValidatedGeneration:
    """Call one provider and loop until its output validates.

    At most 1 + max_regenerations provider calls, each with the identical
    prompt. On exhaustion the best failed candidate wins: fewest
    violations, ties broken by word count closest to the midpoint of the
    allowed range; its verdict stays unpassed.
    """
    best: ValidatedGeneration | None = None
    for round_index in range(policy.max_regenerations + 1):
        result = provider_call(
            descriptor,
            bundle.rendered_text,
            instance_id=bundle.instance_id,
            provider=provider,
            sleep=sleep,
            rng=rng,
        )
        if result.outcome != "ok":
            raise ProviderCallError(result)
        text = canonicalize_text(result.raw_text)
        verdict = validate(text, policy, redaction_map,
                           candidate_ref=f"{descriptor.id}:{result.prompt_digest[:12]}")
        attempt = ValidatedGeneration(result, text, verdict, regenerations=round_index)
        if verdict.passed:
            return attempt
        if best is None or (_failure_rank(verdict, text, policy)
                            < _failure_rank(best.verdict, best.text, policy)):
            best = attempt
    assert best is not None
    return ValidatedGeneration(
        best.candidate, best.text, best.verdict, regenerations=policy.max_regenerations)
