"""Core domain types.

All types are immutable value objects; mutation happens only through the
persistence layer. Each type round-trips through a canonical JSON shape
(snake_case fields, RFC 3339 timestamps) via ``to_dict`` / ``from_dict``.
"""
from __future__ import annotations

import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .errors import DomainError

ROLES = ("student", "teacher", "admin")
EVALUATOR_KINDS = ("peer", "teacher", "self")
INSTANCE_STATUSES = ("collecting", "generating", "curating", "sent")
EVENT_KINDS = ("score_selected", "comment_edited", "rubric_level_viewed")
SUPPORTED_LANGUAGES = ("en", "es")

# Forward-only lifecycle with two sanctioned returns: a failed generation
# job rolls back to collecting, and a new feedback version on a sent
# instance moves it back to curating.
ALLOWED_STATUS_TRANSITIONS = {
    ("collecting", "generating"),
    ("generating", "curating"),
    ("generating", "collecting"),
    ("curating", "sent"),
    ("sent", "curating"),
}


def new_id(prefix: str) -> str:
    return f"{prefix}_{uuid.uuid4().hex}"


def utcnow() -> datetime:
    # Millisecond precision, matching the wire format, so timestamps
    # survive a serialization round trip unchanged.
    now = datetime.now(timezone.utc)
    return now.replace(microsecond=now.microsecond // 1000 * 1000)


def to_rfc3339(ts: datetime) -> str:
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z")


def from_rfc3339(raw: str) -> datetime:
    return datetime.fromisoformat(raw.replace("Z", "+00:00"))


@dataclass(frozen=True)
class User:
    id: str
    display_name: str
    role: str
    course_ids: frozenset[str] = frozenset()
    email: str | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise DomainError(f"unknown role {self.role!r}")
        if not self.display_name.strip():
            raise DomainError("display_name must be non-empty")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "display_name": self.display_name,
            "role": self.role,
            "course_ids": sorted(self.course_ids),
            "email": self.email,
        }

    @classmethod
    def from_dict(cls, d: dict) -> User:
        return cls(
            id=d["id"],
            display_name=d["display_name"],
            role=d["role"],
            course_ids=frozenset(d.get("course_ids", ())),
            email=d.get("email"),
        )


@dataclass(frozen=True)
class MaterialRef:
    """Reference to an instructional-material document plus its excerpt text."""

    id: str
    title: str
    body: str

    def to_dict(self) -> dict:
        return {"id": self.id, "title": self.title, "body": self.body}

    @classmethod
    def from_dict(cls, d: dict) -> MaterialRef:
        return cls(id=d["id"], title=d["title"], body=d["body"])


@dataclass(frozen=True)
class Course:
    id: str
    name: str
    language: str
    group_ids: frozenset[str] = frozenset()
    rubric_ids: frozenset[str] = frozenset()
    prompt_template_id: str | None = None
    material_refs: tuple[MaterialRef, ...] = ()
    ui_locale: str | None = None

    def __post_init__(self):
        if self.language not in SUPPORTED_LANGUAGES:
            raise DomainError(f"unsupported language {self.language!r}")
        if not self.name.strip():
            raise DomainError("course name must be non-empty")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "language": self.language,
            "group_ids": sorted(self.group_ids),
            "rubric_ids": sorted(self.rubric_ids),
            "prompt_template_id": self.prompt_template_id,
            "material_refs": [m.to_dict() for m in self.material_refs],
            "ui_locale": self.ui_locale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Course:
        return cls(
            id=d["id"],
            name=d["name"],
            language=d["language"],
            group_ids=frozenset(d.get("group_ids", ())),
            rubric_ids=frozenset(d.get("rubric_ids", ())),
            prompt_template_id=d.get("prompt_template_id"),
            material_refs=tuple(MaterialRef.from_dict(m) for m in d.get("material_refs", ())),
            ui_locale=d.get("ui_locale"),
        )


@dataclass(frozen=True)
class RubricItem:
    id: str
    title: str
    level_descriptions: dict[int, str]
    relevance_terms: frozenset[str] = frozenset()

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "level_descriptions": {str(k): v for k, v in sorted(self.level_descriptions.items())},
            "relevance_terms": sorted(self.relevance_terms),
        }

    @classmethod
    def from_dict(cls, d: dict) -> RubricItem:
        return cls(
            id=d["id"],
            title=d["title"],
            level_descriptions={int(k): v for k, v in d["level_descriptions"].items()},
            relevance_terms=frozenset(d.get("relevance_terms", ())),
        )


@dataclass(frozen=True)
class Rubric:
    id: str
    title: str
    items: tuple[RubricItem, ...]
    scale_min: int = 1
    scale_max: int = 5

    def __post_init__(self):
        if not self.items:
            raise DomainError("rubric must have at least one item")
        if self.scale_min >= self.scale_max:
            raise DomainError("scale_min must be below scale_max")
        ids = [it.id for it in self.items]
        if len(ids) != len(set(ids)):
            raise DomainError("rubric item ids must be unique")
        for it in self.items:
            missing = [lv for lv in range(self.scale_min, self.scale_max + 1)
                       if lv not in it.level_descriptions]
            if missing:
                raise DomainError(
                    f"item {it.id!r} lacks level descriptions for {missing}")

    @property
    def item_ids(self) -> tuple[str, ...]:
        return tuple(it.id for it in self.items)

    def item(self, item_id: str) -> RubricItem:
        for it in self.items:
            if it.id == item_id:
                return it
        raise DomainError(f"unknown rubric item {item_id!r}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "items": [it.to_dict() for it in self.items],
            "scale_min": self.scale_min,
            "scale_max": self.scale_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Rubric:
        return cls(
            id=d["id"],
            title=d["title"],
            items=tuple(RubricItem.from_dict(it) for it in d["items"]),
            scale_min=d["scale_min"],
            scale_max=d["scale_max"],
        )


@dataclass(frozen=True)
class EvaluationInstance:
    id: str
    course_id: str
    rubric_id: str
    subject_student_id: str
    session_label: str
    status: str = "collecting"
    recording_ref: str | None = None

    def __post_init__(self):
        if self.status not in INSTANCE_STATUSES:
            raise DomainError(f"unknown status {self.status!r}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "course_id": self.course_id,
            "rubric_id": self.rubric_id,
            "subject_student_id": self.subject_student_id,
            "session_label": self.session_label,
            "status": self.status,
            "recording_ref": self.recording_ref,
        }

    @classmethod
    def from_dict(cls, d: dict) -> EvaluationInstance:
        return cls(
            id=d["id"],
            course_id=d["course_id"],
            rubric_id=d["rubric_id"],
            subject_student_id=d["subject_student_id"],
            session_label=d["session_label"],
            status=d.get("status", "collecting"),
            recording_ref=d.get("recording_ref"),
        )


def check_status_transition(old: str, new: str) -> None:
    """Reject any instance lifecycle move outside the forward-only order."""
    if old == new:
        return
    if (old, new) not in ALLOWED_STATUS_TRANSITIONS:
        raise StateTransitionError(old, new)


class StateTransitionError(DomainError):
    def __init__(self, old: str, new: str):
        super().__init__(f"illegal status transition {old!r} -> {new!r}")
        self.old = old
        self.new = new


@dataclass(frozen=True)
class Evaluation:
    id: str
    instance_id: str
    evaluator_id: str
    evaluator_kind: str
    item_scores: dict[str, int]
    item_comments: dict[str, str] = field(default_factory=dict)
    submitted_at: datetime = field(default_factory=utcnow)

    def __post_init__(self):
        if self.evaluator_kind not in EVALUATOR_KINDS:
            raise DomainError(f"unknown evaluator kind {self.evaluator_kind!r}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "instance_id": self.instance_id,
            "evaluator_id": self.evaluator_id,
            "evaluator_kind": self.evaluator_kind,
            "item_scores": dict(sorted(self.item_scores.items())),
            "item_comments": dict(sorted(self.item_comments.items())),
            "submitted_at": to_rfc3339(self.submitted_at),
        }

    @classmethod
    def from_dict(cls, d: dict) -> Evaluation:
        return cls(
            id=d["id"],
            instance_id=d["instance_id"],
            evaluator_id=d["evaluator_id"],
            evaluator_kind=d["evaluator_kind"],
            item_scores={k: int(v) for k, v in d["item_scores"].items()},
            item_comments=dict(d.get("item_comments", {})),
            submitted_at=from_rfc3339(d["submitted_at"]),
        )


@dataclass(frozen=True)
class InteractionEvent:
    id: str
    evaluation_id: str
    item_id: str
    kind: str
    occurred_at: datetime
    value: int | None = None

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise DomainError(f"unknown event kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "evaluation_id": self.evaluation_id,
            "item_id": self.item_id,
            "kind": self.kind,
            "value": self.value,
            "occurred_at": to_rfc3339(self.occurred_at),
        }

    @classmethod
    def from_dict(cls, d: dict) -> InteractionEvent:
        return cls(
            id=d["id"],
            evaluation_id=d["evaluation_id"],
            item_id=d["item_id"],
            kind=d["kind"],
            value=d.get("value"),
            occurred_at=from_rfc3339(d["occurred_at"]),
        )


@dataclass(frozen=True)
class FeedbackRating:
    """Student reaction to one sent feedback version: agreement with it and
    its perceived usefulness, both on the rubric's Likert range."""

    instance_id: str
    feedback_version_id: str
    rater_id: str
    agreement: int
    usefulness: int
    comment: str | None = None

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "feedback_version_id": self.feedback_version_id,
            "rater_id": self.rater_id,
            "agreement": self.agreement,
            "usefulness": self.usefulness,
            "comment": self.comment,
        }

    @classmethod
    def from_dict(cls, d: dict) -> FeedbackRating:
        return cls(
            instance_id=d["instance_id"],
            feedback_version_id=d["feedback_version_id"],
            rater_id=d["rater_id"],
            agreement=int(d["agreement"]),
            usefulness=int(d["usefulness"]),
            comment=d.get("comment"),
        )
