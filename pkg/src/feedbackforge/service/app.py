"""HTTP service wiring every workflow together.

All bodies and responses are plain JSON. Authorization is a static bearer
token per user; ROUTE_ACCESS below is the authoritative role-by-route
table (also reproduced in the README and exercised verbatim by tests).
Grant markers: a bare role allows that role anywhere; "student:self"
allows a student only on their own resource path; "student:subject"
allows the student who is the subject of the underlying instance.
"""
from __future__ import annotations

import logging
import time
from pathlib import Path

from fastapi import Body, Depends, FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from ..analytics import aggregate_scores, compare_self_vs_aggregate, evaluation_timing_summary
from ..curation import ComposedFeedback, CurationService
from ..errors import (
    AccessError,
    ConfigError,
    ConflictError,
    DomainError,
    GatewayError,
    NotFoundError,
    StateError,
    StorageIntegrityError,
)
from ..model import (
    Course,
    Evaluation,
    EvaluationInstance,
    InteractionEvent,
    MaterialRef,
    Rubric,
    RubricItem,
    User,
    from_rfc3339,
    new_id,
    to_rfc3339,
    utcnow,
)
from ..preprocess import RedactionMap
from ..prompts import PromptTemplate, lint_template
from ..validation import ValidationPolicy
from ..persistence import DocumentStore, FileService, RelationalStore
from .auth import AuthError, require_role, resolve_user
from .config import AppConfig, load_config
from .jobs import GenerationJobManager

logger = logging.getLogger("feedbackforge.http")

#: (method, path, grants). The contract test checks this table against
#: both the live behavior and the served OpenAPI description.
ROUTE_ACCESS: tuple[tuple[str, str, frozenset[str]], ...] = (
    ("POST", "/evaluations", frozenset({"student", "teacher"})),
    ("POST", "/instances", frozenset({"teacher"})),
    ("GET", "/instances/{instance_id}", frozenset({"teacher"})),
    ("GET", "/instances/{instance_id}/evaluations", frozenset({"teacher"})),
    ("POST", "/instances/{instance_id}/generate", frozenset({"teacher"})),
    ("GET", "/instances/{instance_id}/generation", frozenset({"teacher"})),
    ("GET", "/instances/{instance_id}/candidates", frozenset({"teacher"})),
    ("POST", "/instances/{instance_id}/compose", frozenset({"teacher"})),
    ("POST", "/drafts/{draft_id}/edit", frozenset({"teacher"})),
    ("POST", "/drafts/{draft_id}/send", frozenset({"teacher"})),
    ("GET", "/instances/{instance_id}/versions", frozenset({"teacher"})),
    ("GET", "/instances/{instance_id}/history", frozenset({"teacher"})),
    ("GET", "/students/{student_id}/history",
     frozenset({"teacher", "student:self"})),
    ("GET", "/instances/{instance_id}/student-view",
     frozenset({"student:subject"})),
    ("POST", "/feedback/{version_id}/rating", frozenset({"student:subject"})),
    ("POST", "/instances/{instance_id}/recording", frozenset({"teacher"})),
    ("GET", "/files/{file_id}",
     frozenset({"teacher", "admin", "student:subject"})),
    ("POST", "/admin/users", frozenset({"admin"})),
    ("POST", "/admin/courses", frozenset({"admin"})),
    ("POST", "/admin/groups", frozenset({"admin"})),
    ("POST", "/admin/rubrics", frozenset({"admin"})),
    ("POST", "/admin/templates", frozenset({"admin"})),
    ("POST", "/admin/policies", frozenset({"admin"})),
    ("PUT", "/courses/{course_id}/language", frozenset({"admin"})),
)

_ERROR_STATUS = (
    (AuthError, 401),
    (AccessError, 403),
    (NotFoundError, 404),
    (ConflictError, 409),
    (StateError, 409),
    (DomainError, 422),
    (GatewayError, 502),
    (StorageIntegrityError, 500),
    (ConfigError, 500),
)


def _error_response(exc: Exception, status: int) -> JSONResponse:
    headers = {"WWW-Authenticate": "Bearer"} if status == 401 else None
    return JSONResponse(
        status_code=status,
        content={"error": {"type": type(exc).__name__, "detail": str(exc)}},
        headers=headers)


_MISSING = object()


def _require(payload: dict, field: str, kind: type):
    value = payload.get(field, _MISSING)
    if value is _MISSING:
        raise DomainError(f"missing required field {field!r}")
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise DomainError(f"field {field!r} must be {kind.__name__}")
    return value


def _opt(payload: dict, field: str, kind: type, default=None):
    value = payload.get(field, default)
    if value is default or value is None:
        return default
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise DomainError(f"field {field!r} must be {kind.__name__}")
    return value


def _composed_payload(composed: ComposedFeedback) -> dict:
    payload = composed.to_dict()
    payload["text"] = composed.text
    payload["breakdown"]["display_percentages"] = (
        composed.breakdown.display_percentages())
    return payload


def _public_rating(doc: dict) -> dict:
    return {k: doc[k] for k in ("id", "feedback_version_id", "agreement",
                                "usefulness", "comment", "created_at")}


def create_app(
    config: AppConfig | None = None,
    *,
    relational: RelationalStore | None = None,
    documents: DocumentStore | None = None,
    file_service: FileService | None = None,
    jobs: GenerationJobManager | None = None,
) -> FastAPI:
    config = config or load_config()
    if relational is None:
        db = config.database_path
        if db != ":memory:":
            Path(db).parent.mkdir(parents=True, exist_ok=True)
        relational = RelationalStore(db)
    documents = documents or DocumentStore(config.documents_path)
    file_service = file_service or FileService(config.files_path, relational)
    jobs = jobs or GenerationJobManager(relational, documents,
                                        config.providers_list())
    curation = CurationService(documents, relational)

    app = FastAPI(title="feedbackforge", version="0.1.0",
                  description="Multi-provider feedback workflow service")
    app.state.config = config
    app.state.relational = relational
    app.state.documents = documents
    app.state.files = file_service
    app.state.jobs = jobs
    app.state.curation = curation

    for exc_type, status in _ERROR_STATUS:
        def handler(request: Request, exc: Exception, status=status) -> JSONResponse:
            return _error_response(exc, status)

        app.add_exception_handler(exc_type, handler)

    @app.middleware("http")
    async def log_requests(request: Request, call_next):
        started = time.monotonic()
        response = await call_next(request)
        logger.info("%s %s -> %d (%.1f ms)", request.method,
                    request.url.path, response.status_code,
                    (time.monotonic() - started) * 1000)
        return response

    # -- helpers bound to the stores

    def get_instance_or_404(instance_id: str) -> EvaluationInstance:
        instance = relational.get_instance(instance_id)
        if instance is None:
            raise NotFoundError(f"unknown instance {instance_id!r}")
        return instance

    def rubric_for(instance: EvaluationInstance) -> Rubric:
        rubric = relational.get_rubric(instance.rubric_id)
        if rubric is None:
            raise StorageIntegrityError(
                f"instance {instance.id} references missing rubric")
        return rubric

    def latest_redaction_map(instance_id: str) -> RedactionMap | None:
        docs = documents.find("redaction_maps", instance_id=instance_id)
        return RedactionMap.from_dict(docs[-1]) if docs else None

    def restricted_terms_for(instance: EvaluationInstance) -> frozenset[str]:
        data = relational.policy_for_course(instance.course_id)
        policy = ValidationPolicy.from_dict(data) if data else ValidationPolicy()
        return policy.restricted_terms

    def ratings_by_version(instance_ids: list[str]) -> dict[str, dict]:
        ratings = {}
        for iid in instance_ids:
            for doc in documents.find("feedback_ratings", instance_id=iid):
                ratings[doc["feedback_version_id"]] = _public_rating(doc)
        return ratings

    def history_entries(*, instance_id=None, student_id=None) -> list[dict]:
        if instance_id is not None:
            ids = [instance_id]
        else:
            ids = relational.instance_ids_for_student(student_id)
        return curation.history(
            instance_id=instance_id, student_id=student_id,
            ratings=ratings_by_version(ids))

    # -- health

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok"}

    @app.get("/readyz")
    def readyz() -> dict:
        relational.get_user("__readiness_probe__")
        documents.count("composed_feedback")
        return {"status": "ready"}

    # -- evaluations

    @app.post("/evaluations", status_code=201)
    def submit_evaluation(
            payload: dict = Body(...),
            user: User = Depends(require_role("student", "teacher"))) -> dict:
        instance = get_instance_or_404(_require(payload, "instance_id", str))
        if instance.status != "collecting":
            raise StateError(
                f"instance is {instance.status!r}; submissions are closed")
        members = {u.id for u in relational.course_members(instance.course_id)}
        if user.id not in members:
            raise AccessError("evaluator is not a member of this course")
        rubric = rubric_for(instance)

        raw_scores = _require(payload, "item_scores", dict)
        raw_comments = _opt(payload, "item_comments", dict, {}) or {}
        scores: dict[str, int] = {}
        for item_id, score in raw_scores.items():
            if item_id not in rubric.item_ids:
                raise DomainError(f"unknown rubric item {item_id!r}")
            if not isinstance(score, int) or isinstance(score, bool):
                raise DomainError(f"score for item {item_id!r} must be an integer")
            if not rubric.scale_min <= score <= rubric.scale_max:
                raise DomainError(
                    f"score {score} out of range [{rubric.scale_min},"
                    f" {rubric.scale_max}] for item {item_id!r}")
            scores[item_id] = score
        comments: dict[str, str] = {}
        for item_id, text in raw_comments.items():
            if item_id not in rubric.item_ids:
                raise DomainError(f"unknown rubric item {item_id!r}")
            if not isinstance(text, str):
                raise DomainError(f"comment for item {item_id!r} must be a string")
            if text.strip():
                comments[item_id] = text

        if user.id == instance.subject_student_id:
            kind = "self"
        elif user.role == "teacher":
            kind = "teacher"
        else:
            kind = "peer"
        evaluation = Evaluation(
            id=new_id("ev"), instance_id=instance.id, evaluator_id=user.id,
            evaluator_kind=kind, item_scores=scores, item_comments=comments,
            submitted_at=utcnow())

        events = []
        for raw in _opt(payload, "events", list, []) or []:
            if not isinstance(raw, dict):
                raise DomainError("events must be objects")
            item_id = _require(raw, "item_id", str)
            if item_id not in rubric.item_ids:
                raise DomainError(f"unknown rubric item {item_id!r} in event")
            occurred_raw = _opt(raw, "occurred_at", str)
            try:
                occurred = from_rfc3339(occurred_raw) if occurred_raw else utcnow()
            except ValueError:
                raise DomainError(
                    f"bad timestamp {occurred_raw!r} in event") from None
            events.append(InteractionEvent(
                id=new_id("evt"), evaluation_id=evaluation.id, item_id=item_id,
                kind=_require(raw, "kind", str), occurred_at=occurred,
                value=_opt(raw, "value", int)))

        relational.save_evaluation(evaluation, events)

        if (config.auto_generate_after > 0
                and len(relational.evaluations_for_instance(instance.id))
                >= config.auto_generate_after):
            try:
                jobs.start(instance.id)
            except ConflictError:
                pass

        aggregate = aggregate_scores(
            instance.id, rubric, relational.evaluations_for_instance(instance.id))
        return {
            "evaluation": evaluation.to_dict(),
            "aggregate": {k: v.to_dict() for k, v in aggregate.items()},
        }

    # -- instances

    @app.post("/instances", status_code=201)
    def create_instance(payload: dict = Body(...),
                        user: User = Depends(require_role("teacher"))) -> dict:
        course_id = _require(payload, "course_id", str)
        rubric_id = _require(payload, "rubric_id", str)
        subject_id = _require(payload, "subject_student_id", str)
        if relational.get_course(course_id) is None:
            raise NotFoundError(f"unknown course {course_id!r}")
        if relational.get_rubric(rubric_id) is None:
            raise NotFoundError(f"unknown rubric {rubric_id!r}")
        subject = relational.get_user(subject_id)
        if subject is None:
            raise NotFoundError(f"unknown user {subject_id!r}")
        if subject.role != "student":
            raise DomainError("the instance subject must be a student")
        members = {u.id for u in relational.course_members(course_id)}
        if subject_id not in members:
            raise DomainError("the subject is not a member of this course")
        instance = EvaluationInstance(
            id=new_id("ins"), course_id=course_id, rubric_id=rubric_id,
            subject_student_id=subject_id,
            session_label=_require(payload, "session_label", str))
        relational.save_instance(instance)
        return instance.to_dict()

    @app.get("/instances/{instance_id}")
    def instance_detail(instance_id: str,
                        user: User = Depends(require_role("teacher"))) -> dict:
        instance = get_instance_or_404(instance_id)
        return {
            "instance": instance.to_dict(),
            "evaluation_count": len(relational.evaluations_for_instance(instance_id)),
            "files": relational.files_for_instance(instance_id),
            "versions": [
                {"id": v.id, "version": v.version, "state": v.state}
                for v in curation.list_versions(instance_id)
            ],
        }

    @app.get("/instances/{instance_id}/evaluations")
    def instance_evaluations(instance_id: str,
                             user: User = Depends(require_role("teacher"))) -> dict:
        instance = get_instance_or_404(instance_id)
        rubric = rubric_for(instance)
        evaluations = relational.evaluations_for_instance(instance_id)
        aggregate = aggregate_scores(instance_id, rubric, evaluations)
        self_eval = next(
            (e for e in evaluations if e.evaluator_kind == "self"), None)
        comparison = None
        if self_eval is not None:
            comparison = {
                item_id: c.to_dict() for item_id, c in
                compare_self_vs_aggregate(self_eval, aggregate).items()
            }
        rows = []
        for evaluation in evaluations:
            evaluator = relational.get_user(evaluation.evaluator_id)
            timings = evaluation_timing_summary(
                relational.events_for_evaluation(evaluation.id))
            rows.append({
                **evaluation.to_dict(),
                "evaluator_name": evaluator.display_name if evaluator else None,
                "timing": {k: t.to_dict() for k, t in timings.items()},
            })
        return {
            "instance": instance.to_dict(),
            "rubric": rubric.to_dict(),
            "evaluations": rows,
            "aggregate": {k: v.to_dict() for k, v in aggregate.items()},
            "self_comparison": comparison,
        }

    # -- generation

    @app.post("/instances/{instance_id}/generate", status_code=202)
    def trigger_generation(instance_id: str,
                           user: User = Depends(require_role("teacher"))) -> dict:
        return {"job": jobs.start(instance_id)}

    @app.get("/instances/{instance_id}/generation")
    def generation_status(instance_id: str,
                          user: User = Depends(require_role("teacher"))) -> dict:
        instance = get_instance_or_404(instance_id)
        return {"instance_status": instance.status,
                "job": jobs.status(instance_id)}

    @app.get("/instances/{instance_id}/candidates")
    def list_candidates(instance_id: str,
                        user: User = Depends(require_role("teacher"))) -> dict:
        get_instance_or_404(instance_id)
        return {
            "candidates": [c.to_dict() for c in curation.candidates_for(instance_id)],
            "generation_results": documents.find(
                "generation_results", instance_id=instance_id),
        }

    # -- curation

    @app.post("/instances/{instance_id}/compose", status_code=201)
    def compose(instance_id: str, payload: dict = Body(...),
                user: User = Depends(require_role("teacher"))) -> dict:
        get_instance_or_404(instance_id)
        selections = _require(payload, "selections", list)
        composed = curation.compose(
            instance_id, selections, composed_by=user.id,
            allow_unpassed=bool(payload.get("allow_unpassed", False)))
        return _composed_payload(composed)

    @app.post("/drafts/{draft_id}/edit", status_code=201)
    def edit_draft(draft_id: str, payload: dict = Body(...),
                   user: User = Depends(require_role("teacher"))) -> dict:
        composed = curation.edit_sentence(
            draft_id, _require(payload, "sentence_id", str),
            _require(payload, "new_text", str), composed_by=user.id)
        return _composed_payload(composed)

    @app.post("/drafts/{draft_id}/send")
    def send_draft(draft_id: str, payload: dict | None = Body(None),
                   user: User = Depends(require_role("teacher"))) -> dict:
        payload = payload or {}
        draft = curation.get(draft_id)
        instance = get_instance_or_404(draft.instance_id)
        composed = curation.send_feedback(
            draft_id,
            restricted_terms=restricted_terms_for(instance),
            redaction_map=latest_redaction_map(instance.id),
            idempotency_key=_opt(payload, "idempotency_key", str))
        return _composed_payload(composed)

    @app.get("/instances/{instance_id}/versions")
    def list_versions(instance_id: str,
                      user: User = Depends(require_role("teacher"))) -> dict:
        get_instance_or_404(instance_id)
        return {"versions": [
            _composed_payload(v) for v in curation.list_versions(instance_id)]}

    @app.get("/instances/{instance_id}/history")
    def instance_history(instance_id: str,
                         user: User = Depends(require_role("teacher"))) -> dict:
        get_instance_or_404(instance_id)
        return {"entries": history_entries(instance_id=instance_id)}

    @app.get("/students/{student_id}/history")
    def student_history(student_id: str,
                        user: User = Depends(resolve_user)) -> dict:
        if user.role == "student":
            if user.id != student_id:
                raise AccessError("students may only read their own history")
        elif user.role != "teacher":
            raise AccessError(f"role {user.role!r} may not call this route")
        if relational.get_user(student_id) is None:
            raise NotFoundError(f"unknown student {student_id!r}")
        return {"entries": history_entries(student_id=student_id)}

    # -- student surface

    @app.get("/instances/{instance_id}/student-view")
    def student_view(instance_id: str,
                     user: User = Depends(require_role("student"))) -> dict:
        instance = get_instance_or_404(instance_id)
        if instance.subject_student_id != user.id:
            raise AccessError("students may only view their own instances")
        rubric = rubric_for(instance)
        evaluations = relational.evaluations_for_instance(instance_id)
        aggregate = aggregate_scores(instance_id, rubric, evaluations)
        self_eval = next(
            (e for e in evaluations if e.evaluator_kind == "self"), None)
        comparison = None
        if self_eval is not None:
            comparison = {
                item_id: c.to_dict() for item_id, c in
                compare_self_vs_aggregate(self_eval, aggregate).items()
            }
        feedback = None
        ratings = ratings_by_version([instance_id])
        for version in curation.list_versions(instance_id):
            if version.state == "sent":
                feedback = {
                    "id": version.id,
                    "version": version.version,
                    "text": version.text,
                    "sent_at": to_rfc3339(version.sent_at) if version.sent_at else None,
                    "rating": ratings.get(version.id),
                }
                break
        recording = None
        if instance.recording_ref:
            recording = {"file_id": instance.recording_ref,
                         "url": f"/files/{instance.recording_ref}"}
        return {
            "instance": {
                "id": instance.id,
                "session_label": instance.session_label,
                "status": instance.status,
            },
            "rubric": {
                "items": [{"id": i.id, "title": i.title} for i in rubric.items],
                "scale_min": rubric.scale_min,
                "scale_max": rubric.scale_max,
            },
            "aggregate": {k: v.to_dict() for k, v in aggregate.items()},
            "self_comparison": comparison,
            "feedback": feedback,
            "recording": recording,
        }

    @app.post("/feedback/{version_id}/rating", status_code=201)
    def rate_feedback(version_id: str, payload: dict = Body(...),
                      user: User = Depends(require_role("student"))) -> dict:
        doc = documents.get("composed_feedback", version_id)
        if doc is None:
            raise NotFoundError(f"unknown feedback version {version_id!r}")
        if doc["state"] != "sent":
            raise StateError("only sent feedback can be rated")
        instance = get_instance_or_404(doc["instance_id"])
        if instance.subject_student_id != user.id:
            raise AccessError("only the feedback recipient may rate it")
        rubric = rubric_for(instance)
        rating = {
            "id": new_id("rat"),
            "instance_id": instance.id,
            "feedback_version_id": version_id,
            "rater_id": user.id,
            "agreement": _require(payload, "agreement", int),
            "usefulness": _require(payload, "usefulness", int),
            "comment": _opt(payload, "comment", str),
            "created_at": to_rfc3339(utcnow()),
        }
        for field in ("agreement", "usefulness"):
            if not rubric.scale_min <= rating[field] <= rubric.scale_max:
                raise DomainError(
                    f"{field} must lie in [{rubric.scale_min}, {rubric.scale_max}]")
        documents.store("feedback_ratings", rating,
                        unique_key=("feedback_version_id", "rater_id"))
        return _public_rating(rating)

    # -- recordings

    @app.post("/instances/{instance_id}/recording", status_code=201)
    async def upload_recording(
            instance_id: str, request: Request,
            media_kind: str = Query("video"),
            user: User = Depends(require_role("teacher"))) -> dict:
        data = await request.body()
        if not data:
            raise DomainError("empty recording body")
        ref = file_service.put_file(data, media_kind, instance_id)
        return {**ref.to_dict(), "url": f"/files/{ref.id}"}

    @app.get("/files/{file_id}")
    def download_file(file_id: str,
                      user: User = Depends(resolve_user)) -> Response:
        ref, data = file_service.get_file(file_id)
        allowed = user.role in ("teacher", "admin")
        if not allowed and ref.instance_id:
            instance = relational.get_instance(ref.instance_id)
            allowed = (instance is not None
                       and instance.subject_student_id == user.id)
        if not allowed:
            raise AccessError("not allowed to read this file")
        media_type = "video/mp4" if ref.media_kind == "video" else "audio/mpeg"
        return Response(content=data, media_type=media_type)

    # -- admin

    @app.post("/admin/users", status_code=201)
    def admin_save_user(payload: dict = Body(...),
                        user: User = Depends(require_role("admin"))) -> dict:
        course_ids = _opt(payload, "course_ids", list, []) or []
        target = User(
            id=payload.get("id") or new_id("usr"),
            display_name=_require(payload, "display_name", str),
            role=_require(payload, "role", str),
            course_ids=frozenset(course_ids),
            email=_opt(payload, "email", str))
        expires_raw = _opt(payload, "token_expires_at", str)
        relational.save_user(
            target,
            api_token=_opt(payload, "api_token", str),
            token_expires_at=from_rfc3339(expires_raw) if expires_raw else None)
        return target.to_dict()

    @app.post("/admin/courses", status_code=201)
    def admin_save_course(payload: dict = Body(...),
                          user: User = Depends(require_role("admin"))) -> dict:
        materials = []
        for raw in _opt(payload, "materials", list, []) or []:
            materials.append(MaterialRef(
                id=raw.get("id") or new_id("mat"),
                title=_require(raw, "title", str),
                body=_require(raw, "body", str)))
        course = Course(
            id=payload.get("id") or new_id("crs"),
            name=_require(payload, "name", str),
            language=_require(payload, "language", str),
            material_refs=tuple(materials),
            ui_locale=_opt(payload, "ui_locale", str))
        relational.save_course(course)
        return course.to_dict()

    @app.post("/admin/groups", status_code=201)
    def admin_save_group(payload: dict = Body(...),
                         user: User = Depends(require_role("admin"))) -> dict:
        group_id = payload.get("id") or new_id("grp")
        course_id = _require(payload, "course_id", str)
        relational.save_group(group_id, course_id,
                              _require(payload, "name", str))
        members = []
        for raw in _opt(payload, "members", list, []) or []:
            member_id = _require(raw, "user_id", str)
            consent = bool(raw.get("recording_consent", False))
            relational.set_group_member(group_id, member_id, consent)
            relational.add_course_member(course_id, member_id)
            members.append({"user_id": member_id, "recording_consent": consent})
        return {"id": group_id, "course_id": course_id,
                "name": payload["name"], "members": members}

    @app.post("/admin/rubrics", status_code=201)
    def admin_save_rubric(payload: dict = Body(...),
                          user: User = Depends(require_role("admin"))) -> dict:
        items = []
        for raw in _require(payload, "items", list):
            levels = _require(raw, "level_descriptions", dict)
            items.append(RubricItem(
                id=raw.get("id") or new_id("it"),
                title=_require(raw, "title", str),
                level_descriptions={int(k): str(v) for k, v in levels.items()},
                relevance_terms=frozenset(
                    _opt(raw, "relevance_terms", list, []) or [])))
        rubric = Rubric(
            id=payload.get("id") or new_id("rub"),
            title=_require(payload, "title", str),
            items=tuple(items),
            scale_min=int(payload.get("scale_min", 1)),
            scale_max=int(payload.get("scale_max", 5)))
        relational.save_rubric(rubric, course_id=_opt(payload, "course_id", str))
        return rubric.to_dict()

    @app.post("/admin/templates", status_code=201)
    def admin_save_template(payload: dict = Body(...),
                            user: User = Depends(require_role("admin"))) -> dict:
        data = {
            "id": payload.get("id") or new_id("tpl"),
            "course_id": _require(payload, "course_id", str),
            "language": _require(payload, "language", str),
            "segments": _require(payload, "segments", list),
        }
        template = PromptTemplate.from_dict(data)
        problems = lint_template(template)
        if problems:
            raise DomainError("template rejected: " + "; ".join(problems))
        relational.save_template(template.id, template.to_dict(),
                                 template.language, template.course_id)
        return template.to_dict()

    @app.post("/admin/policies", status_code=201)
    def admin_save_policy(payload: dict = Body(...),
                          user: User = Depends(require_role("admin"))) -> dict:
        policy = ValidationPolicy.from_dict(_require(payload, "policy", dict))
        policy_id = payload.get("id") or new_id("pol")
        relational.save_policy(policy_id, policy.to_dict(),
                               course_id=_opt(payload, "course_id", str))
        return {"id": policy_id, "policy": policy.to_dict()}

    @app.put("/courses/{course_id}/language")
    def set_course_language(course_id: str, payload: dict = Body(...),
                            user: User = Depends(require_role("admin"))) -> dict:
        language = _require(payload, "language", str)
        relational.set_course_language(course_id, language)
        ui_locale = _opt(payload, "ui_locale", str)
        if ui_locale is not None:
            course = relational.get_course(course_id)
            relational.save_course(
                Course(id=course.id, name=course.name, language=language,
                       prompt_template_id=course.prompt_template_id,
                       material_refs=course.material_refs, ui_locale=ui_locale))
        course = relational.get_course(course_id)
        return {"id": course.id, "language": course.language,
                "ui_locale": course.ui_locale}

    if config.static_frontend_path and Path(config.static_frontend_path).is_dir():
        app.mount("/ui", StaticFiles(directory=config.static_frontend_path,
                                     html=True), name="ui")

    return app
