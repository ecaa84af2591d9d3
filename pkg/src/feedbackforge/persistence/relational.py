"""Embedded relational store for structured academic data.

Single sqlite connection guarded by a re-entrant lock so concurrent
request handlers serialize cleanly. Schema lives in versioned migration
files next to this module; constraints and triggers there enforce score
bounds, single self evaluations, and the instance status lifecycle at the
storage layer, independent of application checks.
"""
from __future__ import annotations

import json
import sqlite3
import threading
from contextlib import contextmanager
from datetime import datetime
from importlib import resources

from ..errors import ConflictError, DomainError, NotFoundError, StateError
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
    to_rfc3339,
    utcnow,
)


def _translate_integrity(exc: sqlite3.IntegrityError) -> Exception:
    msg = str(exc)
    if "score out of rubric scale" in msg:
        return DomainError("score out of rubric scale")
    if "self evaluation must come from the instance subject" in msg:
        return DomainError("self evaluation must come from the instance subject")
    if "illegal instance status transition" in msg:
        return StateError("illegal instance status transition")
    # Partial unique indexes surface as plain column lists in the message.
    if "evaluations.instance_id, evaluations.evaluator_id" in msg:
        return ConflictError("this evaluator already submitted for this instance")
    if "evaluations.instance_id" in msg:
        return ConflictError("a self evaluation already exists for this instance")
    if "files.instance_id" in msg:
        return ConflictError("an active recording already exists for this instance")
    if "FOREIGN KEY" in msg:
        return NotFoundError("referenced row does not exist")
    if "UNIQUE" in msg:
        return ConflictError(msg)
    return DomainError(msg)


class RelationalStore:
    def __init__(self, path: str = ":memory:", *, apply_migrations: bool = True):
        self.path = path
        self._conn = sqlite3.connect(path, check_same_thread=False,
                                     isolation_level=None, timeout=30.0)
        self._conn.row_factory = sqlite3.Row
        self._conn.execute("PRAGMA foreign_keys = ON")
        self._lock = threading.RLock()
        if apply_migrations:
            self.migrate()

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    # -- migrations

    def migrate(self) -> list[str]:
        """Apply pending migration files in name order; returns those applied."""
        applied = []
        with self._lock:
            self._conn.execute(
                "CREATE TABLE IF NOT EXISTS schema_migrations ("
                "name TEXT PRIMARY KEY, applied_at TEXT NOT NULL)")
            done = {r["name"] for r in self._conn.execute(
                "SELECT name FROM schema_migrations")}
            root = resources.files("feedbackforge.persistence") / "migrations"
            for entry in sorted(root.iterdir(), key=lambda e: e.name):
                if not entry.name.endswith(".sql") or entry.name in done:
                    continue
                self._conn.executescript(entry.read_text(encoding="utf-8"))
                self._conn.execute(
                    "INSERT INTO schema_migrations (name, applied_at) VALUES (?, ?)",
                    (entry.name, to_rfc3339(utcnow())))
                applied.append(entry.name)
            self._conn.commit()
        return applied

    @contextmanager
    def unit_of_work(self):
        """Serialize a multi-statement write; partial writes never commit."""
        with self._lock:
            if self._conn.in_transaction:
                yield self._conn  # nested call joins the enclosing transaction
                return
            self._conn.execute("BEGIN IMMEDIATE")
            try:
                yield self._conn
            except sqlite3.IntegrityError as exc:
                self._conn.rollback()
                raise _translate_integrity(exc) from exc
            except BaseException:
                self._conn.rollback()
                raise
            else:
                self._conn.commit()

    def _query(self, sql: str, params: tuple = ()) -> list[sqlite3.Row]:
        with self._lock:
            return self._conn.execute(sql, params).fetchall()

    def _one(self, sql: str, params: tuple = ()) -> sqlite3.Row | None:
        rows = self._query(sql, params)
        return rows[0] if rows else None

    # -- users

    def save_user(self, user: User, *, api_token: str | None = None,
                  token_expires_at: datetime | None = None) -> None:
        with self.unit_of_work() as conn:
            conn.execute(
                "INSERT INTO users (id, display_name, role, email, api_token,"
                " token_expires_at, created_at)"
                " VALUES (?, ?, ?, ?, ?, ?, ?)"
                " ON CONFLICT(id) DO UPDATE SET"
                " display_name = excluded.display_name, role = excluded.role,"
                " email = excluded.email,"
                " api_token = COALESCE(excluded.api_token, users.api_token),"
                " token_expires_at = COALESCE(excluded.token_expires_at,"
                "                             users.token_expires_at)",
                (user.id, user.display_name, user.role, user.email, api_token,
                 to_rfc3339(token_expires_at) if token_expires_at else None,
                 to_rfc3339(utcnow())))
            for course_id in sorted(user.course_ids):
                conn.execute(
                    "INSERT OR IGNORE INTO course_members (course_id, user_id)"
                    " VALUES (?, ?)", (course_id, user.id))

    def _row_to_user(self, row: sqlite3.Row) -> User:
        course_ids = frozenset(r["course_id"] for r in self._query(
            "SELECT course_id FROM course_members WHERE user_id = ?", (row["id"],)))
        return User(id=row["id"], display_name=row["display_name"],
                    role=row["role"], course_ids=course_ids, email=row["email"])

    def get_user(self, user_id: str) -> User | None:
        row = self._one("SELECT * FROM users WHERE id = ?", (user_id,))
        return self._row_to_user(row) if row else None

    def user_by_token(self, token: str) -> tuple[User, datetime | None] | None:
        row = self._one("SELECT * FROM users WHERE api_token = ?", (token,))
        if row is None:
            return None
        expires = from_rfc3339(row["token_expires_at"]) if row["token_expires_at"] else None
        return self._row_to_user(row), expires

    def set_api_token(self, user_id: str, token: str,
                      expires_at: datetime | None = None) -> None:
        with self.unit_of_work() as conn:
            cur = conn.execute(
                "UPDATE users SET api_token = ?, token_expires_at = ? WHERE id = ?",
                (token, to_rfc3339(expires_at) if expires_at else None, user_id))
            if cur.rowcount == 0:
                raise NotFoundError(f"unknown user {user_id!r}")

    # -- courses

    def save_course(self, course: Course) -> None:
        with self.unit_of_work() as conn:
            conn.execute(
                "INSERT INTO courses (id, name, language, prompt_template_id,"
                " ui_locale, created_at) VALUES (?, ?, ?, ?, ?, ?)"
                " ON CONFLICT(id) DO UPDATE SET name = excluded.name,"
                " language = excluded.language,"
                " prompt_template_id = excluded.prompt_template_id,"
                " ui_locale = excluded.ui_locale",
                (course.id, course.name, course.language,
                 course.prompt_template_id, course.ui_locale,
                 to_rfc3339(utcnow())))
            conn.execute("DELETE FROM course_materials WHERE course_id = ?",
                         (course.id,))
            for pos, material in enumerate(course.material_refs):
                conn.execute(
                    "INSERT INTO course_materials (id, course_id, position,"
                    " title, body) VALUES (?, ?, ?, ?, ?)",
                    (material.id, course.id, pos, material.title, material.body))
            for rubric_id in sorted(course.rubric_ids):
                conn.execute(
                    "INSERT OR IGNORE INTO course_rubrics (course_id, rubric_id)"
                    " VALUES (?, ?)", (course.id, rubric_id))

    def get_course(self, course_id: str) -> Course | None:
        row = self._one("SELECT * FROM courses WHERE id = ?", (course_id,))
        if row is None:
            return None
        materials = tuple(
            MaterialRef(id=r["id"], title=r["title"], body=r["body"])
            for r in self._query(
                "SELECT * FROM course_materials WHERE course_id = ?"
                " ORDER BY position", (course_id,)))
        group_ids = frozenset(r["id"] for r in self._query(
            "SELECT id FROM groups WHERE course_id = ?", (course_id,)))
        rubric_ids = frozenset(r["rubric_id"] for r in self._query(
            "SELECT rubric_id FROM course_rubrics WHERE course_id = ?", (course_id,)))
        return Course(id=row["id"], name=row["name"], language=row["language"],
                      group_ids=group_ids, rubric_ids=rubric_ids,
                      prompt_template_id=row["prompt_template_id"],
                      material_refs=materials, ui_locale=row["ui_locale"])

    def set_course_language(self, course_id: str, language: str) -> None:
        with self.unit_of_work() as conn:
            try:
                cur = conn.execute(
                    "UPDATE courses SET language = ? WHERE id = ?",
                    (language, course_id))
            except sqlite3.IntegrityError as exc:
                raise DomainError(f"unsupported language {language!r}") from exc
            if cur.rowcount == 0:
                raise NotFoundError(f"unknown course {course_id!r}")

    def add_course_member(self, course_id: str, user_id: str) -> None:
        with self.unit_of_work() as conn:
            conn.execute(
                "INSERT OR IGNORE INTO course_members (course_id, user_id)"
                " VALUES (?, ?)", (course_id, user_id))

    def course_members(self, course_id: str) -> list[User]:
        rows = self._query(
            "SELECT u.* FROM users u JOIN course_members cm ON cm.user_id = u.id"
            " WHERE cm.course_id = ? ORDER BY u.display_name", (course_id,))
        return [self._row_to_user(r) for r in rows]

    # -- groups and consent

    def save_group(self, group_id: str, course_id: str, name: str) -> None:
        with self.unit_of_work() as conn:
            conn.execute(
                "INSERT INTO groups (id, course_id, name) VALUES (?, ?, ?)"
                " ON CONFLICT(id) DO UPDATE SET name = excluded.name",
                (group_id, course_id, name))

    def set_group_member(self, group_id: str, user_id: str,
                         recording_consent: bool = False) -> None:
        with self.unit_of_work() as conn:
            conn.execute(
                "INSERT INTO group_members (group_id, user_id, recording_consent)"
                " VALUES (?, ?, ?) ON CONFLICT(group_id, user_id)"
                " DO UPDATE SET recording_consent = excluded.recording_consent",
                (group_id, user_id, 1 if recording_consent else 0))

    def subject_has_recording_consent(self, instance_id: str) -> bool:
        row = self._one(
            "SELECT 1 FROM evaluation_instances ei"
            " JOIN groups g ON g.course_id = ei.course_id"
            " JOIN group_members gm ON gm.group_id = g.id"
            "  AND gm.user_id = ei.subject_student_id"
            " WHERE ei.id = ? AND gm.recording_consent = 1", (instance_id,))
        return row is not None

    # -- rubrics

    def save_rubric(self, rubric: Rubric, course_id: str | None = None) -> None:
        with self.unit_of_work() as conn:
            conn.execute(
                "INSERT INTO rubrics (id, title, scale_min, scale_max, created_at)"
                " VALUES (?, ?, ?, ?, ?) ON CONFLICT(id) DO UPDATE SET"
                " title = excluded.title, scale_min = excluded.scale_min,"
                " scale_max = excluded.scale_max",
                (rubric.id, rubric.title, rubric.scale_min, rubric.scale_max,
                 to_rfc3339(utcnow())))
            conn.execute("DELETE FROM rubric_items WHERE rubric_id = ?", (rubric.id,))
            for pos, item in enumerate(rubric.items):
                conn.execute(
                    "INSERT INTO rubric_items (id, rubric_id, position, title,"
                    " level_descriptions, relevance_terms)"
                    " VALUES (?, ?, ?, ?, ?, ?)",
                    (item.id, rubric.id, pos, item.title,
                     json.dumps({str(k): v for k, v in sorted(item.level_descriptions.items())}),
                     json.dumps(sorted(item.relevance_terms))))
            if course_id is not None:
                conn.execute(
                    "INSERT OR IGNORE INTO course_rubrics (course_id, rubric_id)"
                    " VALUES (?, ?)", (course_id, rubric.id))

    def get_rubric(self, rubric_id: str) -> Rubric | None:
        row = self._one("SELECT * FROM rubrics WHERE id = ?", (rubric_id,))
        if row is None:
            return None
        items = tuple(
            RubricItem(
                id=r["id"], title=r["title"],
                level_descriptions={int(k): v for k, v in
                                    json.loads(r["level_descriptions"]).items()},
                relevance_terms=frozenset(json.loads(r["relevance_terms"])))
            for r in self._query(
                "SELECT * FROM rubric_items WHERE rubric_id = ? ORDER BY position",
                (rubric_id,)))
        return Rubric(id=row["id"], title=row["title"], items=items,
                      scale_min=row["scale_min"], scale_max=row["scale_max"])

    # -- evaluation instances

    def save_instance(self, instance: EvaluationInstance) -> None:
        now = to_rfc3339(utcnow())
        with self.unit_of_work() as conn:
            conn.execute(
                "INSERT INTO evaluation_instances (id, course_id, rubric_id,"
                " subject_student_id, session_label, status, recording_ref,"
                " created_at, updated_at) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)",
                (instance.id, instance.course_id, instance.rubric_id,
                 instance.subject_student_id, instance.session_label,
                 instance.status, instance.recording_ref, now, now))

    def get_instance(self, instance_id: str) -> EvaluationInstance | None:
        row = self._one("SELECT * FROM evaluation_instances WHERE id = ?",
                        (instance_id,))
        if row is None:
            return None
        return EvaluationInstance(
            id=row["id"], course_id=row["course_id"], rubric_id=row["rubric_id"],
            subject_student_id=row["subject_student_id"],
            session_label=row["session_label"], status=row["status"],
            recording_ref=row["recording_ref"])

    def set_instance_status(self, instance_id: str, status: str) -> None:
        with self.unit_of_work() as conn:
            cur = conn.execute(
                "UPDATE evaluation_instances SET status = ?, updated_at = ?"
                " WHERE id = ?",
                (status, to_rfc3339(utcnow()), instance_id))
            if cur.rowcount == 0:
                raise NotFoundError(f"unknown instance {instance_id!r}")

    def cas_instance_status(self, instance_id: str, expected: str,
                            status: str) -> bool:
        """Compare-and-set on instance status; True when this caller won."""
        with self.unit_of_work() as conn:
            cur = conn.execute(
                "UPDATE evaluation_instances SET status = ?, updated_at = ?"
                " WHERE id = ? AND status = ?",
                (status, to_rfc3339(utcnow()), instance_id, expected))
            return cur.rowcount == 1

    def set_instance_recording(self, instance_id: str, file_id: str | None) -> None:
        with self.unit_of_work() as conn:
            cur = conn.execute(
                "UPDATE evaluation_instances SET recording_ref = ?, updated_at = ?"
                " WHERE id = ?",
                (file_id, to_rfc3339(utcnow()), instance_id))
            if cur.rowcount == 0:
                raise NotFoundError(f"unknown instance {instance_id!r}")

    def instance_ids_for_student(self, student_id: str) -> list[str]:
        return [r["id"] for r in self._query(
            "SELECT id FROM evaluation_instances WHERE subject_student_id = ?"
            " ORDER BY created_at, id", (student_id,))]

    def list_instances(self, course_id: str | None = None) -> list[EvaluationInstance]:
        if course_id is None:
            rows = self._query(
                "SELECT id FROM evaluation_instances ORDER BY created_at, id")
        else:
            rows = self._query(
                "SELECT id FROM evaluation_instances WHERE course_id = ?"
                " ORDER BY created_at, id", (course_id,))
        return [self.get_instance(r["id"]) for r in rows]

    def instance_ids(self) -> set[str]:
        return {r["id"] for r in self._query("SELECT id FROM evaluation_instances")}

    # -- evaluations

    def save_evaluation(self, evaluation: Evaluation,
                        events: list[InteractionEvent] = ()) -> None:
        """Store scores, comments, and events atomically."""
        with self.unit_of_work() as conn:
            conn.execute(
                "INSERT INTO evaluations (id, instance_id, evaluator_id,"
                " evaluator_kind, submitted_at) VALUES (?, ?, ?, ?, ?)",
                (evaluation.id, evaluation.instance_id, evaluation.evaluator_id,
                 evaluation.evaluator_kind, to_rfc3339(evaluation.submitted_at)))
            for item_id, score in sorted(evaluation.item_scores.items()):
                conn.execute(
                    "INSERT INTO item_scores (evaluation_id, item_id, score)"
                    " VALUES (?, ?, ?)", (evaluation.id, item_id, score))
            for item_id, body in sorted(evaluation.item_comments.items()):
                if body:
                    conn.execute(
                        "INSERT INTO item_comments (evaluation_id, item_id, body)"
                        " VALUES (?, ?, ?)", (evaluation.id, item_id, body))
            for seq, event in enumerate(events):
                conn.execute(
                    "INSERT INTO interaction_events (id, evaluation_id, seq,"
                    " item_id, kind, value, occurred_at)"
                    " VALUES (?, ?, ?, ?, ?, ?, ?)",
                    (event.id, evaluation.id, seq, event.item_id, event.kind,
                     event.value, to_rfc3339(event.occurred_at)))

    def _hydrate_evaluation(self, row: sqlite3.Row) -> Evaluation:
        scores = {r["item_id"]: r["score"] for r in self._query(
            "SELECT item_id, score FROM item_scores WHERE evaluation_id = ?",
            (row["id"],))}
        comments = {r["item_id"]: r["body"] for r in self._query(
            "SELECT item_id, body FROM item_comments WHERE evaluation_id = ?",
            (row["id"],))}
        return Evaluation(
            id=row["id"], instance_id=row["instance_id"],
            evaluator_id=row["evaluator_id"], evaluator_kind=row["evaluator_kind"],
            item_scores=scores, item_comments=comments,
            submitted_at=from_rfc3339(row["submitted_at"]))

    def get_evaluation(self, evaluation_id: str) -> Evaluation | None:
        row = self._one("SELECT * FROM evaluations WHERE id = ?", (evaluation_id,))
        return self._hydrate_evaluation(row) if row else None

    def evaluations_for_instance(self, instance_id: str) -> list[Evaluation]:
        rows = self._query(
            "SELECT * FROM evaluations WHERE instance_id = ?"
            " ORDER BY submitted_at, id", (instance_id,))
        return [self._hydrate_evaluation(r) for r in rows]

    def events_for_evaluation(self, evaluation_id: str) -> list[InteractionEvent]:
        rows = self._query(
            "SELECT * FROM interaction_events WHERE evaluation_id = ?"
            " ORDER BY seq", (evaluation_id,))
        return [InteractionEvent(
            id=r["id"], evaluation_id=r["evaluation_id"], item_id=r["item_id"],
            kind=r["kind"], occurred_at=from_rfc3339(r["occurred_at"]),
            value=r["value"]) for r in rows]

    # -- policies and templates

    def save_policy(self, policy_id: str, data: dict,
                    course_id: str | None = None) -> None:
        with self.unit_of_work() as conn:
            conn.execute(
                "INSERT INTO validation_policies (id, course_id, data, created_at)"
                " VALUES (?, ?, ?, ?) ON CONFLICT(id) DO UPDATE SET"
                " course_id = excluded.course_id, data = excluded.data",
                (policy_id, course_id, json.dumps(data, sort_keys=True),
                 to_rfc3339(utcnow())))

    def policy_for_course(self, course_id: str) -> dict | None:
        row = self._one(
            "SELECT data FROM validation_policies WHERE course_id = ?"
            " ORDER BY created_at DESC, id DESC LIMIT 1", (course_id,))
        if row is None:
            row = self._one(
                "SELECT data FROM validation_policies WHERE course_id IS NULL"
                " ORDER BY created_at DESC, id DESC LIMIT 1")
        return json.loads(row["data"]) if row else None

    def save_template(self, template_id: str, data: dict, language: str,
                      course_id: str | None = None) -> None:
        with self.unit_of_work() as conn:
            conn.execute(
                "INSERT INTO prompt_templates (id, course_id, language, data,"
                " created_at) VALUES (?, ?, ?, ?, ?)"
                " ON CONFLICT(id) DO UPDATE SET course_id = excluded.course_id,"
                " language = excluded.language, data = excluded.data",
                (template_id, course_id, language,
                 json.dumps(data, sort_keys=True), to_rfc3339(utcnow())))

    def all_template_rows(self) -> list[dict]:
        return [dict(r) for r in self._query(
            "SELECT * FROM prompt_templates ORDER BY id")]

    def template_for(self, course_id: str, language: str) -> dict | None:
        row = self._one(
            "SELECT data FROM prompt_templates WHERE course_id = ? AND language = ?"
            " ORDER BY created_at DESC, id DESC LIMIT 1", (course_id, language))
        if row is None:
            row = self._one(
                "SELECT data FROM prompt_templates"
                " WHERE course_id IS NULL AND language = ?"
                " ORDER BY created_at DESC, id DESC LIMIT 1", (language,))
        return json.loads(row["data"]) if row else None

    # -- file registry

    def register_file(self, file_id: str, *, instance_id: str | None,
                      media_kind: str, rel_path: str, sha256: str,
                      byte_size: int, active: bool = True) -> None:
        with self.unit_of_work() as conn:
            conn.execute(
                "INSERT INTO files (id, instance_id, media_kind, rel_path,"
                " sha256, byte_size, active, created_at)"
                " VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                (file_id, instance_id, media_kind, rel_path, sha256, byte_size,
                 1 if active else 0, to_rfc3339(utcnow())))

    def file_row(self, file_id: str) -> dict | None:
        row = self._one("SELECT * FROM files WHERE id = ?", (file_id,))
        return dict(row) if row else None

    def deactivate_file(self, file_id: str) -> None:
        with self.unit_of_work() as conn:
            cur = conn.execute("UPDATE files SET active = 0 WHERE id = ?", (file_id,))
            if cur.rowcount == 0:
                raise NotFoundError(f"unknown file {file_id!r}")

    def files_for_instance(self, instance_id: str,
                           active_only: bool = True) -> list[dict]:
        sql = "SELECT * FROM files WHERE instance_id = ?"
        if active_only:
            sql += " AND active = 1"
        return [dict(r) for r in self._query(sql + " ORDER BY created_at", (instance_id,))]

    def all_file_rows(self) -> list[dict]:
        return [dict(r) for r in self._query("SELECT * FROM files ORDER BY id")]

    def table_counts(self) -> dict[str, int]:
        tables = [r["name"] for r in self._query(
            "SELECT name FROM sqlite_master WHERE type = 'table'"
            " AND name NOT LIKE 'sqlite_%' ORDER BY name")]
        return {t: self._one(f"SELECT COUNT(*) AS n FROM {t}")["n"] for t in tables}
