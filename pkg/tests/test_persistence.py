import json

import pytest

from feedbackforge.errors import (
    ConfigError,
    ConflictError,
    DomainError,
    NotFoundError,
    StateError,
    StorageIntegrityError,
)
from feedbackforge.model import (
    Course,
    Evaluation,
    EvaluationInstance,
    Rubric,
    RubricItem,
    User,
    from_rfc3339,
    to_rfc3339,
    utcnow,
)
from feedbackforge.persistence import (
    DocumentStore,
    FileService,
    RelationalStore,
    run_integrity_audit,
)


def seed_world(relational):
    relational.save_user(User(id="usr_t", display_name="Teacher", role="teacher"))
    relational.save_user(User(id="usr_a", display_name="Ada", role="student"))
    relational.save_user(User(id="usr_b", display_name="Ben", role="student"))
    relational.save_course(Course(id="c1", name="Course", language="en"))
    for uid in ("usr_t", "usr_a", "usr_b"):
        relational.add_course_member("c1", uid)
    relational.save_group("g1", "c1", "Group 1")
    relational.set_group_member("g1", "usr_a", recording_consent=True)
    relational.set_group_member("g1", "usr_b", recording_consent=False)
    relational.save_rubric(Rubric(id="r1", title="R", items=(
        RubricItem(id="it_1", title="Clarity",
                   level_descriptions={n: f"level {n}" for n in range(1, 6)}),)),
        course_id="c1")
    relational.save_instance(EvaluationInstance(
        id="ins_1", course_id="c1", rubric_id="r1",
        subject_student_id="usr_a", session_label="S1"))


def make_eval(eval_id="ev_1", evaluator="usr_b", kind="peer", score=4,
              instance_id="ins_1"):
    return Evaluation(id=eval_id, instance_id=instance_id,
                      evaluator_id=evaluator, evaluator_kind=kind,
                      item_scores={"it_1": score},
                      item_comments={"it_1": "Fine work."})


class TestMigrations:
    def test_apply_then_noop(self):
        store = RelationalStore(":memory:", apply_migrations=False)
        assert store.migrate() == ["0001_init.sql"]
        assert store.migrate() == []

    def test_constructor_applies(self, relational):
        assert relational.migrate() == []
        counts = relational.table_counts()
        assert counts["users"] == 0
        assert "evaluation_instances" in counts

    def test_unmigrated_store_has_no_tables(self):
        store = RelationalStore(":memory:", apply_migrations=False)
        with pytest.raises(Exception):
            store.get_user("usr_x")


class TestTriggers:
    def test_score_above_scale_rejected(self, relational):
        seed_world(relational)
        with pytest.raises(DomainError, match="scale"):
            relational.save_evaluation(make_eval(score=9))
        assert relational.get_evaluation("ev_1") is None

    def test_score_below_scale_rejected(self, relational):
        seed_world(relational)
        with pytest.raises(DomainError, match="scale"):
            relational.save_evaluation(make_eval(score=0))

    def test_score_update_guarded(self, relational):
        seed_world(relational)
        relational.save_evaluation(make_eval())
        with pytest.raises(DomainError, match="scale"):
            with relational.unit_of_work() as conn:
                conn.execute(
                    "UPDATE item_scores SET score = 11 WHERE evaluation_id = ?",
                    ("ev_1",))

    def test_self_evaluation_must_be_subject(self, relational):
        seed_world(relational)
        with pytest.raises(DomainError, match="subject"):
            relational.save_evaluation(
                make_eval(evaluator="usr_b", kind="self"))

    def test_second_self_evaluation_conflicts(self, relational):
        seed_world(relational)
        relational.save_evaluation(make_eval("ev_s1", "usr_a", "self"))
        with pytest.raises(ConflictError, match="self evaluation already"):
            relational.save_evaluation(Evaluation(
                id="ev_s2", instance_id="ins_1", evaluator_id="usr_a",
                evaluator_kind="self", item_scores={"it_1": 3}))

    def test_duplicate_evaluator_conflicts(self, relational):
        seed_world(relational)
        relational.save_evaluation(make_eval("ev_1"))
        with pytest.raises(ConflictError, match="already submitted"):
            relational.save_evaluation(make_eval("ev_2"))

    def test_sanctioned_transitions_pass(self, relational):
        seed_world(relational)
        for status in ("generating", "collecting", "generating",
                       "curating", "sent", "curating", "sent"):
            relational.set_instance_status("ins_1", status)
        assert relational.get_instance("ins_1").status == "sent"

    def test_forbidden_transitions_abort(self, relational):
        seed_world(relational)
        with pytest.raises(StateError):
            relational.set_instance_status("ins_1", "sent")
        relational.set_instance_status("ins_1", "generating")
        with pytest.raises(StateError):
            relational.set_instance_status("ins_1", "sent")
        assert relational.get_instance("ins_1").status == "generating"

    def test_foreign_keys_enforced(self, relational):
        seed_world(relational)
        with pytest.raises(NotFoundError):
            relational.save_evaluation(make_eval(instance_id="ins_ghost"))


class TestCompareAndSwap:
    def test_wins_when_expected_matches(self, relational):
        seed_world(relational)
        assert relational.cas_instance_status("ins_1", "collecting", "generating")
        assert relational.get_instance("ins_1").status == "generating"

    def test_loses_without_side_effects(self, relational):
        seed_world(relational)
        relational.set_instance_status("ins_1", "generating")
        assert not relational.cas_instance_status(
            "ins_1", "collecting", "generating")
        assert relational.get_instance("ins_1").status == "generating"

    def test_only_one_of_many_wins(self, relational):
        seed_world(relational)
        wins = [relational.cas_instance_status("ins_1", "collecting", "generating")
                for _ in range(10)]
        assert wins.count(True) == 1


class TestRecordingIndex:
    def test_one_active_recording_per_instance(self, relational):
        seed_world(relational)
        relational.register_file("fil_1", instance_id="ins_1",
                                 media_kind="video", rel_path="blobs/a.bin",
                                 sha256="0" * 64, byte_size=3)
        with pytest.raises(ConflictError, match="active recording"):
            relational.register_file("fil_2", instance_id="ins_1",
                                     media_kind="video", rel_path="blobs/b.bin",
                                     sha256="1" * 64, byte_size=3)

    def test_deactivated_slot_can_be_refilled(self, relational):
        seed_world(relational)
        relational.register_file("fil_1", instance_id="ins_1",
                                 media_kind="audio", rel_path="blobs/a.bin",
                                 sha256="0" * 64, byte_size=3)
        relational.deactivate_file("fil_1")
        relational.register_file("fil_2", instance_id="ins_1",
                                 media_kind="audio", rel_path="blobs/b.bin",
                                 sha256="1" * 64, byte_size=3)
        active = relational.files_for_instance("ins_1")
        assert [row["id"] for row in active] == ["fil_2"]
        everything = relational.files_for_instance("ins_1", active_only=False)
        assert {row["id"] for row in everything} == {"fil_1", "fil_2"}


class TestUsersAndTokens:
    def test_token_lookup_round_trip(self, relational):
        seed_world(relational)
        relational.set_api_token("usr_a", "tok_secret")
        user, expires = relational.user_by_token("tok_secret")
        assert user.id == "usr_a"
        assert expires is None
        assert relational.user_by_token("tok_wrong") is None

    def test_token_expiry_returned(self, relational):
        seed_world(relational)
        when = from_rfc3339("2030-01-01T00:00:00.000Z")
        relational.set_api_token("usr_b", "tok_b", expires_at=when)
        _, expires = relational.user_by_token("tok_b")
        assert expires == when

    def test_course_membership_round_trip(self, relational):
        seed_world(relational)
        members = {u.id for u in relational.course_members("c1")}
        assert members == {"usr_t", "usr_a", "usr_b"}
        loaded = relational.get_user("usr_a")
        assert "c1" in loaded.course_ids


class TestPolicyAndTemplateFallback:
    def test_course_policy_beats_global(self, relational):
        seed_world(relational)
        relational.save_policy("pol_global", {"min_words": 50})
        relational.save_policy("pol_c1", {"min_words": 99}, course_id="c1")
        assert relational.policy_for_course("c1")["min_words"] == 99

    def test_global_fallback(self, relational):
        seed_world(relational)
        relational.save_policy("pol_global", {"min_words": 50})
        assert relational.policy_for_course("c1")["min_words"] == 50
        assert relational.policy_for_course("c_other")["min_words"] == 50

    def test_no_policy_anywhere(self, relational):
        seed_world(relational)
        assert relational.policy_for_course("c1") is None

    def test_template_language_and_course_fallback(self, relational):
        seed_world(relational)
        relational.save_template("tpl_en", {"name": "default en"}, "en")
        relational.save_template("tpl_es", {"name": "default es"}, "es")
        relational.save_template("tpl_c1_en", {"name": "course en"}, "en",
                                 course_id="c1")
        assert relational.template_for("c1", "en")["name"] == "course en"
        assert relational.template_for("c1", "es")["name"] == "default es"
        assert relational.template_for("c_other", "en")["name"] == "default en"
        assert relational.template_for("c1", "fr") is None


def candidate_doc(instance_id="ins_1", provider="gpt-4.1-mini", passed=True):
    return {
        "instance_id": instance_id,
        "provider_id": provider,
        "source": "gpt",
        "paragraphs": [
            [{"id": "s01", "text": "One.", "source": "gpt"}],
            [{"id": "s02", "text": "Two.", "source": "gpt"}],
        ],
        "verdict": {"candidate_ref": "x", "passed": passed, "violations": []},
    }


class TestDocumentStore:
    def test_store_fills_envelope_fields(self, documents):
        doc_id = documents.store("feedback_candidates", candidate_doc())
        loaded = documents.get("feedback_candidates", doc_id)
        assert loaded["schema_version"] == 1
        assert loaded["created_at"].endswith("Z")
        assert loaded["id"].startswith("cnd_")

    def test_schema_rejects_bad_shape(self, documents):
        doc = candidate_doc()
        doc["verdict"]["passed"] = "yes"  # wrong type
        with pytest.raises(StorageIntegrityError, match="schema"):
            documents.store("feedback_candidates", doc)
        assert documents.count("feedback_candidates") == 0

    def test_schema_rejects_missing_field(self, documents):
        doc = candidate_doc()
        del doc["provider_id"]
        with pytest.raises(StorageIntegrityError):
            documents.store("feedback_candidates", doc)

    def test_unknown_collection(self, documents):
        with pytest.raises(ConfigError):
            documents.store("scratch", {"x": 1})

    def test_write_once_by_unique_key(self, documents):
        first = candidate_doc()
        documents.store("feedback_candidates", first,
                        unique_key=("instance_id", "provider_id"))
        with pytest.raises(ConflictError):
            documents.store("feedback_candidates", candidate_doc(),
                            unique_key=("instance_id", "provider_id"))
        assert documents.count("feedback_candidates") == 1

    def test_find_filters(self, documents):
        documents.store("feedback_candidates", candidate_doc(provider="gpt-4.1-mini"))
        documents.store("feedback_candidates", candidate_doc(provider="llama-3.1"))
        documents.store("feedback_candidates",
                        candidate_doc(instance_id="ins_2", provider="llama-3.1"))
        hits = documents.find("feedback_candidates",
                              instance_id="ins_1", provider_id="llama-3.1")
        assert len(hits) == 1
        assert hits[0]["provider_id"] == "llama-3.1"
        assert len(documents.find("feedback_candidates")) == 3

    def test_future_schema_version_fails_loud(self, documents, tmp_path):
        doc_id = documents.store("feedback_candidates", candidate_doc())
        path = next((documents.root / "feedback_candidates").glob("*.json"))
        tampered = json.loads(path.read_text())
        tampered["schema_version"] = 7
        path.write_text(json.dumps(tampered))
        with pytest.raises(StorageIntegrityError, match="schema_version"):
            documents.get("feedback_candidates", doc_id)

    def test_raw_bytes_stable(self, documents):
        doc_id = documents.store("feedback_candidates", candidate_doc())
        first = documents.raw_bytes("feedback_candidates", doc_id)
        assert first == documents.raw_bytes("feedback_candidates", doc_id)
        assert json.loads(first)["id"] == doc_id
        with pytest.raises(NotFoundError):
            documents.raw_bytes("feedback_candidates", "cnd_missing")

    def test_doc_id_mismatch_rejected(self, documents):
        doc = candidate_doc()
        doc["id"] = "cnd_a"
        with pytest.raises(ConfigError):
            documents.store("feedback_candidates", doc, doc_id="cnd_b")


class TestFileService:
    @pytest.fixture
    def files(self, relational, tmp_path):
        seed_world(relational)
        return FileService(tmp_path / "media", relational)

    def test_round_trip_with_checksum(self, files):
        ref = files.put_file(b"frames", "video", instance_id="ins_1")
        loaded_ref, data = files.get_file(ref.id)
        assert data == b"frames"
        assert loaded_ref.sha256 == ref.sha256
        assert loaded_ref.instance_id == "ins_1"

    def test_consent_gate(self, files, relational):
        relational.save_instance(EvaluationInstance(
            id="ins_b", course_id="c1", rubric_id="r1",
            subject_student_id="usr_b", session_label="S2"))
        with pytest.raises(DomainError, match="consent"):
            files.put_file(b"frames", "video", instance_id="ins_b")
        assert relational.files_for_instance("ins_b") == []

    def test_unlinked_file_needs_no_consent(self, files):
        ref = files.put_file(b"loose", "audio")
        assert ref.instance_id is None

    def test_tampered_blob_detected(self, files):
        ref = files.put_file(b"frames", "video", instance_id="ins_1")
        (files.root / ref.rel_path).write_bytes(b"frames!!")
        with pytest.raises(StorageIntegrityError, match="checksum"):
            files.get_file(ref.id)

    def test_missing_blob_detected(self, files):
        ref = files.put_file(b"frames", "video", instance_id="ins_1")
        (files.root / ref.rel_path).unlink()
        with pytest.raises(StorageIntegrityError, match="missing"):
            files.get_file(ref.id)

    def test_deactivate_frees_the_slot(self, files, relational):
        ref = files.put_file(b"one", "video", instance_id="ins_1")
        files.deactivate(ref.id)
        assert relational.get_instance("ins_1").recording_ref is None
        again = files.put_file(b"two", "video", instance_id="ins_1")
        assert relational.get_instance("ins_1").recording_ref == again.id

    def test_unknown_media_kind(self, files):
        with pytest.raises(DomainError):
            files.put_file(b"x", "hologram")


class TestIntegrityAudit:
    def test_clean_state(self, relational, documents, tmp_path):
        seed_world(relational)
        documents.store("feedback_candidates", candidate_doc())
        report = run_integrity_audit(relational, documents)
        assert report["ok"]
        assert report["checked"]["feedback_candidates"] == 1

    def test_orphan_document_reported(self, relational, documents):
        seed_world(relational)
        documents.store("feedback_candidates",
                        candidate_doc(instance_id="ins_ghost"))
        report = run_integrity_audit(relational, documents)
        assert not report["ok"]
        assert report["orphans"][0]["instance_id"] == "ins_ghost"

    def test_version_gap_reported(self, relational, documents, tmp_path):
        from feedbackforge.curation import CurationService
        seed_world(relational)
        relational.set_instance_status("ins_1", "generating")
        relational.set_instance_status("ins_1", "curating")
        svc = CurationService(documents, relational)
        first = svc.compose("ins_1", [{"teacher_text": "One."}],
                            composed_by="usr_t")
        svc.compose("ins_1", [{"teacher_text": "Two."}], composed_by="usr_t")
        # simulate losing version 1 on disk
        path = documents._path_for("composed_feedback", first.id)
        path.unlink()
        report = run_integrity_audit(relational, documents)
        assert report["version_issues"] == [
            {"instance_id": "ins_1", "versions": [2]}]

    def test_broken_rating_reference(self, relational, documents):
        seed_world(relational)
        documents.store("feedback_ratings", {
            "instance_id": "ins_1",
            "feedback_version_id": "cfb_missing",
            "rater_id": "usr_a",
            "agreement": 4,
            "usefulness": 5,
        })
        report = run_integrity_audit(relational, documents)
        assert report["broken_references"][0]["feedback_version_id"] == "cfb_missing"

    def test_file_issues_reported(self, relational, documents, tmp_path):
        seed_world(relational)
        files = FileService(tmp_path / "media", relational)
        ref = files.put_file(b"frames", "video", instance_id="ins_1")
        (files.root / ref.rel_path).write_bytes(b"changed")
        report = run_integrity_audit(relational, documents,
                                     file_root=files.root)
        assert report["file_issues"] == [
            {"file_id": ref.id, "issue": "checksum mismatch"}]
        (files.root / ref.rel_path).unlink()
        report = run_integrity_audit(relational, documents,
                                     file_root=files.root)
        assert report["file_issues"] == [
            {"file_id": ref.id, "issue": "blob missing"}]

    def test_audit_skips_blob_checks_without_root(self, relational, documents):
        seed_world(relational)
        relational.register_file("fil_1", instance_id="ins_1",
                                 media_kind="video", rel_path="blobs/x.bin",
                                 sha256="0" * 64, byte_size=1)
        report = run_integrity_audit(relational, documents)
        assert report["ok"]


class TestEvaluationRoundTrip:
    def test_save_and_load_with_events(self, relational):
        from feedbackforge.model import InteractionEvent
        seed_world(relational)
        when = from_rfc3339("2025-05-01T09:00:00.000Z")
        ev = Evaluation(id="ev_1", instance_id="ins_1", evaluator_id="usr_b",
                        evaluator_kind="peer", item_scores={"it_1": 4},
                        item_comments={"it_1": "Solid structure."},
                        submitted_at=when)
        events = [
            InteractionEvent(id="evt_1", evaluation_id="ev_1", item_id="it_1",
                             kind="rubric_level_viewed", occurred_at=when),
            InteractionEvent(id="evt_2", evaluation_id="ev_1", item_id="it_1",
                             kind="score_selected", occurred_at=when, value=4),
        ]
        relational.save_evaluation(ev, events)
        loaded = relational.get_evaluation("ev_1")
        assert loaded.item_scores == {"it_1": 4}
        assert loaded.item_comments == {"it_1": "Solid structure."}
        assert loaded.submitted_at == when
        loaded_events = relational.events_for_evaluation("ev_1")
        assert [e.kind for e in loaded_events] == [
            "rubric_level_viewed", "score_selected"]
        assert loaded_events[1].value == 4

    def test_instances_for_student(self, relational):
        seed_world(relational)
        assert relational.instance_ids_for_student("usr_a") == ["ins_1"]
        assert relational.instance_ids_for_student("usr_b") == []
