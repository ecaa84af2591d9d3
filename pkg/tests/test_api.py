import threading
from concurrent.futures import ThreadPoolExecutor

import pytest
from fastapi.testclient import TestClient

from conftest import bearer
from feedbackforge.service.app import ROUTE_ACCESS
from oracles import brute_force_aggregate

TOKENS = {
    "admin": "tok_admin",
    "teacher": "tok_teacher",
    "subject_student": "tok_alice",
    "other_student": "tok_bob",
}
STUDENT_IDS = {"subject_student": "usr_alice", "other_student": "usr_bob"}


def expect_allowed(persona: str, grants: frozenset) -> bool:
    """Mirror of the documented access table.

    Students get "student" routes everywhere, "student:self" routes on
    their own id (the matrix fills {student_id} with the caller), and
    "student:subject" routes only when they are the instance subject.
    """
    if persona == "admin":
        return "admin" in grants
    if persona == "teacher":
        return "teacher" in grants
    if "student" in grants or "student:self" in grants:
        return True
    if "student:subject" in grants:
        return persona == "subject_student"
    return False


def fill_path(path: str, ids: dict, persona: str) -> str:
    student_id = STUDENT_IDS.get(persona, "usr_alice")
    return (path
            .replace("{instance_id}", "ins_demo")
            .replace("{student_id}", student_id)
            .replace("{draft_id}", ids["draft_id"])
            .replace("{version_id}", ids["version_id"])
            .replace("{file_id}", ids["file_id"])
            .replace("{course_id}", "c_oratory"))


def drive_to_sent(client) -> dict:
    """Generate, compose, send, and upload a recording on ins_demo so
    every path parameter in the route table resolves to a real row."""
    teacher = bearer("tok_teacher")
    r = client.post("/instances/ins_demo/generate", headers=teacher)
    assert r.status_code == 202, r.text
    cands = client.get("/instances/ins_demo/candidates",
                       headers=teacher).json()["candidates"]
    sel = [{"candidate_id": cands[0]["id"],
            "sentence_id": cands[0]["paragraphs"][0][0]["id"]},
           {"teacher_text": "Keep rehearsing the transitions."}]
    r = client.post("/instances/ins_demo/compose", headers=teacher,
                    json={"selections": sel})
    assert r.status_code == 201, r.text
    draft = r.json()
    r = client.post(f"/drafts/{draft['id']}/send", headers=teacher,
                    json={"idempotency_key": "matrix-send"})
    assert r.status_code == 200, r.text
    r = client.post("/instances/ins_demo/recording?media_kind=video",
                    headers=teacher, content=b"fake video bytes")
    assert r.status_code == 201, r.text
    return {"draft_id": draft["id"], "version_id": draft["id"],
            "file_id": r.json()["id"]}


class TestRouteMatrix:
    def test_every_route_for_every_persona(self, seeded_client):
        ids = drive_to_sent(seeded_client)
        for method, path, grants in ROUTE_ACCESS:
            no_auth = seeded_client.request(method, fill_path(path, ids, "admin"))
            assert no_auth.status_code == 401, (method, path, no_auth.text)
            assert no_auth.headers.get("www-authenticate") == "Bearer"
            bad = seeded_client.request(method, fill_path(path, ids, "admin"),
                                        headers=bearer("tok_forged"))
            assert bad.status_code == 401, (method, path, bad.text)
            for persona, token in TOKENS.items():
                url = fill_path(path, ids, persona)
                kwargs = {"headers": bearer(token)}
                if method in ("POST", "PUT"):
                    kwargs["json"] = {}
                response = seeded_client.request(method, url, **kwargs)
                if expect_allowed(persona, grants):
                    assert response.status_code not in (401, 403), (
                        method, path, persona, response.status_code, response.text)
                else:
                    assert response.status_code == 403, (
                        method, path, persona, response.status_code, response.text)

    def test_openapi_lists_exactly_the_route_table(self, seeded_client):
        schema = seeded_client.get("/openapi.json").json()["paths"]
        table = {(m, p) for m, p, _ in ROUTE_ACCESS}
        served = {(method.upper(), path)
                  for path, methods in schema.items()
                  for method in methods}
        unauthenticated = {("GET", "/healthz"), ("GET", "/readyz")}
        assert table | unauthenticated == served


class TestErrors:
    def test_error_body_shape(self, seeded_client):
        r = seeded_client.get("/instances/ins_ghost", headers=bearer("tok_teacher"))
        assert r.status_code == 404
        body = r.json()["error"]
        assert body["type"] == "NotFoundError"
        assert "ins_ghost" in body["detail"]

    def test_validation_error_carries_the_item(self, seeded_client):
        r = seeded_client.post("/evaluations", headers=bearer("tok_dan"), json={
            "instance_id": "ins_demo", "item_scores": {"it_clarity": 99}})
        assert r.status_code == 422
        assert "it_clarity" in r.json()["error"]["detail"]

    def test_wrong_body_type_rejected(self, seeded_client):
        r = seeded_client.post("/evaluations", headers=bearer("tok_dan"), json={
            "instance_id": "ins_demo", "item_scores": {"it_clarity": "four"}})
        assert r.status_code == 422

    def test_expired_token_is_unauthorized(self, seeded_client):
        from feedbackforge.model import from_rfc3339
        seeded_client.app_relational.set_api_token(
            "usr_bob", "tok_stale",
            expires_at=from_rfc3339("2020-01-01T00:00:00.000Z"))
        r = seeded_client.get("/students/usr_bob/history",
                              headers=bearer("tok_stale"))
        assert r.status_code == 401

    def test_health_and_readiness_open(self, seeded_client):
        assert seeded_client.get("/healthz").json() == {"status": "ok"}
        ready = seeded_client.get("/readyz")
        assert ready.status_code == 200
        assert ready.json()["status"] == "ready"


class TestStudentIsolation:
    def test_history_is_private(self, seeded_client):
        r = seeded_client.get("/students/usr_alice/history",
                              headers=bearer("tok_bob"))
        assert r.status_code == 403
        r = seeded_client.get("/students/usr_bob/history",
                              headers=bearer("tok_bob"))
        assert r.status_code == 200
        assert r.json() == {"entries": []}

    def test_student_view_restricted_to_subject(self, seeded_client):
        assert seeded_client.get("/instances/ins_demo/student-view",
                                 headers=bearer("tok_cara")).status_code == 403
        r = seeded_client.get("/instances/ins_demo/student-view",
                              headers=bearer("tok_alice"))
        assert r.status_code == 200
        body = r.json()
        assert body["feedback"] is None  # nothing sent yet
        assert body["self_comparison"] is not None

    def test_teacher_routes_closed_to_students(self, seeded_client):
        for path in ("/instances/ins_demo", "/instances/ins_demo/candidates",
                     "/instances/ins_demo/history"):
            r = seeded_client.get(path, headers=bearer("tok_alice"))
            assert r.status_code == 403, path


class TestAggregateThroughApi:
    def test_matches_brute_force_oracle(self, seeded_client):
        r = seeded_client.get("/instances/ins_demo/evaluations",
                              headers=bearer("tok_teacher"))
        assert r.status_code == 200
        body = r.json()
        evaluations = seeded_client.app_relational.evaluations_for_instance(
            "ins_demo")
        rubric = seeded_client.app_relational.get_rubric("r_talk")
        expected = brute_force_aggregate(
            [item.id for item in rubric.items], evaluations)
        for item_id, want in expected.items():
            got = body["aggregate"][item_id]
            assert got["count"] == want["count"], item_id
            if want["count"]:
                assert abs(got["mean"] - want["mean"]) < 1e-9, item_id
            for kind, kind_mean in want["by_kind"].items():
                assert abs(got["by_kind"][kind] - kind_mean) < 1e-9

    def test_self_scores_never_in_aggregate(self, seeded_client):
        body = seeded_client.get("/instances/ins_demo/evaluations",
                                 headers=bearer("tok_teacher")).json()
        for entry in body["aggregate"].values():
            assert "self" not in entry["by_kind"]


class TestConcurrency:
    def test_four_evaluators_submit_in_parallel(self, make_app):
        app, relational, _ = make_app()
        teacher = TestClient(app)
        r = teacher.post("/instances", headers=bearer("tok_teacher"), json={
            "course_id": "c_oratory", "rubric_id": "r_talk",
            "subject_student_id": "usr_bob", "session_label": "Round 2"})
        assert r.status_code == 201, r.text
        instance_id = r.json()["id"]

        submissions = {
            "tok_teacher": {"it_clarity": 4, "it_pace": 3, "it_engagement": 5},
            "tok_alice": {"it_clarity": 5, "it_pace": 4, "it_engagement": 4},
            "tok_cara": {"it_clarity": 3, "it_pace": 3, "it_engagement": 3},
            "tok_dan": {"it_clarity": 2, "it_pace": 5, "it_engagement": 4},
        }

        def submit(token):
            client = TestClient(app)
            return client.post("/evaluations", headers=bearer(token), json={
                "instance_id": instance_id,
                "item_scores": submissions[token],
                "item_comments": {"it_clarity": "Clear enough."},
            })

        with ThreadPoolExecutor(max_workers=4) as pool:
            responses = list(pool.map(submit, submissions))
        assert [r.status_code for r in responses] == [201] * 4

        evaluations = relational.evaluations_for_instance(instance_id)
        assert len(evaluations) == 4
        rubric = relational.get_rubric("r_talk")
        expected = brute_force_aggregate(
            [item.id for item in rubric.items], evaluations)
        body = teacher.get(f"/instances/{instance_id}/evaluations",
                           headers=bearer("tok_teacher")).json()
        for item_id, want in expected.items():
            assert abs(body["aggregate"][item_id]["mean"] - want["mean"]) < 1e-9

    def test_generation_race_admits_exactly_one(self, make_app):
        app, relational, documents = make_app()
        barrier = threading.Barrier(10)

        def fire(_):
            client = TestClient(app)
            barrier.wait()
            return client.post("/instances/ins_demo/generate",
                               headers=bearer("tok_teacher")).status_code

        with ThreadPoolExecutor(max_workers=10) as pool:
            statuses = list(pool.map(fire, range(10)))
        assert statuses.count(202) == 1, statuses
        assert statuses.count(409) == 9, statuses
        assert documents.count("feedback_candidates") == 3
        assert relational.get_instance("ins_demo").status == "curating"

    def test_send_idempotency_over_http(self, seeded_client):
        ids = drive_to_sent(seeded_client)
        first = seeded_client.post(f"/drafts/{ids['draft_id']}/send",
                                   headers=bearer("tok_teacher"),
                                   json={"idempotency_key": "matrix-send"})
        assert first.status_code == 200
        repeat = seeded_client.post(f"/drafts/{ids['draft_id']}/send",
                                    headers=bearer("tok_teacher"),
                                    json={"idempotency_key": "matrix-send"})
        assert repeat.status_code == 200
        assert repeat.json()["sent_at"] == first.json()["sent_at"]
        bare = seeded_client.post(f"/drafts/{ids['draft_id']}/send",
                                  headers=bearer("tok_teacher"), json={})
        assert bare.status_code == 409


class TestStudentFeedbackFlow:
    def test_view_rate_and_rerate(self, seeded_client):
        ids = drive_to_sent(seeded_client)
        view = seeded_client.get("/instances/ins_demo/student-view",
                                 headers=bearer("tok_alice")).json()
        assert view["feedback"]["version"] == 1
        assert view["feedback"]["rating"] is None
        assert view["recording"]["file_id"] == ids["file_id"]

        version_id = view["feedback"]["id"]
        r = seeded_client.post(f"/feedback/{version_id}/rating",
                               headers=bearer("tok_alice"),
                               json={"agreement": 4, "usefulness": 5})
        assert r.status_code == 201, r.text
        duplicate = seeded_client.post(f"/feedback/{version_id}/rating",
                                       headers=bearer("tok_alice"),
                                       json={"agreement": 2, "usefulness": 2})
        assert duplicate.status_code == 409
        out_of_scale = seeded_client.post(f"/feedback/{version_id}/rating",
                                          headers=bearer("tok_bob"),
                                          json={"agreement": 4, "usefulness": 5})
        assert out_of_scale.status_code == 403  # not the subject

        view = seeded_client.get("/instances/ins_demo/student-view",
                                 headers=bearer("tok_alice")).json()
        assert view["feedback"]["rating"]["agreement"] == 4

    def test_rating_respects_rubric_scale(self, seeded_client):
        ids = drive_to_sent(seeded_client)
        r = seeded_client.post(f"/feedback/{ids['version_id']}/rating",
                               headers=bearer("tok_alice"),
                               json={"agreement": 6, "usefulness": 3})
        assert r.status_code == 422

    def test_recording_download_access(self, seeded_client):
        ids = drive_to_sent(seeded_client)
        ok = seeded_client.get(f"/files/{ids['file_id']}",
                               headers=bearer("tok_alice"))
        assert ok.status_code == 200
        assert ok.content == b"fake video bytes"
        assert seeded_client.get(f"/files/{ids['file_id']}",
                                 headers=bearer("tok_bob")).status_code == 403


class TestAutoGenerateTrigger:
    def test_submission_threshold_starts_generation(self, make_app):
        app, relational, documents = make_app(auto_generate_after=5)
        client = TestClient(app)
        r = client.post("/evaluations", headers=bearer("tok_dan"), json={
            "instance_id": "ins_demo",
            "item_scores": {"it_clarity": 3, "it_pace": 4, "it_engagement": 3}})
        assert r.status_code == 201, r.text
        # the fifth evaluation tips the threshold; the job runs inline
        assert relational.get_instance("ins_demo").status == "curating"
        assert documents.count("feedback_candidates") == 3

    def test_below_threshold_stays_collecting(self, make_app):
        app, relational, _ = make_app(auto_generate_after=9)
        client = TestClient(app)
        client.post("/evaluations", headers=bearer("tok_dan"), json={
            "instance_id": "ins_demo",
            "item_scores": {"it_clarity": 3, "it_pace": 4, "it_engagement": 3}})
        assert relational.get_instance("ins_demo").status == "collecting"
