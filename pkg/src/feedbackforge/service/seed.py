"""Deterministic demo fixtures.

Seeds one course, one rubric, four users with static bearer tokens, one
evaluation instance and four submitted evaluations whose comments mention
roster names on purpose, so the anonymization path has real work to do.
Safe to run against an empty database only; reseeding an existing one
raises ConflictError.
"""
from __future__ import annotations

from ..errors import ConflictError
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
    utcnow,
)
from ..persistence import RelationalStore

TOKENS = {
    "usr_admin": "tok_admin",
    "usr_teacher": "tok_teacher",
    "usr_alice": "tok_alice",
    "usr_bob": "tok_bob",
    "usr_cara": "tok_cara",
    "usr_dan": "tok_dan",
}

_BASE_TS = "2025-03-10T10:00:00.000Z"


def seed_fixtures(relational: RelationalStore) -> dict:
    """Populate demo data; returns the created ids and tokens."""
    if relational.get_course("c_oratory") is not None:
        raise ConflictError("demo fixtures already present")

    users = [
        User(id="usr_admin", display_name="Site Admin", role="admin"),
        User(id="usr_teacher", display_name="Teresa Vega", role="teacher"),
        User(id="usr_alice", display_name="Alice Núñez", role="student",
             email="alice@example.edu"),
        User(id="usr_bob", display_name="Bob Iglesias", role="student",
             email="bob@example.edu"),
        User(id="usr_cara", display_name="Cara Day", role="student",
             email="cara@example.edu"),
        User(id="usr_dan", display_name="Dan Okafor", role="student",
             email="dan@example.edu"),
    ]
    for user in users:
        relational.save_user(user, api_token=TOKENS[user.id])

    course = Course(
        id="c_oratory", name="Public Speaking", language="en",
        material_refs=(
            MaterialRef(
                id="mat_structure", title="Structuring a short talk",
                body=("A short talk needs one clear claim. Open with the claim, "
                      "support it with two or three concrete examples, and close "
                      "by restating what the audience should remember. Signal "
                      "each transition out loud so listeners can follow.")),
            MaterialRef(
                id="mat_delivery", title="Delivery basics",
                body=("Delivery is pace, volume and eye contact. Aim for about "
                      "130 words per minute, pause after important points, and "
                      "look at a different part of the room every few sentences. "
                      "Nervous speed-ups are normal; planned pauses fix them.")),
        ))
    relational.save_course(course)
    for uid in ("usr_teacher", "usr_alice", "usr_bob", "usr_cara", "usr_dan"):
        relational.add_course_member("c_oratory", uid)

    relational.save_group("g_rhetoric", "c_oratory", "Rhetoric group")
    relational.set_group_member("g_rhetoric", "usr_alice", recording_consent=True)
    relational.set_group_member("g_rhetoric", "usr_bob", recording_consent=True)
    relational.set_group_member("g_rhetoric", "usr_cara", recording_consent=False)
    relational.set_group_member("g_rhetoric", "usr_dan", recording_consent=False)

    rubric = Rubric(
        id="r_talk", title="Short talk rubric",
        items=(
            RubricItem(
                id="it_clarity", title="Clarity of message",
                level_descriptions={
                    1: "No discernible main point.",
                    2: "Main point present but buried.",
                    3: "Main point stated but weakly supported.",
                    4: "Clear point with mostly relevant support.",
                    5: "One sharp claim, well supported throughout.",
                },
                relevance_terms=frozenset({
                    "clear", "clarity", "point", "message", "argument",
                    "structure", "claim"})),
            RubricItem(
                id="it_pace", title="Pace and delivery",
                level_descriptions={
                    1: "Rushed or halting throughout.",
                    2: "Often too fast or too slow.",
                    3: "Uneven pace with some recovery.",
                    4: "Mostly steady pace with deliberate pauses.",
                    5: "Controlled pace that serves the content.",
                },
                relevance_terms=frozenset({
                    "pace", "speed", "fast", "slow", "pause", "volume",
                    "delivery", "rushed"})),
            RubricItem(
                id="it_engagement", title="Audience engagement",
                level_descriptions={
                    1: "Read from notes, no audience contact.",
                    2: "Rare eye contact or interaction.",
                    3: "Some engagement, inconsistently held.",
                    4: "Regular eye contact and audience awareness.",
                    5: "Audience visibly follows and responds.",
                },
                relevance_terms=frozenset({
                    "eye contact", "audience", "engagement", "engaging",
                    "question", "interaction", "energy"})),
        ))
    relational.save_rubric(rubric, course_id="c_oratory")

    instance = EvaluationInstance(
        id="ins_demo", course_id="c_oratory", rubric_id="r_talk",
        subject_student_id="usr_alice", session_label="Session 1")
    relational.save_instance(instance)

    base = from_rfc3339(_BASE_TS)
    evaluations = [
        Evaluation(
            id="ev_teacher", instance_id="ins_demo", evaluator_id="usr_teacher",
            evaluator_kind="teacher",
            item_scores={"it_clarity": 4, "it_pace": 3, "it_engagement": 4},
            item_comments={
                "it_clarity": ("Alice Núñez opened with a clear claim and kept "
                               "the argument visible in every section."),
                "it_pace": ("The pace rushed in the middle; a planned pause "
                            "before the second example would help."),
            },
            submitted_at=base),
        Evaluation(
            id="ev_bob", instance_id="ins_demo", evaluator_id="usr_bob",
            evaluator_kind="peer",
            item_scores={"it_clarity": 5, "it_pace": 3, "it_engagement": 4},
            item_comments={
                "it_clarity": ("Really clear structure, alice made the main "
                               "point impossible to miss."),
                "it_engagement": ("Good eye contact with our side of the room, "
                                  "though Dan Okafor got most of it."),
            },
            submitted_at=base.replace(minute=5)),
        Evaluation(
            id="ev_cara", instance_id="ins_demo", evaluator_id="usr_cara",
            evaluator_kind="peer",
            item_scores={"it_clarity": 4, "it_pace": 2, "it_engagement": 3},
            item_comments={
                "it_pace": ("Too fast after the opening. Write to "
                            "alice@example.edu if you want my notes."),
            },
            submitted_at=base.replace(minute=10)),
        Evaluation(
            id="ev_self", instance_id="ins_demo", evaluator_id="usr_alice",
            evaluator_kind="self",
            item_scores={"it_clarity": 4, "it_pace": 4, "it_engagement": 3},
            item_comments={
                "it_engagement": ("I looked at the slides too much and lost "
                                  "the audience during the data part."),
            },
            submitted_at=base.replace(minute=15)),
    ]
    events = {
        "ev_bob": [
            InteractionEvent(
                id="evt_bob_1", evaluation_id="ev_bob", item_id="it_clarity",
                kind="rubric_level_viewed", occurred_at=base.replace(minute=3),
                value=4),
            InteractionEvent(
                id="evt_bob_2", evaluation_id="ev_bob", item_id="it_clarity",
                kind="score_selected", occurred_at=base.replace(minute=4),
                value=5),
        ],
    }
    for evaluation in evaluations:
        relational.save_evaluation(evaluation, events.get(evaluation.id, ()))

    relational.save_policy("pol_default", {
        "min_words": 80,
        "max_words": 400,
        "required_paragraphs": 3,
        "restricted_terms": ["stupid", "lazy", "idiot"],
        "language": "en",
        "max_regenerations": 3,
    })

    return {
        "course_id": course.id,
        "rubric_id": rubric.id,
        "instance_id": instance.id,
        "group_id": "g_rhetoric",
        "user_ids": [u.id for u in users],
        "evaluation_ids": [e.id for e in evaluations],
        "tokens": dict(TOKENS),
        "seeded_at": utcnow().isoformat(),
    }
