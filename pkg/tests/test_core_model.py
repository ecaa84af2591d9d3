import datetime

import pytest
from hypothesis import given, strategies as st

from feedbackforge.analytics import (
    aggregate_scores,
    compare_self_vs_aggregate,
    evaluation_timing_summary,
)
from feedbackforge.errors import DomainError, NotFoundError
from feedbackforge.model import (
    ALLOWED_STATUS_TRANSITIONS,
    Course,
    Evaluation,
    EvaluationInstance,
    InteractionEvent,
    Rubric,
    RubricItem,
    User,
    from_rfc3339,
    to_rfc3339,
    utcnow,
)
from oracles import (
    brute_force_aggregate,
    brute_force_self_comparison,
    brute_force_timing,
    recombine_by_kind,
)


def ev(eval_id, kind, scores, evaluator_id=None, instance_id="ins_1"):
    return Evaluation(
        id=eval_id, instance_id=instance_id,
        evaluator_id=evaluator_id or f"usr_{eval_id}",
        evaluator_kind=kind, item_scores=scores)


class TestDomainTypes:
    def test_user_role_is_validated(self):
        with pytest.raises(DomainError):
            User(id="u1", display_name="X", role="superuser")
        with pytest.raises(DomainError):
            User(id="u1", display_name="   ", role="student")

    def test_course_language_is_validated(self):
        with pytest.raises(DomainError):
            Course(id="c1", name="Course", language="fr")

    def test_rubric_invariants(self):
        item = RubricItem(id="a", title="A",
                          level_descriptions={1: "x", 2: "y"})
        rubric = Rubric(id="r", title="R", items=(item,), scale_min=1, scale_max=2)
        assert rubric.item("a") is item
        with pytest.raises(DomainError):
            rubric.item("missing")
        with pytest.raises(DomainError):
            Rubric(id="r", title="R", items=(), scale_min=1, scale_max=5)
        with pytest.raises(DomainError):
            Rubric(id="r", title="R", items=(item,), scale_min=5, scale_max=5)
        with pytest.raises(DomainError):
            # level 2 description missing for scale 1..2
            Rubric(id="r", title="R",
                   items=(RubricItem(id="a", title="A",
                                     level_descriptions={1: "x"}),),
                   scale_min=1, scale_max=2)

    def test_duplicate_rubric_item_ids_rejected(self):
        item = RubricItem(id="a", title="A", level_descriptions={1: "x", 2: "y"})
        with pytest.raises(DomainError):
            Rubric(id="r", title="R", items=(item, item), scale_min=1, scale_max=2)

    def test_self_evaluation_requires_subject_match(self):
        instance = EvaluationInstance(
            id="ins_1", course_id="c", rubric_id="r",
            subject_student_id="usr_subject", session_label="s1")
        assert instance.status == "collecting"
        bad = ev("e1", "self", {"a": 3}, evaluator_id="usr_other")
        assert bad.evaluator_kind == "self"  # kind itself is legal

    def test_status_transitions_table(self):
        assert ("collecting", "generating") in ALLOWED_STATUS_TRANSITIONS
        assert ("generating", "curating") in ALLOWED_STATUS_TRANSITIONS
        assert ("curating", "sent") in ALLOWED_STATUS_TRANSITIONS
        # the two sanctioned returns
        assert ("generating", "collecting") in ALLOWED_STATUS_TRANSITIONS
        assert ("sent", "curating") in ALLOWED_STATUS_TRANSITIONS
        # never backwards past curating, never skipping forward
        assert ("sent", "collecting") not in ALLOWED_STATUS_TRANSITIONS
        assert ("curating", "collecting") not in ALLOWED_STATUS_TRANSITIONS
        assert ("collecting", "sent") not in ALLOWED_STATUS_TRANSITIONS

    def test_timestamp_round_trip(self):
        now = utcnow()
        assert from_rfc3339(to_rfc3339(now)) == now
        assert to_rfc3339(now).endswith("Z")

    def test_user_round_trip(self):
        user = User(id="u1", display_name="Ana", role="teacher",
                    course_ids=frozenset({"c1", "c2"}), email="a@b.co")
        assert User.from_dict(user.to_dict()) == user

    def test_evaluation_round_trip(self):
        evaluation = Evaluation(
            id="e1", instance_id="i1", evaluator_id="u1",
            evaluator_kind="peer", item_scores={"a": 3},
            item_comments={"a": "solid"}, submitted_at=utcnow())
        assert Evaluation.from_dict(evaluation.to_dict()) == evaluation


class TestAggregateScores:
    def test_worked_example(self, rubric):
        evaluations = [
            ev("e1", "peer", {"it_a": 4}),
            ev("e2", "peer", {"it_a": 5}),
            ev("e3", "teacher", {"it_a": 3}),
        ]
        agg = aggregate_scores("ins_1", rubric, evaluations)
        assert agg["it_a"].mean == pytest.approx(4.0)
        assert agg["it_a"].count == 3
        assert agg["it_a"].by_kind == {"peer": 4.5, "teacher": 3.0}

    def test_single_evaluation(self, rubric):
        agg = aggregate_scores("ins_1", rubric, [ev("e1", "peer", {"it_a": 2})])
        assert agg["it_a"].mean == 2.0
        assert agg["it_a"].count == 1

    def test_self_scores_are_excluded(self, rubric):
        evaluations = [
            ev("e1", "peer", {"it_a": 4}),
            ev("e2", "self", {"it_a": 1}),
        ]
        agg = aggregate_scores("ins_1", rubric, evaluations)
        assert agg["it_a"].mean == 4.0
        assert agg["it_a"].count == 1

    def test_unscored_items_present_with_count_zero(self, rubric):
        agg = aggregate_scores("ins_1", rubric, [ev("e1", "peer", {"it_a": 4})])
        assert agg["it_b"].count == 0
        assert agg["it_b"].mean is None

    def test_mismatched_instance_rejected(self, rubric):
        with pytest.raises(DomainError):
            aggregate_scores("ins_other", rubric, [ev("e1", "peer", {"it_a": 4})])

    def test_out_of_range_score_rejected(self, rubric):
        with pytest.raises(DomainError):
            aggregate_scores("ins_1", rubric, [ev("e1", "peer", {"it_a": 6})])

    def test_matches_brute_force_oracle(self, rubric):
        import random
        rng = random.Random(73)
        kinds = ["peer", "peer", "peer", "teacher", "self"]
        evaluations = []
        for n in range(7):
            scores = {
                item.id: rng.randint(1, 5)
                for item in rubric.items if rng.random() > 0.25
            }
            evaluations.append(ev(f"e{n}", kinds[n % len(kinds)], scores))
        agg = aggregate_scores("ins_1", rubric, evaluations)
        expected = brute_force_aggregate([i.id for i in rubric.items], evaluations)
        for item_id, want in expected.items():
            got = agg[item_id]
            assert got.count == want["count"]
            if want["mean"] is None:
                assert got.mean is None
            else:
                assert got.mean == pytest.approx(want["mean"], abs=1e-12)
            assert got.by_kind_counts == want["by_kind_counts"]
            for kind, mean in want["by_kind"].items():
                assert got.by_kind[kind] == pytest.approx(mean, abs=1e-12)

    @given(st.lists(
        st.tuples(st.sampled_from(["peer", "teacher", "self"]),
                  st.dictionaries(st.sampled_from(["it_a", "it_b", "it_c"]),
                                  st.integers(1, 5), max_size=3)),
        max_size=8))
    def test_permutation_invariant_and_by_kind_recombines(self, specs):
        rubric = Rubric(
            id="rub_p", title="P",
            items=tuple(
                RubricItem(id=item_id, title=item_id.upper(),
                           level_descriptions={n: "d" for n in range(1, 6)})
                for item_id in ("it_a", "it_b", "it_c")))
        evaluations = [ev(f"e{i}", kind, scores)
                       for i, (kind, scores) in enumerate(specs)]
        agg = aggregate_scores("ins_1", rubric, evaluations)
        shuffled = aggregate_scores("ins_1", rubric, list(reversed(evaluations)))
        assert {k: v.to_dict() for k, v in agg.items()} == \
            {k: v.to_dict() for k, v in shuffled.items()}
        for item in agg.values():
            if item.count:
                rebuilt = recombine_by_kind({
                    "by_kind": item.by_kind,
                    "by_kind_counts": item.by_kind_counts,
                    "count": item.count})
                assert abs(rebuilt - item.mean) < 1e-9


class TestSelfComparison:
    def test_aligned_within_epsilon(self, rubric):
        agg = aggregate_scores("ins_1", rubric, [
            ev("e1", "peer", {"it_a": 4}), ev("e2", "peer", {"it_a": 5}),
            ev("e3", "teacher", {"it_a": 4}),
        ])
        self_eval = ev("es", "self", {"it_a": 4})
        cmp = compare_self_vs_aggregate(self_eval, agg)
        assert cmp["it_a"].delta == pytest.approx(4 - 13 / 3)
        assert cmp["it_a"].alignment == "aligned"

    def test_above_when_delta_exceeds_epsilon(self, rubric):
        agg = aggregate_scores("ins_1", rubric, [ev("e1", "peer", {"it_a": 3})])
        cmp = compare_self_vs_aggregate(ev("es", "self", {"it_a": 5}), agg)
        assert cmp["it_a"].delta == pytest.approx(2.0)
        assert cmp["it_a"].alignment == "above"

    def test_missing_side_reported_not_dropped(self, rubric):
        agg = aggregate_scores("ins_1", rubric, [ev("e1", "peer", {"it_a": 3})])
        cmp = compare_self_vs_aggregate(ev("es", "self", {"it_b": 2}), agg)
        assert cmp["it_b"].alignment is None
        assert cmp["it_a"].alignment is None
        assert set(cmp) == {"it_a", "it_b", "it_c"}

    def test_missing_self_eval_raises(self):
        with pytest.raises(NotFoundError):
            compare_self_vs_aggregate(None, {})

    def test_equal_scores_all_aligned(self, rubric):
        evaluations = [ev("e1", "peer", {"it_a": 4, "it_b": 2, "it_c": 5})]
        agg = aggregate_scores("ins_1", rubric, evaluations)
        cmp = compare_self_vs_aggregate(
            ev("es", "self", {"it_a": 4, "it_b": 2, "it_c": 5}), agg)
        assert all(c.alignment == "aligned" and c.delta == 0 for c in cmp.values())

    def test_matches_brute_force(self, rubric):
        import random
        rng = random.Random(11)
        evaluations = [
            ev(f"e{n}", kind, {i.id: rng.randint(1, 5) for i in rubric.items})
            for n, kind in enumerate(["peer", "peer", "teacher"])
        ]
        self_scores = {i.id: rng.randint(1, 5) for i in rubric.items}
        agg = aggregate_scores("ins_1", rubric, evaluations)
        cmp = compare_self_vs_aggregate(ev("es", "self", self_scores), agg)
        want = brute_force_self_comparison(
            self_scores, {k: {"mean": v.mean} for k, v in agg.items()})
        for item_id, expected in want.items():
            if expected["delta"] is None:
                assert cmp[item_id].delta is None
            else:
                assert cmp[item_id].delta == pytest.approx(expected["delta"])
            assert cmp[item_id].alignment == expected["alignment"]


class TestTimingSummary:
    def _event(self, eid, item_id, kind, minute, value=None):
        return InteractionEvent(
            id=eid, evaluation_id="e1", item_id=item_id, kind=kind,
            occurred_at=datetime.datetime(2025, 3, 1, 10, minute,
                                          tzinfo=datetime.timezone.utc),
            value=value)

    def test_single_selection_no_revision(self):
        events = [self._event("v1", "it_a", "score_selected", 0, 4)]
        summary = evaluation_timing_summary(events)
        assert summary["it_a"].revision_count == 0

    def test_three_selections_two_revisions(self):
        events = [self._event(f"v{n}", "it_a", "score_selected", n, n)
                  for n in range(3)]
        summary = evaluation_timing_summary(events)
        assert summary["it_a"].revision_count == 2
        assert summary["it_a"].first_score_at < summary["it_a"].last_score_at

    def test_empty_stream(self):
        assert evaluation_timing_summary([]) == {}

    def test_mixed_stream_matches_oracle(self):
        events = [
            self._event("v1", "it_a", "rubric_level_viewed", 0),
            self._event("v2", "it_a", "score_selected", 1, 3),
            self._event("v3", "it_b", "score_selected", 2, 4),
            self._event("v4", "it_a", "score_selected", 3, 4),
            self._event("v5", "it_b", "comment_edited", 4),
            self._event("v6", "it_a", "score_selected", 5, 5),
        ]
        summary = evaluation_timing_summary(events)
        expected = brute_force_timing(events)
        for item_id, want in expected.items():
            assert summary[item_id].revision_count == want["revisions"]
            assert summary[item_id].first_score_at == want["first"]
            assert summary[item_id].last_score_at == want["last"]

    def test_cross_evaluation_stream_rejected(self):
        events = [
            self._event("v1", "it_a", "score_selected", 0, 3),
            InteractionEvent(id="v2", evaluation_id="e2", item_id="it_a",
                             kind="score_selected", occurred_at=utcnow()),
        ]
        with pytest.raises(DomainError):
            evaluation_timing_summary(events)
