"""Generation pipeline: evaluations -> screened anonymized comments ->
prompt -> provider fan-out with per-provider validation loops ->
segmented, persisted candidates.

Partial success is success: any provider that yields a candidate (passed
or best-effort) contributes; the run fails only when every provider does.
"""
from __future__ import annotations

import dataclasses
import logging
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from ..analytics import aggregate_scores
from ..curation import CurationService, FeedbackCandidate, segment
from ..errors import DomainError, GatewayError, NotFoundError
from ..gateway import ProviderCallError, ProviderDescriptor, build_provider
from ..preprocess import (
    RedactionMap,
    ResidualScanner,
    RosterPerson,
    anonymize,
    normalize_comment,
    screen_relevance,
)
from ..prompts import PromptBundle, PromptTemplate, build_prompt, default_template
from ..validation import ValidationPolicy, generate_validated
from ..model import new_id

logger = logging.getLogger("feedbackforge.pipeline")


@dataclass
class ProviderRunSummary:
    provider_id: str
    candidate_id: str | None
    passed: bool
    regenerations: int
    violation_codes: list[str]
    error: str | None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class GenerationReport:
    bundle: PromptBundle
    redaction_map: RedactionMap
    candidates: list[FeedbackCandidate]
    summaries: list[ProviderRunSummary]


def _roster_for_course(relational, course_id: str) -> list[RosterPerson]:
    return [RosterPerson(display_name=u.display_name, email=u.email)
            for u in relational.course_members(course_id)]


def _load_redaction_map(documents, instance_id: str) -> RedactionMap:
    """Latest stored map for the instance, re-keyed for this run.

    Entries carry over so placeholders stay stable across runs; each run
    stores its own immutable map document.
    """
    docs = documents.find("redaction_maps", instance_id=instance_id)
    if docs:
        rmap = RedactionMap.from_dict(docs[-1])
        rmap.id = new_id("red")
        return rmap
    return RedactionMap(instance_id=instance_id)


def effective_policy(relational, course) -> ValidationPolicy:
    """Course policy if stored, defaults otherwise; the course language
    always governs generation."""
    data = relational.policy_for_course(course.id)
    policy = ValidationPolicy.from_dict(data) if data else ValidationPolicy()
    if policy.language != course.language:
        policy = dataclasses.replace(policy, language=course.language)
    return policy


def _template_for(relational, course) -> PromptTemplate:
    data = relational.template_for(course.id, course.language)
    if data:
        return PromptTemplate.from_dict(data)
    return default_template(course.id, course.language)


def run_generation(
    relational,
    documents,
    instance_id: str,
    providers: list[ProviderDescriptor],
    *,
    provider_instances: dict | None = None,
    sleep=time.sleep,
    rng: random.Random | None = None,
) -> GenerationReport:
    instance = relational.get_instance(instance_id)
    if instance is None:
        raise NotFoundError(f"unknown instance {instance_id!r}")
    course = relational.get_course(instance.course_id)
    rubric = relational.get_rubric(instance.rubric_id)
    if course is None or rubric is None:
        raise NotFoundError("instance references a missing course or rubric")
    evaluations = relational.evaluations_for_instance(instance_id)
    if not evaluations:
        raise DomainError("no evaluations submitted yet")

    roster = _roster_for_course(relational, course.id)
    rmap = _load_redaction_map(documents, instance_id)

    screened = []
    for evaluation in evaluations:
        for item_id, text in sorted(evaluation.item_comments.items()):
            if item_id not in rubric.item_ids or not text.strip():
                continue
            normalized = normalize_comment(text)
            anonymized, rmap = anonymize(normalized, roster, rmap, instance_id)
            screened.append(screen_relevance(
                anonymized, rubric.item(item_id),
                source_evaluation_id=evaluation.id,
                original_text=text,
                evaluator_kind=evaluation.evaluator_kind))

    aggregate = aggregate_scores(instance_id, rubric, evaluations)
    policy = effective_policy(relational, course)
    template = _template_for(relational, course)
    bundle = build_prompt(
        instance, rubric, aggregate, screened, list(course.material_refs),
        template, policy, redaction_map_id=rmap.id)

    # Tripwire: no roster identity may survive into the outbound prompt.
    guard = ResidualScanner(roster)
    guard.assert_clean(bundle.rendered_text, context="prompt")

    documents.store("redaction_maps", rmap.to_dict(), doc_id=rmap.id)
    documents.store("prompt_bundles", bundle.to_dict(), doc_id=bundle.id)

    instances_by_id = dict(provider_instances or {})
    for descriptor in providers:
        if descriptor.id not in instances_by_id:
            instances_by_id[descriptor.id] = build_provider(descriptor)

    def run_one(descriptor: ProviderDescriptor):
        return generate_validated(
            bundle, descriptor, policy, redaction_map=rmap,
            provider=instances_by_id[descriptor.id], sleep=sleep, rng=rng)

    if not providers:
        raise DomainError("no providers configured")
    with ThreadPoolExecutor(max_workers=len(providers)) as pool:
        futures = [pool.submit(run_one, d) for d in providers]
        outcomes = []
        for descriptor, future in zip(providers, futures):
            try:
                outcomes.append((descriptor, future.result(), None))
            except (ProviderCallError, DomainError) as exc:
                outcomes.append((descriptor, None, exc))

    curation = CurationService(documents, relational)
    candidates: list[FeedbackCandidate] = []
    summaries: list[ProviderRunSummary] = []
    results_to_store: list[dict] = []
    for descriptor, validated, failure in outcomes:
        if failure is not None:
            logger.warning("provider %s failed: %s", descriptor.id, failure)
            if isinstance(failure, ProviderCallError):
                doc = failure.result.to_dict()
                doc["id"] = new_id("gen")
                results_to_store.append(doc)
            summaries.append(ProviderRunSummary(
                provider_id=descriptor.id, candidate_id=None, passed=False,
                regenerations=0, violation_codes=[], error=str(failure)))
            continue
        try:
            guard.assert_clean(validated.text,
                               context=f"candidate from {descriptor.id}")
        except DomainError as exc:
            logger.error("identity residue in %s output: %s", descriptor.id, exc)
            summaries.append(ProviderRunSummary(
                provider_id=descriptor.id, candidate_id=None, passed=False,
                regenerations=validated.regenerations, violation_codes=[],
                error=str(exc)))
            continue
        candidate = segment(validated.text, descriptor.id, instance_id,
                            validated.verdict)
        curation.store_candidate(candidate)
        candidates.append(candidate)
        doc = validated.candidate.to_dict()
        doc["id"] = new_id("gen")
        doc["regenerations"] = validated.regenerations
        doc["candidate_id"] = candidate.id
        results_to_store.append(doc)
        summaries.append(ProviderRunSummary(
            provider_id=descriptor.id, candidate_id=candidate.id,
            passed=validated.passed, regenerations=validated.regenerations,
            violation_codes=[v.code for v in validated.verdict.violations],
            error=None))

    for doc in results_to_store:
        documents.store("generation_results", doc)

    if not candidates:
        raise GatewayError("no provider produced a candidate",
                           [s.to_dict() for s in summaries])
    return GenerationReport(bundle=bundle, redaction_map=rmap,
                            candidates=candidates, summaries=summaries)
