"""Structured prompt assembly.

A template is an ordered list of segments; the builder renders each in
order from the aggregate, the screened comments, the rubric level
descriptions and the course materials, producing byte-identical output
for identical inputs. Everything that reaches this module is already
anonymized; evaluator attribution uses role labels only.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

from .analytics import ItemAggregate
from .errors import ConfigError, DomainError
from .model import EvaluationInstance, MaterialRef, Rubric, new_id
from .preprocess import ScreenedComment
from .validation import ValidationPolicy

SEGMENT_KINDS = (
    "literal",
    "scores_block",
    "comments_block",
    "rubric_levels_block",
    "materials_block",
    "output_schema_block",
)

#: Provider token budget for the whole prompt, approximated as 4 chars
#: per token.
DEFAULT_TOKEN_BUDGET = 8000
CHARS_PER_TOKEN = 4
#: Per-material excerpt cap in characters.
DEFAULT_MATERIAL_EXCERPT_CHARS = 1500

_STRINGS = {
    "en": {
        "scores_header": "Average scores per criterion (Likert scale {lo}-{hi}):",
        "no_scores": "no scores yet (n=0)",
        "comments_header": "Evaluator observations by criterion:",
        "no_comments": "No qualitative observations were provided for this assessment.",
        "levels_header": "Rubric level descriptions:",
        "materials_header": "Instructional material excerpts:",
        "roles": {"peer": "a peer", "teacher": "a teacher", "self": "a self-assessment"},
        "output_schema": (
            "Write personalized feedback for the student based on the assessment above.\n"
            "Structure it as exactly three paragraphs separated by blank lines: the first "
            "on strengths, the second on areas for improvement, the third a concrete "
            "action plan.\n"
            "Write between {min_words} and {max_words} words, in English.\n"
            "Never mention any evaluator or student by name; refer to people only by "
            "their role."
        ),
    },
    "es": {
        "scores_header": "Puntuaciones medias por criterio (escala Likert {lo}-{hi}):",
        "no_scores": "sin puntuaciones (n=0)",
        "comments_header": "Observaciones de los evaluadores por criterio:",
        "no_comments": "No se aportaron observaciones cualitativas para esta evaluación.",
        "levels_header": "Descripciones de los niveles de la rúbrica:",
        "materials_header": "Extractos del material docente:",
        "roles": {"peer": "una persona evaluadora par", "teacher": "el profesorado",
                  "self": "una autoevaluación"},
        "output_schema": (
            "Redacta una retroalimentación personalizada para el o la estudiante a partir "
            "de la evaluación anterior.\n"
            "Organízala en exactamente tres párrafos separados por líneas en blanco: el "
            "primero sobre los puntos fuertes, el segundo sobre los aspectos a mejorar y "
            "el tercero con un plan de acción concreto.\n"
            "Escribe entre {min_words} y {max_words} palabras, en español.\n"
            "No menciones nunca a ninguna persona evaluadora ni estudiante por su nombre; "
            "refiérete a las personas solo por su rol."
        ),
    },
}


@dataclass(frozen=True)
class TemplateSegment:
    kind: str
    literal_text: str | None = None

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.literal_text is not None:
            d["literal_text"] = self.literal_text
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TemplateSegment:
        return cls(kind=d["kind"], literal_text=d.get("literal_text"))


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    course_id: str
    language: str
    segments: tuple[TemplateSegment, ...]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "course_id": self.course_id,
            "language": self.language,
            "segments": [s.to_dict() for s in self.segments],
        }

    @classmethod
    def from_dict(cls, d: dict) -> PromptTemplate:
        return cls(
            id=d["id"],
            course_id=d["course_id"],
            language=d["language"],
            segments=tuple(TemplateSegment.from_dict(s) for s in d["segments"]),
        )


def lint_template(template: PromptTemplate) -> list[str]:
    """Structural problems with a template; empty list means usable."""
    problems = []
    if template.language not in _STRINGS:
        problems.append(f"unsupported template language {template.language!r}")
    kinds = [s.kind for s in template.segments]
    for kind in kinds:
        if kind not in SEGMENT_KINDS:
            problems.append(f"unknown segment kind {kind!r}")
    if kinds.count("output_schema_block") != 1:
        problems.append("template must contain exactly one output_schema_block")
    if kinds.count("scores_block") < 1:
        problems.append("template must contain at least one scores_block")
    if kinds.count("comments_block") < 1:
        problems.append("template must contain at least one comments_block")
    for i, seg in enumerate(template.segments):
        if seg.kind == "literal" and not (seg.literal_text or "").strip():
            problems.append(f"literal segment {i} has no text")
    return problems


def default_template(course_id: str, language: str, template_id: str | None = None) -> PromptTemplate:
    intro = {
        "en": ("You are assisting a university teacher. Below is the rubric-based "
               "assessment of one student presentation."),
        "es": ("Estás ayudando a un profesor universitario. A continuación se muestra la "
               "evaluación por rúbrica de la presentación de un o una estudiante."),
    }[language]
    return PromptTemplate(
        id=template_id or new_id("tpl"),
        course_id=course_id,
        language=language,
        segments=(
            TemplateSegment("literal", intro),
            TemplateSegment("scores_block"),
            TemplateSegment("comments_block"),
            TemplateSegment("rubric_levels_block"),
            TemplateSegment("materials_block"),
            TemplateSegment("output_schema_block"),
        ),
    )


@dataclass(frozen=True)
class PromptBundle:
    id: str
    instance_id: str
    rendered_text: str
    template_id: str
    inputs_digest: str
    redaction_map_id: str | None = None
    truncated_material_ids: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "instance_id": self.instance_id,
            "rendered_text": self.rendered_text,
            "template_id": self.template_id,
            "inputs_digest": self.inputs_digest,
            "redaction_map_id": self.redaction_map_id,
            "truncated_material_ids": list(self.truncated_material_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> PromptBundle:
        return cls(
            id=d["id"],
            instance_id=d["instance_id"],
            rendered_text=d["rendered_text"],
            template_id=d["template_id"],
            inputs_digest=d["inputs_digest"],
            redaction_map_id=d.get("redaction_map_id"),
            truncated_material_ids=tuple(d.get("truncated_material_ids", ())),
        )


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / CHARS_PER_TOKEN)


def _render_scores(rubric: Rubric, aggregate: dict[str, ItemAggregate], strings: dict) -> str:
    lines = [_format_scores_header(rubric, strings)]
    for item in rubric.items:
        agg = aggregate.get(item.id)
        if agg is None or agg.mean is None:
            lines.append(f"- {item.title}: {strings['no_scores']}")
        else:
            lines.append(f"- {item.title}: {agg.mean:.1f} (n={agg.count})")
    return "\n".join(lines)


def _format_scores_header(rubric: Rubric, strings: dict) -> str:
    return strings["scores_header"].format(lo=rubric.scale_min, hi=rubric.scale_max)


def _render_comments(rubric: Rubric, comments: list[ScreenedComment], strings: dict) -> str:
    usable = [c for c in comments if c.relevant and c.normalized_text.strip()]
    if not usable:
        return "\n".join([strings["comments_header"], strings["no_comments"]])
    lines = [strings["comments_header"]]
    roles = strings["roles"]
    for item in rubric.items:
        item_comments = sorted(
            (c for c in usable if c.item_id == item.id),
            key=lambda c: (c.source_evaluation_id, c.normalized_text))
        if not item_comments:
            continue
        lines.append(f"[{item.title}]")
        for c in item_comments:
            label = roles.get(c.evaluator_kind, roles["peer"])
            lines.append(f"- ({label}) {c.normalized_text}")
    return "\n".join(lines)


def _render_levels(rubric: Rubric, strings: dict) -> str:
    lines = [strings["levels_header"]]
    for item in rubric.items:
        lines.append(f"{item.title}:")
        for level in range(rubric.scale_min, rubric.scale_max + 1):
            lines.append(f"  {level}: {item.level_descriptions[level]}")
    return "\n".join(lines)


def _render_materials(materials: list[MaterialRef], strings: dict,
                      excerpt_chars: int) -> str | None:
    if not materials:
        return None
    lines = [strings["materials_header"]]
    for m in materials:
        body = " ".join(m.body.split())
        if len(body) > excerpt_chars:
            body = body[:excerpt_chars].rstrip() + "…"
        lines.append(f"[{m.title}] {body}")
    return "\n".join(lines)


def _inputs_digest(rubric: Rubric, aggregate: dict[str, ItemAggregate],
                   comments: list[ScreenedComment], materials: list[MaterialRef],
                   template: PromptTemplate, policy: ValidationPolicy) -> str:
    payload = {
        "rubric": rubric.to_dict(),
        "aggregate": {k: v.to_dict() for k, v in sorted(aggregate.items())},
        "comment_ids": sorted(
            (c.source_evaluation_id, c.item_id, c.normalized_text)
            for c in comments if c.relevant),
        "materials": [(m.id, m.title, m.body) for m in materials],
        "template_id": template.id,
        "length_bounds": [policy.min_words, policy.max_words],
    }
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_prompt(
    instance: EvaluationInstance,
    rubric: Rubric,
    aggregate: dict[str, ItemAggregate],
    screened_comments: list[ScreenedComment],
    materials: list[MaterialRef],
    template: PromptTemplate,
    policy: ValidationPolicy | None = None,
    *,
    redaction_map_id: str | None = None,
    token_budget: int = DEFAULT_TOKEN_BUDGET,
    material_excerpt_chars: int = DEFAULT_MATERIAL_EXCERPT_CHARS,
) -> PromptBundle:
    """Render the template into the prompt sent to every provider.

    The policy supplies the length bounds quoted in the output-schema
    instruction. When the rendered prompt would exceed the token budget,
    materials are truncated last-first and the dropped ids recorded on the
    bundle.
    """
    problems = lint_template(template)
    if problems:
        raise ConfigError("; ".join(problems))
    if instance.course_id != template.course_id:
        raise ConfigError(
            f"template {template.id} belongs to course {template.course_id}, "
            f"not {instance.course_id}")
    if all(aggregate[item_id].count == 0 for item_id in aggregate) or not aggregate:
        raise DomainError("nothing to generate from: no evaluations aggregated")

    policy = policy or ValidationPolicy(language=template.language)
    strings = _STRINGS[template.language]

    def render(kept_materials: list[MaterialRef]) -> str:
        parts: list[str] = []
        for seg in template.segments:
            if seg.kind == "literal":
                parts.append(seg.literal_text or "")
            elif seg.kind == "scores_block":
                parts.append(_render_scores(rubric, aggregate, strings))
            elif seg.kind == "comments_block":
                parts.append(_render_comments(rubric, screened_comments, strings))
            elif seg.kind == "rubric_levels_block":
                parts.append(_render_levels(rubric, strings))
            elif seg.kind == "materials_block":
                block = _render_materials(kept_materials, strings, material_excerpt_chars)
                if block is not None:
                    parts.append(block)
            elif seg.kind == "output_schema_block":
                parts.append(strings["output_schema"].format(
                    min_words=policy.min_words, max_words=policy.max_words))
        return "\n\n".join(parts)

    kept = list(materials)
    truncated: list[str] = []
    rendered = render(kept)
    while estimate_tokens(rendered) > token_budget and kept:
        truncated.append(kept.pop().id)
        rendered = render(kept)
    if estimate_tokens(rendered) > token_budget:
        raise ConfigError(
            f"prompt exceeds token budget ({estimate_tokens(rendered)} > {token_budget}) "
            "even with all materials removed")

    return PromptBundle(
        id=new_id("pmt"),
        instance_id=instance.id,
        rendered_text=rendered,
        template_id=template.id,
        inputs_digest=_inputs_digest(rubric, aggregate, screened_comments,
                                     materials, template, policy),
        redaction_map_id=redaction_map_id,
        truncated_material_ids=tuple(truncated),
    )
