/** HTML renderers for the dashboard.
 *
 * Every view is a pure function from API payloads (plus local
 * composition state) to an HTML string, so they are testable without a
 * browser; main.ts owns all DOM wiring. Dynamic text is always escaped.
 */
import type {
  CandidatePayload,
  ComposedPayload,
  EvaluationsPayload,
  HistoryEntry,
  VersionSummary,
} from "./types.js";
import { CompositionState } from "./compose.js";
import {
  SOURCE_COLORS,
  renderLegendBar,
  renderLegendLabels,
} from "./legend.js";
import {
  EMPTY_HISTORY_MESSAGE,
  GENERATION_RUNNING_MESSAGE,
  READ_ONLY_MESSAGE,
  UNPASSED_CANDIDATE_MESSAGE,
} from "./messages.js";

const ESCAPES: Record<string, string> = {
  "&": "&amp;",
  "<": "&lt;",
  ">": "&gt;",
  '"': "&quot;",
  "'": "&#39;",
};

export function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (ch) => ESCAPES[ch] as string);
}

function sourceChip(source: keyof typeof SOURCE_COLORS): string {
  return (
    `<span class="source-chip" data-source="${source}" ` +
    `style="background:${SOURCE_COLORS[source]}">${source}</span>`
  );
}

// -- candidate review

export function renderCandidatePanels(
  candidates: CandidatePayload[],
  state: CompositionState,
): string {
  const disabled = state.locked || state.readOnly ? " disabled" : "";
  const panels = candidates
    .map((candidate) => {
      const verdictNote = candidate.verdict.passed
        ? ""
        : `<div class="unpassed-note" role="note">` +
          `<p>${escapeHtml(UNPASSED_CANDIDATE_MESSAGE)}</p><ul>` +
          candidate.verdict.violations
            .map(
              (v) =>
                `<li>${escapeHtml(v.code)}: ${escapeHtml(v.detail)}</li>`,
            )
            .join("") +
          `</ul></div>`;
      const paragraphs = candidate.paragraphs
        .map((paragraph, index) => {
          const sentences = paragraph
            .map((sentence) => {
              const checked = state.isSelected(candidate.id, sentence.id)
                ? " checked"
                : "";
              return (
                `<label class="sentence"><input type="checkbox" ` +
                `class="sentence-toggle" data-candidate="${candidate.id}" ` +
                `data-sentence="${sentence.id}"${checked}${disabled}> ` +
                `${escapeHtml(sentence.text)}</label>`
              );
            })
            .join("");
          return (
            `<div class="paragraph" data-paragraph="${index}">` +
            `<button class="select-paragraph" data-candidate="${candidate.id}" ` +
            `data-paragraph="${index}"${disabled}>Select paragraph</button>` +
            sentences +
            `</div>`
          );
        })
        .join("");
      return (
        `<section class="candidate" data-candidate="${candidate.id}">` +
        `<header>${sourceChip(candidate.source)} ` +
        `<strong>${escapeHtml(candidate.provider_id)}</strong></header>` +
        verdictNote +
        paragraphs +
        `</section>`
      );
    })
    .join("");
  return `<div class="candidate-panels">${panels}</div>`;
}

// -- composition editor

export function renderCompositionEditor(state: CompositionState): string {
  const disabled = state.locked || state.readOnly ? " disabled" : "";
  const rows = state.entries
    .map((entry, index) => {
      const editedBadge = state.editedAt(index)
        ? `<span class="edited-badge" ` +
          `title="original: ${escapeHtml(entry.originText ?? "")}">edited</span>`
        : "";
      return (
        `<li class="composition-entry" data-index="${index}">` +
        sourceChip(entry.source) +
        `<span class="entry-text">${escapeHtml(entry.text)}</span>` +
        editedBadge +
        `<button class="move-up" data-index="${index}"${disabled}>up</button>` +
        `<button class="move-down" data-index="${index}"${disabled}>down</button>` +
        `<button class="edit-entry" data-index="${index}"${disabled}>edit</button>` +
        `<button class="remove-entry" data-index="${index}"${disabled}>remove</button>` +
        `</li>`
      );
    })
    .join("");
  return (
    `<div class="composition-editor"><ol class="composition">${rows}</ol>` +
    `<form class="add-teacher-sentence">` +
    `<input type="text" name="teacher_text" placeholder="Add your own sentence"${disabled}>` +
    `<button type="submit"${disabled}>Add</button></form>` +
    `<h3>Preview</h3>` +
    `<p class="preview" data-preview>${escapeHtml(state.previewText())}</p></div>`
  );
}

// -- evaluation detail

export function renderEvaluationDetail(payload: EvaluationsPayload): string {
  const header = payload.evaluations
    .map(
      (e) =>
        `<th data-evaluation="${e.id}">` +
        `${escapeHtml(e.evaluator_name ?? e.evaluator_id)} ` +
        `<em>${e.evaluator_kind}</em></th>`,
    )
    .join("");
  const rows = payload.rubric.items
    .map((item) => {
      const cells = payload.evaluations
        .map((e) => {
          const score = e.item_scores[item.id];
          const comment = e.item_comments[item.id];
          return (
            `<td>${score === undefined ? "" : `<b class="score">${score}</b>`}` +
            `${comment ? `<p class="comment">${escapeHtml(comment)}</p>` : ""}</td>`
          );
        })
        .join("");
      const agg = payload.aggregate[item.id];
      const aggCell = agg
        ? `<td class="aggregate">${agg.mean === null ? "" : agg.mean.toFixed(2)}` +
          ` (n=${agg.count})</td>`
        : `<td class="aggregate"></td>`;
      const cmp = payload.self_comparison?.[item.id];
      const cmpCell =
        cmp && cmp.delta !== null
          ? `<td class="self-comparison">${cmp.delta > 0 ? "+" : ""}${cmp.delta.toFixed(2)}` +
            ` ${escapeHtml(cmp.alignment ?? "")}</td>`
          : `<td class="self-comparison"></td>`;
      return (
        `<tr data-item="${item.id}">` +
        `<th scope="row">${escapeHtml(item.title)}</th>` +
        cells +
        aggCell +
        cmpCell +
        `</tr>`
      );
    })
    .join("");
  return (
    `<table class="evaluation-detail"><thead><tr><th>Item</th>${header}` +
    `<th>Aggregate</th><th>Self vs aggregate</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>`
  );
}

// -- history

export function renderHistoryView(entries: HistoryEntry[]): string {
  if (entries.length === 0) {
    return `<p class="empty-history">${escapeHtml(EMPTY_HISTORY_MESSAGE)}</p>`;
  }
  const cards = entries
    .map((entry) => {
      const rating = entry.rating
        ? `<p class="rating">student rating: agreement ${entry.rating.agreement}, ` +
          `usefulness ${entry.rating.usefulness}` +
          `${entry.rating.comment ? ` (${escapeHtml(entry.rating.comment)})` : ""}</p>`
        : "";
      return (
        `<article class="history-entry" data-version-id="${entry.feedback.id}">` +
        `<header>v${entry.feedback.version}, sent ${entry.feedback.sent_at ?? "?"}</header>` +
        `<p class="history-text">${escapeHtml(entry.feedback.text)}</p>` +
        renderLegendBar(entry.breakdown) +
        renderLegendLabels(entry.breakdown) +
        rating +
        `</article>`
      );
    })
    .join("");
  return `<div class="history">${cards}</div>`;
}

/** A prior version opened from the history selector; never editable. */
export function renderReadOnlyVersion(version: ComposedPayload): string {
  return (
    `<article class="version-view" data-version-id="${version.id}">` +
    `<header>v${version.version} (${version.state})` +
    `${version.sent_at ? `, sent ${version.sent_at}` : ""}</header>` +
    `<p class="preview" data-preview>${escapeHtml(version.text)}</p>` +
    renderLegendBar(version.breakdown) +
    renderLegendLabels(version.breakdown) +
    `</article>`
  );
}

// -- draft lifecycle controls

export interface DraftControlOptions {
  draft: ComposedPayload | null;
  versions: VersionSummary[];
  locked: boolean;
  readOnly: boolean;
  instanceStatus: string;
  /** Server error detail shown verbatim (restricted terms, conflicts). */
  sendError: string | null;
}

export function renderDraftControls(options: DraftControlOptions): string {
  const disabled = options.locked || options.readOnly ? " disabled" : "";
  const banner = options.readOnly
    ? `<p class="read-only-banner">${escapeHtml(READ_ONLY_MESSAGE)}</p>`
    : "";
  const lockNote = options.locked
    ? `<p class="generation-banner">${escapeHtml(GENERATION_RUNNING_MESSAGE)}</p>`
    : "";
  const error = options.sendError
    ? `<p class="send-error" role="alert">${escapeHtml(options.sendError)}</p>`
    : "";
  const generate =
    options.instanceStatus === "collecting"
      ? `<button class="trigger-generation"${disabled}>Generate candidates</button>`
      : "";
  const sendDisabled =
    options.draft && options.draft.state === "draft" && !disabled
      ? ""
      : " disabled";
  const draftInfo = options.draft
    ? `<span class="draft-info" data-draft="${options.draft.id}">` +
      `draft v${options.draft.version}</span>`
    : "";
  const versionOptions = options.versions
    .map((v) => `<option value="${v.id}">v${v.version} (${v.state})</option>`)
    .join("");
  return (
    `<div class="draft-controls">${banner}${lockNote}${generate}` +
    `<button class="save-draft"${disabled}>Save draft</button>` +
    `<button class="send-feedback" ` +
    `data-confirm="Send this feedback to the student?"${sendDisabled}>Send</button>` +
    `<select class="load-version"><option value="">Load version (read-only)</option>` +
    `${versionOptions}</select>` +
    `${draftInfo}${error}</div>`
  );
}
