/** Client-side composition state for the curation screen.
 *
 * Tracks which candidate sentences are selected, in what order, plus
 * teacher-written sentences and local edits. The preview mirrors the
 * server's composition rule exactly (sentence texts joined by single
 * spaces), so what the teacher reads before sending is byte-identical to
 * what the service stores. Provenance stays server-side; this module
 * only carries enough origin data to know whether an entry was edited.
 */
import type {
  CandidatePayload,
  SelectionPayload,
  SentencePayload,
  Source,
} from "./types.js";
import {
  LOCKED_MUTATION_ERROR,
  READ_ONLY_MUTATION_ERROR,
} from "./messages.js";

export class CompositionError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "CompositionError";
  }
}

export interface CompositionEntry {
  source: Source;
  text: string;
  candidateId: string | null;
  sentenceId: string | null;
  originText: string | null;
}

export function findSentence(
  candidate: CandidatePayload,
  sentenceId: string,
): SentencePayload | null {
  for (const paragraph of candidate.paragraphs) {
    for (const sentence of paragraph) {
      if (sentence.id === sentenceId) return sentence;
    }
  }
  return null;
}

export class CompositionState {
  private readonly candidateIndex = new Map<string, CandidatePayload>();
  private entriesList: CompositionEntry[] = [];
  private generationRunning = false;
  private readOnlyView = false;

  constructor(candidates: CandidatePayload[] = []) {
    for (const candidate of candidates) {
      this.candidateIndex.set(candidate.id, candidate);
    }
  }

  // -- queries

  get entries(): readonly CompositionEntry[] {
    return this.entriesList;
  }

  get locked(): boolean {
    return this.generationRunning;
  }

  get readOnly(): boolean {
    return this.readOnlyView;
  }

  candidate(candidateId: string): CandidatePayload {
    const candidate = this.candidateIndex.get(candidateId);
    if (!candidate) {
      throw new CompositionError(`unknown candidate ${candidateId}`);
    }
    return candidate;
  }

  candidates(): CandidatePayload[] {
    return [...this.candidateIndex.values()];
  }

  isSelected(candidateId: string, sentenceId: string): boolean {
    return this.entriesList.some(
      (e) => e.candidateId === candidateId && e.sentenceId === sentenceId,
    );
  }

  paragraphFullySelected(candidateId: string, paragraphIndex: number): boolean {
    const paragraph = this.paragraph(candidateId, paragraphIndex);
    return paragraph.every((s) => this.isSelected(candidateId, s.id));
  }

  editedAt(index: number): boolean {
    const entry = this.entryAt(index);
    return entry.originText !== null && entry.text !== entry.originText;
  }

  entryTexts(): string[] {
    return this.entriesList.map((e) => e.text);
  }

  /** Exactly the text the server will store: single-space joined. */
  previewText(): string {
    return this.entriesList.map((e) => e.text).join(" ");
  }

  // -- mutations, all refused while locked or read-only

  setGenerationRunning(running: boolean): void {
    this.generationRunning = running;
  }

  enterReadOnly(): void {
    this.readOnlyView = true;
  }

  exitReadOnly(): void {
    this.readOnlyView = false;
  }

  toggleSentence(candidateId: string, sentenceId: string): void {
    this.guard();
    const at = this.entriesList.findIndex(
      (e) => e.candidateId === candidateId && e.sentenceId === sentenceId,
    );
    if (at >= 0) {
      this.entriesList.splice(at, 1);
      return;
    }
    this.appendSentence(candidateId, sentenceId);
  }

  /** Select every not-yet-selected sentence of the paragraph, in its
   * original order; if all are already selected, deselect them all. */
  toggleParagraph(candidateId: string, paragraphIndex: number): void {
    this.guard();
    const paragraph = this.paragraph(candidateId, paragraphIndex);
    if (paragraph.every((s) => this.isSelected(candidateId, s.id))) {
      for (const sentence of paragraph) {
        const at = this.entriesList.findIndex(
          (e) => e.candidateId === candidateId && e.sentenceId === sentence.id,
        );
        this.entriesList.splice(at, 1);
      }
      return;
    }
    for (const sentence of paragraph) {
      if (!this.isSelected(candidateId, sentence.id)) {
        this.appendSentence(candidateId, sentence.id);
      }
    }
  }

  addTeacherSentence(text: string): void {
    this.guard();
    const trimmed = text.trim();
    if (!trimmed) {
      throw new CompositionError("teacher sentences must be non-empty");
    }
    this.entriesList.push({
      source: "teacher",
      text: trimmed,
      candidateId: null,
      sentenceId: null,
      originText: null,
    });
  }

  removeAt(index: number): void {
    this.guard();
    this.entryAt(index);
    this.entriesList.splice(index, 1);
  }

  move(from: number, to: number): void {
    this.guard();
    this.entryAt(from);
    this.entryAt(to);
    const [entry] = this.entriesList.splice(from, 1);
    this.entriesList.splice(to, 0, entry as CompositionEntry);
  }

  editAt(index: number, newText: string): void {
    this.guard();
    const entry = this.entryAt(index);
    const trimmed = newText.trim();
    if (!trimmed) {
      throw new CompositionError("sentence text must be non-empty");
    }
    entry.text = trimmed;
  }

  clear(): void {
    this.guard();
    this.entriesList = [];
  }

  // -- wire format

  /** Body for POST /instances/{id}/compose. Local edits are not part of
   * the selection; apply them afterwards via pendingEdits against the
   * draft the server returns. */
  toSelections(): SelectionPayload[] {
    if (this.entriesList.length === 0) {
      throw new CompositionError("empty selection");
    }
    return this.entriesList.map((entry) =>
      entry.candidateId !== null && entry.sentenceId !== null
        ? { candidate_id: entry.candidateId, sentence_id: entry.sentenceId }
        : { teacher_text: entry.text },
    );
  }

  /** Edits to apply to a freshly composed draft. Server sentences map
   * 1:1 and in order onto local entries; any local text that differs
   * becomes one edit keyed by the server sentence id. */
  pendingEdits(
    serverSentences: SentencePayload[],
  ): { sentence_id: string; new_text: string }[] {
    if (serverSentences.length !== this.entriesList.length) {
      throw new CompositionError(
        "server draft does not match the local composition",
      );
    }
    const edits: { sentence_id: string; new_text: string }[] = [];
    serverSentences.forEach((sentence, index) => {
      const local = this.entriesList[index] as CompositionEntry;
      if (local.text !== sentence.text) {
        edits.push({ sentence_id: sentence.id, new_text: local.text });
      }
    });
    return edits;
  }

  // -- internals

  private guard(): void {
    if (this.generationRunning) {
      throw new CompositionError(LOCKED_MUTATION_ERROR);
    }
    if (this.readOnlyView) {
      throw new CompositionError(READ_ONLY_MUTATION_ERROR);
    }
  }

  private entryAt(index: number): CompositionEntry {
    const entry = this.entriesList[index];
    if (entry === undefined) {
      throw new CompositionError(`no composition entry at index ${index}`);
    }
    return entry;
  }

  private paragraph(
    candidateId: string,
    paragraphIndex: number,
  ): SentencePayload[] {
    const candidate = this.candidate(candidateId);
    const paragraph = candidate.paragraphs[paragraphIndex];
    if (paragraph === undefined) {
      throw new CompositionError(
        `candidate ${candidateId} has no paragraph ${paragraphIndex}`,
      );
    }
    return paragraph;
  }

  private appendSentence(candidateId: string, sentenceId: string): void {
    if (this.isSelected(candidateId, sentenceId)) {
      throw new CompositionError(
        "sentence is already part of the composition",
      );
    }
    const candidate = this.candidate(candidateId);
    const sentence = findSentence(candidate, sentenceId);
    if (!sentence) {
      throw new CompositionError(
        `candidate ${candidateId} has no sentence ${sentenceId}`,
      );
    }
    this.entriesList.push({
      source: candidate.source,
      text: sentence.text,
      candidateId,
      sentenceId,
      originText: sentence.text,
    });
  }
}
