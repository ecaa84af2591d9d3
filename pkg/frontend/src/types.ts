/** Wire types for the feedbackforge REST API.
 *
 * These mirror the JSON payloads the service emits; the dashboard never
 * reshapes or recomputes them. Optional fields are typed exactly as the
 * server sends them (null, not undefined).
 */

export type Source = "gpt" | "gemini" | "llama" | "teacher";

export interface SentencePayload {
  id: string;
  text: string;
  source: Source;
  origin_candidate_id: string | null;
  origin_sentence_id: string | null;
  origin_text: string | null;
  edited: boolean;
}

export interface ViolationPayload {
  code: string;
  detail: string;
}

export interface VerdictPayload {
  candidate_ref: string;
  passed: boolean;
  violations: ViolationPayload[];
}

export interface CandidatePayload {
  id: string;
  instance_id: string;
  provider_id: string;
  source: Source;
  paragraphs: SentencePayload[][];
  verdict: VerdictPayload;
  created_at: string;
}

export interface BreakdownPayload {
  proportions: Record<Source, number>;
  teacher_modification_extent: number;
  /** Present on composed/history payloads; integer percentages. */
  display_percentages?: Record<Source, number>;
}

export interface ComposedPayload {
  id: string;
  instance_id: string;
  version: number;
  state: "draft" | "sent";
  sentences: SentencePayload[];
  composed_by: string;
  breakdown: BreakdownPayload;
  created_at: string;
  sent_at: string | null;
  includes_unpassed_origin: boolean;
  idempotency_key: string | null;
  /** Sentence texts joined by single spaces; what students will read. */
  text: string;
}

export interface RatingPayload {
  id: string;
  feedback_version_id: string;
  agreement: number;
  usefulness: number;
  comment: string | null;
  created_at: string;
}

export interface HistoryFeedback {
  id: string;
  instance_id: string;
  version: number;
  state: string;
  composed_by: string;
  sent_at: string | null;
  text: string;
  sentence_count: number;
  includes_unpassed_origin: boolean;
}

export interface HistoryEntry {
  feedback: HistoryFeedback;
  breakdown: BreakdownPayload;
  rating: RatingPayload | null;
}

export interface RubricItemPayload {
  id: string;
  title: string;
  level_descriptions: Record<string, string>;
  relevance_terms: string[];
}

export interface RubricPayload {
  id: string;
  title: string;
  items: RubricItemPayload[];
  scale_min: number;
  scale_max: number;
}

export interface InstancePayload {
  id: string;
  course_id: string;
  rubric_id: string;
  subject_student_id: string;
  session_label: string | null;
  status: string;
  recording_ref: string | null;
}

export interface ItemTimingPayload {
  first_score_at: string | null;
  last_score_at: string | null;
  revision_count: number;
}

export interface EvaluationRow {
  id: string;
  instance_id: string;
  evaluator_id: string;
  evaluator_kind: "peer" | "self" | "teacher";
  item_scores: Record<string, number>;
  item_comments: Record<string, string>;
  submitted_at: string;
  evaluator_name: string | null;
  timing: Record<string, ItemTimingPayload>;
}

export interface ItemAggregatePayload {
  mean: number | null;
  count: number;
  by_kind: Record<string, number>;
  by_kind_counts: Record<string, number>;
}

export interface SelfComparisonPayload {
  self_score: number | null;
  aggregate_mean: number | null;
  delta: number | null;
  alignment: string | null;
}

export interface EvaluationsPayload {
  instance: InstancePayload;
  rubric: RubricPayload;
  evaluations: EvaluationRow[];
  aggregate: Record<string, ItemAggregatePayload>;
  self_comparison: Record<string, SelfComparisonPayload> | null;
}

export interface VersionSummary {
  id: string;
  version: number;
  state: string;
}

export interface InstanceDetailPayload {
  instance: InstancePayload;
  evaluation_count: number;
  files: unknown[];
  versions: VersionSummary[];
}

export interface JobPayload {
  instance_id: string;
  state: "running" | "done" | "failed";
  providers: string[];
  started_at: string;
  finished_at: string | null;
  error: string | null;
  summaries: unknown[] | null;
}

export interface GenerationStatusPayload {
  instance_status: string;
  job: JobPayload | null;
}

export type SelectionPayload =
  | { candidate_id: string; sentence_id: string }
  | { teacher_text: string };
