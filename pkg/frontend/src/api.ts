/** Typed client for the feedbackforge REST API.
 *
 * Thin by design: one method per route, JSON in and out, bearer token on
 * every call. Non-2xx responses raise ApiError carrying the server's
 * error envelope verbatim so views can surface the detail text
 * unchanged (version conflicts, restricted-term rejections and the
 * like).
 */
import type {
  CandidatePayload,
  ComposedPayload,
  EvaluationsPayload,
  GenerationStatusPayload,
  HistoryEntry,
  InstanceDetailPayload,
  JobPayload,
  SelectionPayload,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly type: string;
  readonly detail: string;

  constructor(status: number, type: string, detail: string) {
    super(`${type} (${status}): ${detail}`);
    this.name = "ApiError";
    this.status = status;
    this.type = type;
    this.detail = detail;
  }
}

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

interface ErrorEnvelope {
  error?: { type?: string; detail?: string };
}

export class ApiClient {
  private readonly baseUrl: string;
  private token: string | null;
  private readonly fetchImpl: FetchLike;

  constructor(
    baseUrl: string,
    token: string | null = null,
    fetchImpl?: FetchLike,
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.token = token;
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  setToken(token: string | null): void {
    this.token = token;
  }

  /** For media elements; the route itself still checks authorization. */
  fileUrl(fileId: string): string {
    return `${this.baseUrl}/files/${fileId}`;
  }

  healthz(): Promise<{ status: string }> {
    return this.request("GET", "/healthz");
  }

  instanceDetail(instanceId: string): Promise<InstanceDetailPayload> {
    return this.request("GET", `/instances/${instanceId}`);
  }

  instanceEvaluations(instanceId: string): Promise<EvaluationsPayload> {
    return this.request("GET", `/instances/${instanceId}/evaluations`);
  }

  startGeneration(instanceId: string): Promise<{ job: JobPayload }> {
    return this.request("POST", `/instances/${instanceId}/generate`, {});
  }

  generationStatus(instanceId: string): Promise<GenerationStatusPayload> {
    return this.request("GET", `/instances/${instanceId}/generation`);
  }

  candidates(
    instanceId: string,
  ): Promise<{ candidates: CandidatePayload[]; generation_results: unknown[] }> {
    return this.request("GET", `/instances/${instanceId}/candidates`);
  }

  compose(
    instanceId: string,
    selections: SelectionPayload[],
    allowUnpassed = false,
  ): Promise<ComposedPayload> {
    return this.request("POST", `/instances/${instanceId}/compose`, {
      selections,
      allow_unpassed: allowUnpassed,
    });
  }

  editDraft(
    draftId: string,
    sentenceId: string,
    newText: string,
  ): Promise<ComposedPayload> {
    return this.request("POST", `/drafts/${draftId}/edit`, {
      sentence_id: sentenceId,
      new_text: newText,
    });
  }

  sendDraft(
    draftId: string,
    idempotencyKey?: string,
  ): Promise<ComposedPayload> {
    const body =
      idempotencyKey === undefined ? {} : { idempotency_key: idempotencyKey };
    return this.request("POST", `/drafts/${draftId}/send`, body);
  }

  versions(instanceId: string): Promise<{ versions: ComposedPayload[] }> {
    return this.request("GET", `/instances/${instanceId}/versions`);
  }

  instanceHistory(instanceId: string): Promise<{ entries: HistoryEntry[] }> {
    return this.request("GET", `/instances/${instanceId}/history`);
  }

  studentHistory(studentId: string): Promise<{ entries: HistoryEntry[] }> {
    return this.request("GET", `/students/${studentId}/history`);
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    let payload: string | undefined;
    if (body !== undefined) {
      headers["Content-Type"] = "application/json";
      payload = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers,
      body: payload,
    });
    const text = await response.text();
    let parsed: unknown = null;
    if (text) {
      try {
        parsed = JSON.parse(text);
      } catch {
        parsed = null;
      }
    }
    if (!response.ok) {
      const envelope = (parsed as ErrorEnvelope | null)?.error;
      throw new ApiError(
        response.status,
        envelope?.type ?? "HttpError",
        envelope?.detail ?? (text || response.statusText),
      );
    }
    return parsed as T;
  }
}
