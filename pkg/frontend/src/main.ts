/** Browser entry point.
 *
 * Framework-free wiring between the REST client, the composition state
 * and the string-template views; the built bundle is fully static so the
 * service can serve it from static_frontend_path. Optimistic flow: every
 * action re-renders from local state, every server mutation reloads the
 * authoritative payloads.
 */
import { ApiClient, ApiError } from "./api.js";
import { CompositionError, CompositionState } from "./compose.js";
import type {
  CandidatePayload,
  ComposedPayload,
  EvaluationsPayload,
  HistoryEntry,
  VersionSummary,
} from "./types.js";
import {
  renderCandidatePanels,
  renderCompositionEditor,
  renderDraftControls,
  renderEvaluationDetail,
  renderHistoryView,
  renderReadOnlyVersion,
  escapeHtml,
} from "./views.js";

interface AppState {
  instanceId: string;
  composition: CompositionState;
  candidates: CandidatePayload[];
  evaluations: EvaluationsPayload | null;
  history: HistoryEntry[];
  versions: VersionSummary[];
  draft: ComposedPayload | null;
  viewedVersion: ComposedPayload | null;
  instanceStatus: string;
  sendError: string | null;
}

function candidateIds(candidates: CandidatePayload[]): string {
  return candidates
    .map((c) => c.id)
    .sort()
    .join(",");
}

export class App {
  private readonly api: ApiClient;
  private readonly root: HTMLElement;
  private readonly state: AppState;
  private pollTimer: number | null = null;

  constructor(root: HTMLElement, api: ApiClient, instanceId: string) {
    this.root = root;
    this.api = api;
    this.state = {
      instanceId,
      composition: new CompositionState(),
      candidates: [],
      evaluations: null,
      history: [],
      versions: [],
      draft: null,
      viewedVersion: null,
      instanceStatus: "collecting",
      sendError: null,
    };
  }

  async start(): Promise<void> {
    this.root.addEventListener("click", (event) => this.onClick(event));
    this.root.addEventListener("change", (event) => this.onChange(event));
    this.root.addEventListener("submit", (event) => this.onSubmit(event));
    await this.loadAll();
  }

  async loadAll(): Promise<void> {
    const [detail, evaluations, candidatesPayload, history, generation] =
      await Promise.all([
        this.api.instanceDetail(this.state.instanceId),
        this.api.instanceEvaluations(this.state.instanceId),
        this.api.candidates(this.state.instanceId),
        this.api.instanceHistory(this.state.instanceId),
        this.api.generationStatus(this.state.instanceId),
      ]);
    this.state.evaluations = evaluations;
    this.state.history = history.entries;
    this.state.versions = detail.versions;
    this.state.instanceStatus = generation.instance_status;
    const fresh = candidatesPayload.candidates;
    if (candidateIds(fresh) !== candidateIds(this.state.candidates)) {
      // New generation run; selections referenced the old candidates.
      this.state.composition = new CompositionState(fresh);
    }
    this.state.candidates = fresh;
    const running = generation.job?.state === "running";
    this.state.composition.setGenerationRunning(running);
    if (running) this.schedulePoll();
    this.render();
  }

  // -- event wiring

  private onClick(event: Event): void {
    const target = event.target as HTMLElement | null;
    const button = target?.closest("button");
    if (!button || button.disabled) return;
    void this.dispatchButton(button);
  }

  private onChange(event: Event): void {
    const target = event.target as HTMLElement | null;
    if (!target) return;
    if (target.classList.contains("sentence-toggle")) {
      const input = target as HTMLInputElement;
      this.local(() =>
        this.state.composition.toggleSentence(
          input.dataset.candidate ?? "",
          input.dataset.sentence ?? "",
        ),
      );
    } else if (target.classList.contains("load-version")) {
      void this.loadVersionReadOnly((target as HTMLSelectElement).value);
    }
  }

  private onSubmit(event: Event): void {
    const form = event.target as HTMLFormElement | null;
    if (!form || !form.classList.contains("add-teacher-sentence")) return;
    event.preventDefault();
    const input = form.querySelector(
      'input[name="teacher_text"]',
    ) as HTMLInputElement | null;
    if (!input) return;
    this.local(() => this.state.composition.addTeacherSentence(input.value));
    input.value = "";
  }

  private async dispatchButton(button: HTMLButtonElement): Promise<void> {
    const cls = button.classList;
    const index = Number(button.dataset.index ?? -1);
    if (cls.contains("select-paragraph")) {
      this.local(() =>
        this.state.composition.toggleParagraph(
          button.dataset.candidate ?? "",
          Number(button.dataset.paragraph ?? -1),
        ),
      );
    } else if (cls.contains("move-up")) {
      if (index > 0) this.local(() => this.state.composition.move(index, index - 1));
    } else if (cls.contains("move-down")) {
      if (index < this.state.composition.entries.length - 1) {
        this.local(() => this.state.composition.move(index, index + 1));
      }
    } else if (cls.contains("remove-entry")) {
      this.local(() => this.state.composition.removeAt(index));
    } else if (cls.contains("edit-entry")) {
      const entry = this.state.composition.entries[index];
      if (!entry) return;
      const next = window.prompt("Edit sentence", entry.text);
      if (next !== null) {
        this.local(() => this.state.composition.editAt(index, next));
      }
    } else if (cls.contains("save-draft")) {
      await this.composeDraft();
    } else if (cls.contains("send-feedback")) {
      await this.sendDraft(button);
    } else if (cls.contains("trigger-generation")) {
      await this.triggerGeneration();
    }
  }

  /** Run a local composition mutation, surfacing its errors inline. */
  private local(mutate: () => void): void {
    try {
      mutate();
      this.state.sendError = null;
    } catch (error) {
      if (!(error instanceof CompositionError)) throw error;
      this.state.sendError = error.message;
    }
    this.render();
  }

  // -- server flows

  private async composeDraft(): Promise<void> {
    const composition = this.state.composition;
    try {
      const selections = composition.toSelections();
      let draft: ComposedPayload;
      try {
        draft = await this.api.compose(this.state.instanceId, selections);
      } catch (error) {
        if (
          error instanceof ApiError &&
          error.detail.includes("unpassed") &&
          window.confirm(
            "Some selected sentences come from a candidate that failed " +
              "validation. Compose anyway?",
          )
        ) {
          draft = await this.api.compose(this.state.instanceId, selections, true);
        } else {
          throw error;
        }
      }
      for (const edit of composition.pendingEdits(draft.sentences)) {
        draft = await this.api.editDraft(draft.id, edit.sentence_id, edit.new_text);
      }
      this.state.draft = draft;
      this.state.sendError = null;
    } catch (error) {
      if (error instanceof ApiError || error instanceof CompositionError) {
        this.state.sendError =
          error instanceof ApiError ? error.detail : error.message;
      } else {
        throw error;
      }
    }
    this.render();
  }

  private async sendDraft(button: HTMLButtonElement): Promise<void> {
    const draft = this.state.draft;
    if (!draft) return;
    const question = button.dataset.confirm ?? "Send this feedback?";
    if (!window.confirm(question)) return;
    try {
      this.state.draft = await this.api.sendDraft(
        draft.id,
        window.crypto.randomUUID(),
      );
      this.state.sendError = null;
      await this.loadAll();
    } catch (error) {
      if (!(error instanceof ApiError)) throw error;
      // Shown verbatim: restricted terms, version conflicts and the like.
      this.state.sendError = error.detail;
      this.render();
    }
  }

  private async triggerGeneration(): Promise<void> {
    try {
      await this.api.startGeneration(this.state.instanceId);
      this.state.composition.setGenerationRunning(true);
      this.schedulePoll();
    } catch (error) {
      if (!(error instanceof ApiError)) throw error;
      this.state.sendError = error.detail;
    }
    this.render();
  }

  private schedulePoll(): void {
    if (this.pollTimer !== null) return;
    this.pollTimer = window.setInterval(() => {
      void this.api
        .generationStatus(this.state.instanceId)
        .then((status) => {
          if (status.job?.state !== "running") {
            if (this.pollTimer !== null) {
              window.clearInterval(this.pollTimer);
              this.pollTimer = null;
            }
            void this.loadAll();
          }
        })
        .catch(() => undefined);
    }, 1000);
  }

  private async loadVersionReadOnly(versionId: string): Promise<void> {
    if (!versionId) {
      this.state.viewedVersion = null;
      this.state.composition.exitReadOnly();
      this.render();
      return;
    }
    const payload = await this.api.versions(this.state.instanceId);
    this.state.viewedVersion =
      payload.versions.find((v) => v.id === versionId) ?? null;
    if (this.state.viewedVersion) this.state.composition.enterReadOnly();
    this.render();
  }

  // -- rendering

  private render(): void {
    const state = this.state;
    const label = state.evaluations?.instance.session_label ?? state.instanceId;
    const compositionBlock = state.viewedVersion
      ? renderReadOnlyVersion(state.viewedVersion)
      : renderCompositionEditor(state.composition);
    this.root.innerHTML =
      `<h1>${escapeHtml(label)} <small>${escapeHtml(state.instanceStatus)}</small></h1>` +
      renderDraftControls({
        draft: state.draft,
        versions: state.versions,
        locked: state.composition.locked,
        readOnly: state.composition.readOnly,
        instanceStatus: state.instanceStatus,
        sendError: state.sendError,
      }) +
      `<div class="columns"><div class="column">` +
      renderCandidatePanels(state.candidates, state.composition) +
      `</div><div class="column">` +
      compositionBlock +
      `</div></div>` +
      `<h2>Evaluations</h2>` +
      (state.evaluations ? renderEvaluationDetail(state.evaluations) : "") +
      `<h2>History</h2>` +
      renderHistoryView(state.history);
  }
}

export function boot(root: HTMLElement): void {
  const params = new URLSearchParams(window.location.search);
  const fromQuery = params.get("token");
  if (fromQuery) window.localStorage.setItem("feedbackforge_token", fromQuery);
  const token = fromQuery ?? window.localStorage.getItem("feedbackforge_token");
  const instanceId = params.get("instance") ?? "ins_demo";
  const api = new ApiClient("", token);
  void new App(root, api, instanceId).start();
}

const rootElement =
  typeof document === "undefined" ? null : document.getElementById("app");
if (rootElement) boot(rootElement);
