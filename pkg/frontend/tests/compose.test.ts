import { describe, expect, it } from "vitest";

import { CompositionError, CompositionState } from "../src/compose.js";
import {
  LOCKED_MUTATION_ERROR,
  READ_ONLY_MUTATION_ERROR,
} from "../src/messages.js";
import type { CandidatePayload, SentencePayload, Source } from "../src/types.js";

function candidate(
  id: string,
  source: Source,
  paragraphs: string[][],
  passed = true,
): CandidatePayload {
  let n = 0;
  const toSentence = (text: string): SentencePayload => {
    n += 1;
    return {
      id: `s${n}`,
      text,
      source,
      origin_candidate_id: id,
      origin_sentence_id: `s${n}`,
      origin_text: null,
      edited: false,
    };
  };
  return {
    id,
    instance_id: "ins_1",
    provider_id: `prov-${source}`,
    source,
    paragraphs: paragraphs.map((para) => para.map(toSentence)),
    verdict: {
      candidate_ref: id,
      passed,
      violations: passed ? [] : [{ code: "too_short", detail: "too short" }],
    },
    created_at: "2025-03-10T10:00:00.000Z",
  };
}

const candA = candidate("cnd_a", "gpt", [
  ["The opening was strong.", "Your claim was stated early."],
  ["The middle section rushed.", "Plan a pause after each example."],
]);
const candB = candidate("cnd_b", "gemini", [
  ["Eye contact held the room."],
]);

function freshState(): CompositionState {
  return new CompositionState([candA, candB]);
}

function selectionKeys(state: CompositionState): string[] {
  return state.entries
    .filter((e) => e.candidateId !== null)
    .map((e) => `${e.candidateId}:${e.sentenceId}`);
}

describe("paragraph selection", () => {
  it("selecting a paragraph adds all its sentences in order", () => {
    const state = freshState();
    state.toggleParagraph("cnd_a", 0);
    expect(state.entryTexts()).toEqual([
      "The opening was strong.",
      "Your claim was stated early.",
    ]);
    expect(state.paragraphFullySelected("cnd_a", 0)).toBe(true);
  });

  it("toggling a fully selected paragraph removes all of it", () => {
    const state = freshState();
    state.toggleParagraph("cnd_a", 0);
    state.toggleParagraph("cnd_a", 0);
    expect(state.entries).toHaveLength(0);
  });

  it("completes a partially selected paragraph without duplicating", () => {
    const state = freshState();
    state.toggleSentence("cnd_a", "s2");
    state.toggleParagraph("cnd_a", 0);
    expect(state.entryTexts()).toEqual([
      "Your claim was stated early.",
      "The opening was strong.",
    ]);
    expect(new Set(selectionKeys(state)).size).toBe(selectionKeys(state).length);
  });

  it("rejects unknown paragraph indexes", () => {
    const state = freshState();
    expect(() => state.toggleParagraph("cnd_a", 9)).toThrow(CompositionError);
  });
});

describe("sentence selection", () => {
  it("deselecting removes exactly the toggled sentence", () => {
    const state = freshState();
    state.toggleSentence("cnd_a", "s1");
    state.toggleSentence("cnd_a", "s3");
    state.toggleSentence("cnd_b", "s1");
    state.toggleSentence("cnd_a", "s3");
    expect(state.entryTexts()).toEqual([
      "The opening was strong.",
      "Eye contact held the room.",
    ]);
  });

  it("never holds the same sentence twice", () => {
    const state = freshState();
    state.toggleSentence("cnd_a", "s1");
    state.toggleParagraph("cnd_a", 0);
    state.toggleParagraph("cnd_a", 1);
    state.toggleSentence("cnd_b", "s1");
    const keys = selectionKeys(state);
    expect(new Set(keys).size).toBe(keys.length);
    expect(keys).toHaveLength(5);
  });

  it("rejects unknown candidates and sentences", () => {
    const state = freshState();
    expect(() => state.toggleSentence("cnd_zz", "s1")).toThrow(CompositionError);
    expect(() => state.toggleSentence("cnd_a", "s99")).toThrow(CompositionError);
  });
});

describe("ordering and teacher sentences", () => {
  it("reorders entries explicitly", () => {
    const state = freshState();
    state.toggleParagraph("cnd_a", 0);
    state.addTeacherSentence("Well done overall.");
    state.move(2, 0);
    expect(state.entryTexts()).toEqual([
      "Well done overall.",
      "The opening was strong.",
      "Your claim was stated early.",
    ]);
  });

  it("rejects out-of-range moves and removals", () => {
    const state = freshState();
    state.toggleSentence("cnd_a", "s1");
    expect(() => state.move(0, 3)).toThrow(CompositionError);
    expect(() => state.removeAt(5)).toThrow(CompositionError);
  });

  it("trims teacher sentences and rejects blank ones", () => {
    const state = freshState();
    state.addTeacherSentence("  A strong close.  ");
    expect(state.entryTexts()).toEqual(["A strong close."]);
    expect(() => state.addTeacherSentence("   ")).toThrow(CompositionError);
  });
});

describe("preview", () => {
  it("joins sentence texts with single spaces, byte for byte", () => {
    const state = freshState();
    state.toggleParagraph("cnd_a", 0);
    state.addTeacherSentence("Keep practising.");
    const expected =
      "The opening was strong. Your claim was stated early. Keep practising.";
    expect(state.previewText()).toBe(expected);
    expect(state.previewText()).toBe(state.entryTexts().join(" "));
  });
});

describe("local edits", () => {
  it("marks candidate entries edited only while text differs", () => {
    const state = freshState();
    state.toggleSentence("cnd_a", "s1");
    expect(state.editedAt(0)).toBe(false);
    state.editAt(0, "The opening was very strong.");
    expect(state.editedAt(0)).toBe(true);
    expect(state.previewText()).toBe("The opening was very strong.");
    state.editAt(0, "The opening was strong.");
    expect(state.editedAt(0)).toBe(false);
  });

  it("teacher entries are rewritten, never flagged as edited", () => {
    const state = freshState();
    state.addTeacherSentence("First cut.");
    state.editAt(0, "Second cut.");
    expect(state.editedAt(0)).toBe(false);
    expect(state.entryTexts()).toEqual(["Second cut."]);
  });

  it("rejects empty edits", () => {
    const state = freshState();
    state.addTeacherSentence("Something.");
    expect(() => state.editAt(0, "  ")).toThrow(CompositionError);
  });
});

describe("wire formats", () => {
  it("maps entries to the compose selection payload", () => {
    const state = freshState();
    state.toggleSentence("cnd_b", "s1");
    state.addTeacherSentence("And breathe.");
    expect(state.toSelections()).toEqual([
      { candidate_id: "cnd_b", sentence_id: "s1" },
      { teacher_text: "And breathe." },
    ]);
  });

  it("refuses to build an empty selection", () => {
    expect(() => freshState().toSelections()).toThrow(CompositionError);
  });

  it("plans one edit per locally changed sentence, keyed by server id", () => {
    const state = freshState();
    state.toggleSentence("cnd_a", "s1");
    state.toggleSentence("cnd_a", "s3");
    state.addTeacherSentence("Closing note.");
    state.editAt(1, "The middle section rushed badly.");
    const server: SentencePayload[] = [
      ["sen_x1", "The opening was strong."],
      ["sen_x2", "The middle section rushed."],
      ["sen_x3", "Closing note."],
    ].map(([id, text]) => ({
      id: id as string,
      text: text as string,
      source: "gpt",
      origin_candidate_id: "cnd_a",
      origin_sentence_id: "s1",
      origin_text: text as string,
      edited: false,
    }));
    expect(state.pendingEdits(server)).toEqual([
      { sentence_id: "sen_x2", new_text: "The middle section rushed badly." },
    ]);
  });

  it("rejects a server draft of a different shape", () => {
    const state = freshState();
    state.addTeacherSentence("One.");
    expect(() => state.pendingEdits([])).toThrow(CompositionError);
  });
});

describe("mutation guards", () => {
  const mutations: [string, (state: CompositionState) => void][] = [
    ["toggleSentence", (s) => s.toggleSentence("cnd_a", "s1")],
    ["toggleParagraph", (s) => s.toggleParagraph("cnd_a", 0)],
    ["addTeacherSentence", (s) => s.addTeacherSentence("x")],
    ["removeAt", (s) => s.removeAt(0)],
    ["move", (s) => s.move(0, 0)],
    ["editAt", (s) => s.editAt(0, "y")],
    ["clear", (s) => s.clear()],
  ];

  it("blocks every mutation while a generation job is running", () => {
    const state = freshState();
    state.setGenerationRunning(true);
    for (const [, mutate] of mutations) {
      expect(() => mutate(state)).toThrow(LOCKED_MUTATION_ERROR);
    }
    state.setGenerationRunning(false);
    state.toggleSentence("cnd_a", "s1");
    expect(state.entries).toHaveLength(1);
  });

  it("blocks every mutation while viewing a version read-only", () => {
    const state = freshState();
    state.enterReadOnly();
    for (const [, mutate] of mutations) {
      expect(() => mutate(state)).toThrow(READ_ONLY_MUTATION_ERROR);
    }
    state.exitReadOnly();
    state.addTeacherSentence("Back to editing.");
    expect(state.entryTexts()).toEqual(["Back to editing."]);
  });

  it("still answers queries while locked", () => {
    const state = freshState();
    state.toggleSentence("cnd_a", "s1");
    state.setGenerationRunning(true);
    expect(state.previewText()).toBe("The opening was strong.");
    expect(state.isSelected("cnd_a", "s1")).toBe(true);
  });
});
