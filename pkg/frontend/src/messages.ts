/** User-facing status messages.
 *
 * The README documents the first two verbatim and the unit tests compare
 * both directions, so the docs cannot drift from what the UI shows.
 */

export const EMPTY_HISTORY_MESSAGE = "No feedback has been sent yet.";

export const UNPASSED_CANDIDATE_MESSAGE =
  "This candidate did not pass validation. Its sentences need an explicit override before they can be used.";

export const GENERATION_RUNNING_MESSAGE =
  "Generation in progress. Editing is disabled until it finishes.";

export const READ_ONLY_MESSAGE =
  "Viewing an earlier version. Load the latest draft to make changes.";

// Raised by the composition state machine, asserted in tests.
export const LOCKED_MUTATION_ERROR =
  "mutations are disabled while a generation job is running";

export const READ_ONLY_MUTATION_ERROR = "this version is read-only";
