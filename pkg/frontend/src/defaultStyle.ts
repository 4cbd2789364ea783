import type { ExplanationStyle } from "./types.js";

/**
 * Which explanation style to show first for a suggestion.
 *
 * User-study finding: people prefer characteristic-level explanations when
 * duty is the salient feature and feature-level ones when negativity is
 * (negatively framed characteristic texts read poorly); no clear winner
 * elsewhere, so everything else defaults to the feature level. This is a
 * UI preference only: both styles are always present behind the toggle,
 * and the user can override the default per session.
 */
export function defaultExplanationStyle(salientFeature: string): ExplanationStyle {
  if (salientFeature === "duty") return "level2";
  return "level1";
}
