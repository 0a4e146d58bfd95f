// Keyboard-first triage: reviewers work through hundreds of cards, so every
// action has a single-key binding.

export type TriageCommand =
  | "accept"
  | "reject"
  | "skip"
  | "previous"
  | "refresh"
  | "help";

const COMMAND_BY_KEY: Readonly<Record<string, TriageCommand>> = Object.freeze({
  a: "accept",
  y: "accept",
  r: "reject",
  n: "reject",
  s: "skip",
  j: "skip",
  k: "previous",
  g: "refresh",
  "?": "help",
});

export function resolveTriageCommand(key: string): TriageCommand | undefined {
  return COMMAND_BY_KEY[key.length === 1 ? key.toLowerCase() : key];
}
