// Model explanations usually arrive as a numbered "Step 1: ... Step 2: ..."
// walkthrough; render that structure when present, raw text otherwise.

export interface ExplanationStep {
  number: number;
  text: string;
}

const STEP_SPLIT = /\bStep\s+(\d+)\s*:/g;

export function parseExplanationSteps(explanation: string): ExplanationStep[] | null {
  const matches = [...explanation.matchAll(STEP_SPLIT)];
  if (matches.length === 0) {
    return null;
  }
  const steps: ExplanationStep[] = [];
  for (let i = 0; i < matches.length; i++) {
    const match = matches[i]!;
    const start = match.index! + match[0].length;
    const end = i + 1 < matches.length ? matches[i + 1]!.index! : explanation.length;
    steps.push({
      number: Number(match[1]),
      text: explanation.slice(start, end).trim(),
    });
  }
  return steps;
}
