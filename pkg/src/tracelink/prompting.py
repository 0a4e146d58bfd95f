"""Prompt construction, response parsing, and vote aggregation.

Prompt text is a pure function of (strategy, pair, examples); golden-file
tests pin the exact bytes, so any wording change must update the fixtures
deliberately.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from random import Random

from tracelink.model import (
    ConditionKind,
    Decision,
    LabeledExample,
    LinkLabel,
    StakeholderRequirement,
    SystemRequirement,
    Variation,
)
from tracelink.retrieval import system_side_text


class PromptError(ValueError):
    pass


class UncoveredCombinationError(PromptError):
    """The labeled links do not cover every few-shot combination."""


class EmptyVoteError(ValueError):
    pass


class StrategyKind:
    ZERO_SHOT = "zero_shot"
    COT = "cot"
    FEW_SHOT_16 = "few_shot_16"
    SELF_CONSISTENCY = "self_consistency"
    RAG = "rag"

    ALL = (ZERO_SHOT, COT, FEW_SHOT_16, SELF_CONSISTENCY, RAG)
    EXAMPLE_BEARING = (FEW_SHOT_16, RAG)


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = StrategyKind.RAG
    k: int = 3
    runs: int = 10
    run_temperature: float = 0.0
    fewshot_seed: int = 0
    explanation_mode: bool = False

    def __post_init__(self) -> None:
        if self.kind not in StrategyKind.ALL:
            raise PromptError(f"unknown strategy kind {self.kind!r}")
        if self.k < 1:
            raise PromptError("k must be at least 1")
        if self.runs < 1:
            raise PromptError("runs must be at least 1")

    def describe(self) -> str:
        if self.kind == StrategyKind.RAG:
            return f"rag(k={self.k})"
        if self.kind == StrategyKind.SELF_CONSISTENCY:
            return f"self_consistency(runs={self.runs})"
        return self.kind


@dataclass(frozen=True)
class PromptEnvelope:
    text: str
    strategy: StrategyConfig
    included_example_ids: tuple[str, ...] = field(default_factory=tuple)


_INSTRUCTION_LINES = (
    "Please check if the message or signal from the stakeholder requirement is "
    "correctly covered by the system requirement.\n"
    "Please focus only on verifying the message or signal mentioned, without "
    "considering other parts of the requirement.\n"
)

_EVAL_LINE = 'Now evaluate the following step by step and only respond with either "Yes" or "No":'
_EVAL_LINE_OPEN = "Now evaluate the following step by step:"
_COT_LINE = "Let's verify step by step whether the message or signal is covered, then answer Yes or No."
_COT_LINE_OPEN = "Let's verify step by step whether the message or signal is covered."


def _pair_block(stake_text: str, sys_text: str) -> str:
    return (
        f"Stakeholder Requirement: <stakeholder> {stake_text} </stakeholder>\n"
        f"System requirement: <system> {sys_text}</system>"
    )


def _example_block(example: LabeledExample) -> str:
    label = "Yes" if example.label is LinkLabel.VALID else "No"
    return _pair_block(example.stakeholder.text, system_side_text(example.system)) + f"\nLabel: {label}"


def render_evaluation_section(
    stake_text: str, sys_text: str, strategy: StrategyConfig | None = None
) -> str:
    """The trailing, evaluated-pair portion of a prompt.

    This section appears exactly once per prompt (example blocks carry label
    lines instead), which makes it a safe substring for scripting per-pair
    mock responses.
    """
    strategy = strategy or StrategyConfig(kind=StrategyKind.ZERO_SHOT)
    if strategy.kind in (StrategyKind.COT, StrategyKind.SELF_CONSISTENCY):
        eval_line = _COT_LINE_OPEN if strategy.explanation_mode else _COT_LINE
    else:
        eval_line = _EVAL_LINE_OPEN if strategy.explanation_mode else _EVAL_LINE
    return f"{eval_line}\n{_pair_block(stake_text, sys_text)}\nResponse:"


def interleave_examples(
    valid: list[LabeledExample], invalid: list[LabeledExample]
) -> list[LabeledExample]:
    """Alternate valid and invalid examples, most similar first in each list."""
    ordered: list[LabeledExample] = []
    for i in range(max(len(valid), len(invalid))):
        if i < len(valid):
            ordered.append(valid[i])
        if i < len(invalid):
            ordered.append(invalid[i])
    return ordered


def build_prompt(
    strategy: StrategyConfig,
    stake: StakeholderRequirement,
    system: SystemRequirement,
    examples: list[LabeledExample] | None = None,
) -> PromptEnvelope:
    """Render the prompt for one pair under the given strategy.

    Example-bearing strategies require examples (exactly 16 for the fixed
    few-shot strategy, at most 2k for retrieval); the others must not get any.
    """
    bearing = strategy.kind in StrategyKind.EXAMPLE_BEARING
    if bearing and not examples:
        raise PromptError(f"strategy {strategy.kind} requires examples")
    if not bearing and examples:
        raise PromptError(f"strategy {strategy.kind} does not take examples")
    if strategy.kind == StrategyKind.FEW_SHOT_16 and len(examples or []) != 16:
        raise PromptError(f"few-shot prompts take exactly 16 examples, got {len(examples or [])}")
    if strategy.kind == StrategyKind.RAG and len(examples or []) > 2 * strategy.k:
        raise PromptError(
            f"retrieval prompts take at most {2 * strategy.k} examples, got {len(examples or [])}"
        )

    parts = [_INSTRUCTION_LINES]
    included: tuple[str, ...] = ()
    if bearing:
        assert examples is not None
        blocks = "\n\n".join(_example_block(e) for e in examples)
        parts.append(f"Example: <example>\n{blocks}\n</example>\n")
        included = tuple(e.example_id for e in examples)
    parts.append(render_evaluation_section(stake.text, system_side_text(system), strategy))
    return PromptEnvelope(text="".join(parts), strategy=strategy, included_example_ids=included)


_TERMINAL_RE = re.compile(
    r"the\s+response\s+is:?\s*[\"']?(yes|no)\b[\"'.!]*\s*$", re.IGNORECASE
)
_STANDALONE_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


def parse_verdict(raw_response: str) -> Decision:
    """Extract the Yes/No decision from a model response.

    A terminal "The response is: ..." anchor wins outright, because an
    explanation body may quote both words. Otherwise the response must
    contain exactly one of the two words as a standalone token; anything
    else is Ambiguous.
    """
    text = raw_response.strip()
    terminal = _TERMINAL_RE.search(text)
    if terminal:
        return Decision.YES if terminal.group(1).lower() == "yes" else Decision.NO
    words = {m.group(1).lower() for m in _STANDALONE_RE.finditer(text)}
    if words == {"yes"}:
        return Decision.YES
    if words == {"no"}:
        return Decision.NO
    return Decision.AMBIGUOUS


def majority_vote(decisions: list[Decision]) -> Decision:
    """Strict majority of Yes/No decisions; an exact tie is a conservative No.

    Ambiguous entries must already have been resolved or dropped by the
    caller; a tally that is empty after dropping is an error.
    """
    yes = sum(1 for d in decisions if d is Decision.YES)
    no = sum(1 for d in decisions if d is Decision.NO)
    if yes + no != len(decisions):
        raise ValueError("majority_vote takes only Yes/No decisions")
    if yes + no == 0:
        raise EmptyVoteError("no usable decisions to vote over")
    return Decision.YES if yes > no else Decision.NO


# The fixed few-shot prompt covers each generatable combination of variation
# and label. The template family fixes the condition kind per variation, so
# the grid has eight populable cells; drawing two per cell preserves the
# intended sixteen-example prompt with balanced classes.
FEWSHOT_CELLS: tuple[tuple[Variation, ConditionKind, LinkLabel], ...] = tuple(
    (variation, kind, label)
    for variation, kind in (
        (Variation.V1, ConditionKind.MATURE),
        (Variation.V2, ConditionKind.MATURE),
        (Variation.V3, ConditionKind.MATURE),
        (Variation.V4, ConditionKind.DEMATURE),
    )
    for label in (LinkLabel.VALID, LinkLabel.INVALID)
)
_EXAMPLES_PER_CELL = 2


def select_fewshot_examples(labeled: list[LabeledExample], seed: int) -> list[LabeledExample]:
    """Draw the 16 fixed few-shot examples: two per (variation, kind, label) cell.

    Selection is uniform within a cell and deterministic for a fixed seed.
    Missing coverage is an error that names the first uncovered cell.
    """
    by_cell: dict[tuple[Variation, ConditionKind, LinkLabel], list[LabeledExample]] = {
        cell: [] for cell in FEWSHOT_CELLS
    }
    for example in labeled:
        cell = (
            example.stakeholder.variation,
            example.stakeholder.condition_kind,
            example.label,
        )
        if cell in by_cell:
            by_cell[cell].append(example)

    rng = Random(seed)
    chosen: list[LabeledExample] = []
    for cell in FEWSHOT_CELLS:
        pool = sorted(by_cell[cell], key=lambda e: e.example_id)
        if len(pool) < _EXAMPLES_PER_CELL:
            variation, kind, label = cell
            raise UncoveredCombinationError(
                f"need {_EXAMPLES_PER_CELL} labeled examples for combination "
                f"({variation.value}, {kind.value}, {label.value}), found {len(pool)}"
            )
        chosen.extend(rng.sample(pool, _EXAMPLES_PER_CELL))
    return chosen
