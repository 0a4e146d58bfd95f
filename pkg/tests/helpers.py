"""Shared builders for tests: synthetic corpora and scripted validators."""

from __future__ import annotations

from tracelink.corpus import Corpus, SynthesisConfig, generate_synthetic_corpus
from tracelink.gateway import Gateway, MockProvider, MockRule, ProviderConfig
from tracelink.model import (
    ConditionKind,
    StakeholderRequirement,
    SystemRequirement,
    TraceLink,
)
from tracelink.pipeline import TraceValidator
from tracelink.prompting import StrategyConfig, StrategyKind, render_evaluation_section
from tracelink.retrieval import LexicalEmbedder, system_side_text

MOCK_PROVIDER_CONFIG = ProviderConfig(provider_id="mock", model_name="scripted")


def make_corpus(
    n_stakeholders: int = 60, n_systems: int = 4, seed: int = 3, **kwargs
) -> tuple[Corpus, list[TraceLink]]:
    config = SynthesisConfig(
        n_stakeholders=n_stakeholders, n_systems=n_systems, random_seed=seed, **kwargs
    )
    return generate_synthetic_corpus(config)


def coverage_answer(stake: StakeholderRequirement, system: SystemRequirement) -> str:
    """The generator's validity oracle: full message coverage on the bound side."""
    if stake.condition_kind is ConditionKind.UNKNOWN:
        return "No"
    side = system.side_messages(stake.condition_kind)
    return "Yes" if stake.messages and stake.messages <= side else "No"


def coverage_rules(
    corpus: Corpus,
    strategy: StrategyConfig,
    flipped_pairs: frozenset[tuple[str, str]] = frozenset(),
) -> list[MockRule]:
    """One scripted rule per pair, keyed on the unique evaluation tail.

    The evaluation section appears exactly once per prompt, so a rule built
    from it can never fire on a prompt where the pair only shows up as a
    retrieved example.
    """
    rules = []
    for stake in corpus.stakeholders:
        for system in corpus.systems:
            answer = coverage_answer(stake, system)
            if (stake.id, system.id) in flipped_pairs:
                answer = "No" if answer == "Yes" else "Yes"
            tail = render_evaluation_section(stake.text, system_side_text(system), strategy)
            rules.append(MockRule(tail, answer))
    return rules


def make_mock_validator(
    corpus: Corpus,
    strategy: StrategyConfig | None = None,
    flipped_pairs: frozenset[tuple[str, str]] = frozenset(),
    default_response: str = "No",
) -> TraceValidator:
    """Full pipeline validator whose provider implements the coverage oracle."""
    strategy = strategy or StrategyConfig(kind=StrategyKind.RAG, k=3)
    provider = MockProvider(
        coverage_rules(corpus, strategy, flipped_pairs), default=default_response
    )
    return TraceValidator(
        gateway=Gateway(provider),
        provider=MOCK_PROVIDER_CONFIG,
        embedder=LexicalEmbedder(),
        strategy=strategy,
    )
