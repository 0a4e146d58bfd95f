"""The full validation pipeline: retrieve, prompt, complete, parse.

``TraceValidator`` is the one place these stages are wired together; the
recovery and evaluation drivers receive it (or any object with the same two
methods) so their logic stays independent of providers and prompts.
"""

from __future__ import annotations

from dataclasses import replace

from tracelink.gateway import Gateway, GatewayMode, ProviderConfig
from tracelink.model import (
    Decision,
    LabeledExample,
    StakeholderRequirement,
    SystemRequirement,
    Variation,
    Verdict,
    VoteTally,
)
from tracelink.prompting import (
    StrategyConfig,
    StrategyKind,
    build_prompt,
    interleave_examples,
    majority_vote,
    parse_verdict,
    select_fewshot_examples,
)
from tracelink.retrieval import (
    Embedder,
    Metric,
    RetrievalConfig,
    RetrievalDatabase,
    requirement_pair_text,
    retrieve_examples,
)

_CLARIFICATION = 'Please answer with a single word: "Yes" or "No".'


class AmbiguousVerdictError(RuntimeError):
    """The model stayed ambiguous even after one clarification retry."""


class TraceValidator:
    """Judges requirement pairs through the configured strategy and provider."""

    def __init__(
        self,
        gateway: Gateway,
        provider: ProviderConfig,
        embedder: Embedder,
        strategy: StrategyConfig | None = None,
        metric: Metric = Metric.COSINE,
        mode: GatewayMode = GatewayMode.LIVE,
    ) -> None:
        self.gateway = gateway
        self.provider = provider
        self.embedder = embedder
        self.strategy = strategy or StrategyConfig()
        self.metric = metric
        self.mode = mode

    def build_database(self, examples: list[LabeledExample]) -> RetrievalDatabase:
        return RetrievalDatabase.from_examples(examples, self.embedder, self.metric)

    def judge(
        self,
        stake: StakeholderRequirement,
        system: SystemRequirement,
        db: RetrievalDatabase | None = None,
        exclusion: frozenset[str] = frozenset(),
        variation_exclusion: Variation | None = None,
    ) -> Verdict:
        """Run the full pipeline for one pair and return the parsed verdict."""
        strategy = self.strategy
        examples: list[LabeledExample] | None = None
        retrieved_ids: tuple[str, ...] | None = None

        if strategy.kind == StrategyKind.RAG:
            if db is None:
                raise ValueError("retrieval strategy needs a database")
            query = self.embedder.embed(requirement_pair_text(stake, system))
            config = RetrievalConfig(
                k=strategy.k,
                metric=self.metric,
                exclusion=exclusion,
                variation_exclusion=variation_exclusion,
            )
            result = retrieve_examples(db, query, config)
            examples = interleave_examples(
                [r.example for r in result.valid], [r.example for r in result.invalid]
            )
            retrieved_ids = result.all_ids()
        elif strategy.kind == StrategyKind.FEW_SHOT_16:
            if db is None:
                raise ValueError("few-shot strategy needs a database")
            pool = [
                e
                for e in db.examples
                if e.example_id not in exclusion
                and (variation_exclusion is None or e.stakeholder.variation is not variation_exclusion)
            ]
            examples = select_fewshot_examples(pool, strategy.fewshot_seed)
            retrieved_ids = tuple(e.example_id for e in examples)

        envelope = build_prompt(strategy, stake, system, examples)

        if strategy.kind == StrategyKind.SELF_CONSISTENCY:
            return self._self_consistent_verdict(envelope.text, retrieved_ids)

        decision, raw = self._complete_and_parse(envelope.text, self.provider)
        if decision is Decision.AMBIGUOUS:
            raise AmbiguousVerdictError(f"ambiguous response for pair {stake.id}/{system.id}")
        return Verdict(
            decision=decision,
            raw_response=raw,
            strategy=strategy.describe(),
            explanation=raw if strategy.explanation_mode else None,
            retrieved_example_ids=retrieved_ids,
        )

    def _self_consistent_verdict(
        self, prompt: str, retrieved_ids: tuple[str, ...] | None
    ) -> Verdict:
        # Voting needs response diversity, so the per-run temperature is
        # honoured even when the provider default is 0.
        run_provider = replace(self.provider, temperature=self.strategy.run_temperature)
        decisions: list[Decision] = []
        raws: list[str] = []
        for _ in range(self.strategy.runs):
            decision, raw = self._complete_and_parse(prompt, run_provider)
            decisions.append(decision)
            raws.append(raw)
        resolved = [d for d in decisions if d is not Decision.AMBIGUOUS]
        if not resolved:
            raise AmbiguousVerdictError("every self-consistency run stayed ambiguous")
        tally = VoteTally(
            yes_count=sum(1 for d in resolved if d is Decision.YES),
            no_count=sum(1 for d in resolved if d is Decision.NO),
            ambiguous_count=len(decisions) - len(resolved),
        )
        final = majority_vote(resolved)
        raw = raws[-1]
        return Verdict(
            decision=final,
            raw_response=raw,
            strategy=self.strategy.describe(),
            explanation=raw if self.strategy.explanation_mode else None,
            votes=tally,
            retrieved_example_ids=retrieved_ids,
        )

    def _complete_and_parse(
        self, prompt: str, provider: ProviderConfig
    ) -> tuple[Decision, str]:
        raw = self.gateway.complete(prompt, provider, self.mode)
        decision = parse_verdict(raw)
        if decision is Decision.AMBIGUOUS:
            # One clarification retry; a second ambiguity is the caller's problem.
            raw = self.gateway.complete(f"{prompt}\n{_CLARIFICATION}", provider, self.mode)
            decision = parse_verdict(raw)
        return decision, raw
