"""Candidate enumeration, the three-stage prefilter, and link recovery.

The prefilter is pure and rule-based: type agreement, condition-side binding,
and message overlap. Drops are counted per reason, never raised, so the
funnel report always accounts for every candidate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from tracelink.corpus import DEFAULT_STOPWORDS, Corpus, extract_messages
from tracelink.gateway import GatewayError
from tracelink.model import (
    ConditionKind,
    Decision,
    DtcType,
    StakeholderRequirement,
    SystemRequirement,
    Verdict,
)
from tracelink.pipeline import AmbiguousVerdictError

DROP_DTC_MISMATCH = "stage1:dtc_mismatch"
DROP_UNKNOWN_DTC = "stage1:unknown_dtc"
DROP_UNKNOWN_CONDITION = "stage2:unknown_condition"
DROP_NO_OVERLAP = "stage3:no_message_overlap"

VerdictFn = Callable[[StakeholderRequirement, SystemRequirement], Verdict]


@dataclass(frozen=True)
class FunnelReport:
    """Candidate counts through the recovery funnel."""

    total_candidates: int
    after_stage1: int
    after_stage2: int
    after_stage3: int
    predicted_valid: int = 0
    drop_reasons: Mapping[str, int] = field(default_factory=dict)
    skipped: int = 0

    def __post_init__(self) -> None:
        counts = (
            self.total_candidates,
            self.after_stage1,
            self.after_stage2,
            self.after_stage3,
            self.predicted_valid,
        )
        if any(c < 0 for c in counts):
            raise ValueError("funnel counts must be non-negative")
        if not all(a >= b for a, b in zip(counts, counts[1:])):
            raise ValueError(f"funnel counts must be monotone non-increasing: {counts}")

    def to_record(self) -> dict:
        return {
            "type": "funnel",
            "total_candidates": self.total_candidates,
            "after_stage1": self.after_stage1,
            "after_stage2": self.after_stage2,
            "after_stage3": self.after_stage3,
            "predicted_valid": self.predicted_valid,
            "drop_reasons": dict(self.drop_reasons),
            "skipped": self.skipped,
        }


@dataclass(frozen=True)
class RecoveredLink:
    stake_id: str
    sys_id: str
    verdict: Verdict
    condition_side: ConditionKind

    def __post_init__(self) -> None:
        if self.verdict.decision is not Decision.YES:
            raise ValueError("a recovered link must carry a Yes verdict")

    def to_record(self) -> dict:
        return {
            "type": "recovered_link",
            "stake_id": self.stake_id,
            "sys_id": self.sys_id,
            "condition_side": self.condition_side.value,
            "decision": self.verdict.decision.value,
            "strategy": self.verdict.strategy,
            "explanation": self.verdict.explanation,
            "vote_share": self.verdict.votes.yes_share if self.verdict.votes else 1.0,
            "retrieved_example_ids": list(self.verdict.retrieved_example_ids or ()),
        }


@dataclass(frozen=True)
class BoundCandidate:
    """A prefilter survivor, bound to one condition side of its system."""

    stakeholder: StakeholderRequirement
    system: SystemRequirement
    condition_side: ConditionKind
    shared_messages: frozenset[str]


def enumerate_candidates(
    corpus: Corpus,
) -> list[tuple[StakeholderRequirement, SystemRequirement]]:
    """Every (stakeholder, system) pair without a recorded link, in id order."""
    linked = corpus.linked_pairs()
    return [
        (stake, system)
        for stake in sorted(corpus.stakeholders, key=lambda s: s.id)
        for system in sorted(corpus.systems, key=lambda s: s.id)
        if (stake.id, system.id) not in linked
    ]


def apply_prefilter(
    candidates: list[tuple[StakeholderRequirement, SystemRequirement]],
    corpus: Corpus,
    stopwords: frozenset[str] = DEFAULT_STOPWORDS,
    mask_trigger: bool = True,
) -> tuple[list[BoundCandidate], FunnelReport]:
    """Run the three filter stages and count every drop.

    Stage 1 demands matching, known DTC types. Stage 2 binds the comparison
    to the system side matching the stakeholder's condition kind. Stage 3
    demands at least one shared message token with that bound side; the
    stakeholder's trigger clause is masked out of the comparison by default
    because the trigger is itself a message and matches spuriously.
    """
    drops: dict[str, int] = {}
    stake_messages: dict[str, frozenset[str]] = {}

    def messages_of(stake: StakeholderRequirement) -> frozenset[str]:
        if stake.id not in stake_messages:
            stake_messages[stake.id] = extract_messages(
                stake.text, stopwords, mask_trigger=mask_trigger
            )
        return stake_messages[stake.id]

    def drop(reason: str) -> None:
        drops[reason] = drops.get(reason, 0) + 1

    stage1: list[tuple[StakeholderRequirement, SystemRequirement]] = []
    for stake, system in candidates:
        if stake.dtc_type is DtcType.UNKNOWN or system.dtc_type is DtcType.UNKNOWN:
            drop(DROP_UNKNOWN_DTC)
        elif stake.dtc_type is not system.dtc_type:
            drop(DROP_DTC_MISMATCH)
        else:
            stage1.append((stake, system))

    stage2: list[tuple[StakeholderRequirement, SystemRequirement, ConditionKind]] = []
    for stake, system in stage1:
        if stake.condition_kind is ConditionKind.UNKNOWN:
            drop(DROP_UNKNOWN_CONDITION)
        else:
            stage2.append((stake, system, stake.condition_kind))

    survivors: list[BoundCandidate] = []
    for stake, system, side in stage2:
        shared = messages_of(stake) & system.side_messages(side)
        if shared:
            survivors.append(BoundCandidate(stake, system, side, shared))
        else:
            drop(DROP_NO_OVERLAP)

    report = FunnelReport(
        total_candidates=len(candidates),
        after_stage1=len(stage1),
        after_stage2=len(stage2),
        after_stage3=len(survivors),
        drop_reasons=drops,
    )
    return survivors, report


def recover_links(
    corpus: Corpus,
    verdict_fn: VerdictFn,
    strategy: str | None = None,
    stopwords: frozenset[str] = DEFAULT_STOPWORDS,
    mask_trigger: bool = True,
    on_progress: Callable[[int, int], None] | None = None,
) -> tuple[list[RecoveredLink], FunnelReport]:
    """Validate every prefilter survivor; Yes verdicts become recovered links.

    A provider failure aborts only the affected pair: it is counted as
    skipped in the funnel report, never silently treated as a No.
    """
    candidates = enumerate_candidates(corpus)
    survivors, funnel = apply_prefilter(candidates, corpus, stopwords, mask_trigger)

    recovered: list[RecoveredLink] = []
    skipped = 0
    for index, candidate in enumerate(survivors):
        if on_progress:
            on_progress(index, len(survivors))
        try:
            verdict = verdict_fn(candidate.stakeholder, candidate.system)
        except (GatewayError, AmbiguousVerdictError):
            skipped += 1
            continue
        if verdict.decision is Decision.YES:
            recovered.append(
                RecoveredLink(
                    stake_id=candidate.stakeholder.id,
                    sys_id=candidate.system.id,
                    verdict=verdict,
                    condition_side=candidate.condition_side,
                )
            )

    report = FunnelReport(
        total_candidates=funnel.total_candidates,
        after_stage1=funnel.after_stage1,
        after_stage2=funnel.after_stage2,
        after_stage3=funnel.after_stage3,
        predicted_valid=len(recovered),
        drop_reasons=funnel.drop_reasons,
        skipped=skipped,
    )
    return recovered, report


def write_recovery_output(
    recovered: list[RecoveredLink], funnel: FunnelReport, path: str | Path
) -> None:
    """One line per recovered link plus a single funnel record."""
    with open(path, "w", encoding="utf-8") as fh:
        for link in recovered:
            fh.write(json.dumps(link.to_record(), sort_keys=True) + "\n")
        fh.write(json.dumps(funnel.to_record(), sort_keys=True) + "\n")


def read_recovery_output(path: str | Path) -> tuple[list[dict], dict | None]:
    links: list[dict] = []
    funnel: dict | None = None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            if record.get("type") == "funnel":
                funnel = record
            else:
                links.append(record)
    return links, funnel
