"""Shared domain vocabulary: requirements, links, labels, verdicts, counts.

All types here are immutable value objects; their invariants are checked at
construction time so downstream code can rely on them without re-validating.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class Variation(Enum):
    """Template class of a stakeholder requirement."""

    V1 = "V1"
    V2 = "V2"
    V3 = "V3"
    V4 = "V4"
    UNKNOWN = "Unknown"


class DtcType(Enum):
    """Network-failure fault category a requirement belongs to."""

    LOST_COMMUNICATION = "LostCommunication"
    IMPLAUSIBLE_DATA = "ImplausibleData"
    UNKNOWN = "Unknown"


class ConditionKind(Enum):
    """Whether a requirement concerns fault setting (mature) or clearing."""

    MATURE = "Mature"
    DEMATURE = "Demature"
    UNKNOWN = "Unknown"


class LinkLabel(Enum):
    VALID = "Valid"
    INVALID = "Invalid"
    UNLABELED = "Unlabeled"


class Provenance(Enum):
    ENGINEER = "Engineer"
    ANNOTATOR = "Annotator"
    MODEL = "Model"
    HUMAN_REVIEW = "HumanReview"


class Decision(Enum):
    YES = "Yes"
    NO = "No"
    AMBIGUOUS = "Ambiguous"


# V1 is the lost-communication template; V2-V4 are implausible-data templates.
VARIATION_DTC: dict[Variation, DtcType] = {
    Variation.V1: DtcType.LOST_COMMUNICATION,
    Variation.V2: DtcType.IMPLAUSIBLE_DATA,
    Variation.V3: DtcType.IMPLAUSIBLE_DATA,
    Variation.V4: DtcType.IMPLAUSIBLE_DATA,
    Variation.UNKNOWN: DtcType.UNKNOWN,
}

# V1-V3 describe fault-setting conditions, V4 describes fault clearing.
VARIATION_CONDITION: dict[Variation, ConditionKind] = {
    Variation.V1: ConditionKind.MATURE,
    Variation.V2: ConditionKind.MATURE,
    Variation.V3: ConditionKind.MATURE,
    Variation.V4: ConditionKind.DEMATURE,
    Variation.UNKNOWN: ConditionKind.UNKNOWN,
}


class ModelInvariantError(ValueError):
    """A domain object was constructed in a state its invariants forbid."""


def normalize_requirement_text(text: str) -> str:
    """Collapse interior whitespace runs and strip the ends. Idempotent."""
    return " ".join(text.split())


@dataclass(frozen=True)
class StakeholderRequirement:
    """A single atomic stakeholder requirement with its classification."""

    id: str
    text: str
    variation: Variation = Variation.UNKNOWN
    dtc_type: DtcType = DtcType.UNKNOWN
    condition_kind: ConditionKind = ConditionKind.UNKNOWN
    messages: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.variation is not Variation.UNKNOWN:
            expected_dtc = VARIATION_DTC[self.variation]
            expected_kind = VARIATION_CONDITION[self.variation]
            if self.dtc_type is not expected_dtc:
                raise ModelInvariantError(
                    f"{self.id}: variation {self.variation.value} requires "
                    f"dtc_type {expected_dtc.value}, got {self.dtc_type.value}"
                )
            if self.condition_kind is not expected_kind:
                raise ModelInvariantError(
                    f"{self.id}: variation {self.variation.value} requires "
                    f"condition_kind {expected_kind.value}, got {self.condition_kind.value}"
                )


@dataclass(frozen=True)
class SystemRequirement:
    """A system requirement with its fault-setting and fault-clearing blocks."""

    id: str
    name: str
    dtc_type: DtcType
    mature_text: str
    demature_text: str
    mature_messages: frozenset[str] = field(default_factory=frozenset)
    demature_messages: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if not self.mature_text.strip():
            raise ModelInvariantError(f"{self.id}: mature_text must be non-empty")
        if not self.demature_text.strip():
            raise ModelInvariantError(f"{self.id}: demature_text must be non-empty")

    def side_text(self, kind: ConditionKind) -> str:
        if kind is ConditionKind.MATURE:
            return self.mature_text
        if kind is ConditionKind.DEMATURE:
            return self.demature_text
        raise ValueError(f"no condition side for kind {kind.value}")

    def side_messages(self, kind: ConditionKind) -> frozenset[str]:
        if kind is ConditionKind.MATURE:
            return self.mature_messages
        if kind is ConditionKind.DEMATURE:
            return self.demature_messages
        raise ValueError(f"no condition side for kind {kind.value}")


@dataclass(frozen=True)
class TraceLink:
    """A recorded correspondence between one stakeholder and one system requirement."""

    stake_id: str
    sys_id: str
    label: LinkLabel = LinkLabel.UNLABELED
    provenance: Provenance = Provenance.ENGINEER

    @property
    def pair(self) -> tuple[str, str]:
        return (self.stake_id, self.sys_id)


@dataclass(frozen=True)
class LabeledExample:
    """A requirement pair with a confirmed binary label; retrieval-database unit."""

    stakeholder: StakeholderRequirement
    system: SystemRequirement
    label: LinkLabel
    example_id: str

    def __post_init__(self) -> None:
        if self.label not in (LinkLabel.VALID, LinkLabel.INVALID):
            raise ModelInvariantError(
                f"example {self.example_id}: label must be Valid or Invalid, "
                f"got {self.label.value}"
            )


@dataclass(frozen=True)
class VoteTally:
    """Outcome counts of a multi-run vote. Ambiguous runs are counted, not hidden."""

    yes_count: int
    no_count: int
    ambiguous_count: int = 0

    def __post_init__(self) -> None:
        if min(self.yes_count, self.no_count, self.ambiguous_count) < 0:
            raise ModelInvariantError("vote counts must be non-negative")

    @property
    def total(self) -> int:
        return self.yes_count + self.no_count + self.ambiguous_count

    @property
    def yes_share(self) -> float:
        return self.yes_count / self.total if self.total else 0.0


@dataclass(frozen=True)
class Verdict:
    """Parsed model decision for one requirement pair."""

    decision: Decision
    raw_response: str
    strategy: str
    explanation: str | None = None
    votes: VoteTally | None = None
    retrieved_example_ids: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.decision not in (Decision.YES, Decision.NO):
            raise ModelInvariantError("a verdict decision must be Yes or No")
        if self.votes is not None:
            majority = Decision.YES if self.votes.yes_count > self.votes.no_count else Decision.NO
            if self.decision is not majority:
                raise ModelInvariantError(
                    "verdict decision inconsistent with its vote tally"
                )


@dataclass(frozen=True)
class ConfusionCounts:
    """TP/FP/FN/TN of a binary evaluation run; valid links are the positive class."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ModelInvariantError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn
