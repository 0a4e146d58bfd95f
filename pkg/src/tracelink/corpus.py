"""Corpus loading, requirement classification, and synthetic corpus generation.

Corpus files are UTF-8 line-delimited JSON, one record per line:

- stakeholder records ``{"id": ..., "text": ..., "variation"?: "V1".."V4"}``
- system records ``{"id": ..., "name": ..., "mature": ..., "demature": ...}``
- link records ``{"stake_id": ..., "sys_id": ..., "label"?: "valid"|"invalid"}``

Unknown fields are rejected so silent schema drift cannot happen.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from random import Random

from tracelink.model import (
    VARIATION_CONDITION,
    VARIATION_DTC,
    ConditionKind,
    DtcType,
    LinkLabel,
    Provenance,
    StakeholderRequirement,
    SystemRequirement,
    TraceLink,
    Variation,
    normalize_requirement_text,
)

# Domain terms that never identify a concrete message or signal, plus common
# English filler. Matching is case-insensitive; override via stopword file.
DEFAULT_DOMAIN_STOPWORDS = frozenset(
    {
        "dtc",
        "run",
        "true",
        "false",
        "present",
        "module",
        "signal",
        "message",
        "rules",
        "reference_document",
    }
)

DEFAULT_ENGLISH_STOPWORDS = frozenset(
    {
        "a", "an", "and", "any", "are", "as", "at", "be", "by", "can", "do",
        "does", "each", "either", "for", "from", "has", "have", "if", "in",
        "is", "it", "its", "must", "no", "not", "of", "on", "or", "shall",
        "should", "that", "the", "then", "there", "this", "to", "when",
        "which", "will", "with", "within",
    }
)

DEFAULT_STOPWORDS = DEFAULT_DOMAIN_STOPWORDS | DEFAULT_ENGLISH_STOPWORDS

_TOKEN_RE = re.compile(r"[A-Za-z0-9_]+")
# A message/signal identifier: word characters, at least one digit or
# underscore, at least four characters long.
_IDENTIFIER_RE = re.compile(r"^(?=.{4,}$)(?=.*[0-9_])[A-Za-z0-9_]+$")
# Trigger clause of a stakeholder requirement: `If <ident> = "...",`
_TRIGGER_CLAUSE_RE = re.compile(
    r"\bif\s+[A-Za-z0-9_]+\s*(?:!=|=)\s*\"[^\"]*\"\s*,?", re.IGNORECASE
)
_LEADING_TRIGGER_RE = re.compile(
    r"^\s*if\s+[A-Za-z0-9_]+\s*(?:!=|=)\s*\"[^\"]*\"\s*,?", re.IGNORECASE
)

_V1_RE = re.compile(r"does\s+not\s+receive\s+the\s+message", re.IGNORECASE)
_V2_RE = re.compile(r"internal\s+signal", re.IGNORECASE)
_V3_RE = re.compile(r"does\s+not\s+detect\s+a\s+plausibility\s+fault", re.IGNORECASE)
_V4_COND_RE = re.compile(r"determines\s+there\s+is\s+a\s+failure", re.IGNORECASE)
_V4_FLAG_RE = re.compile(r"\bfaulted\b", re.IGNORECASE)


class CorpusError(ValueError):
    """Raised for malformed corpus files or broken referential integrity."""


class InfeasibleConfigError(ValueError):
    """Raised when a synthesis config cannot satisfy the generator guarantees."""


def load_stopwords(path: str | Path) -> frozenset[str]:
    """Read one stopword per line; blank lines and #-comments are skipped."""
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        word = line.strip()
        if word and not word.startswith("#"):
            words.add(word.lower())
    return frozenset(words)


def classify_variation(text: str) -> Variation:
    """Match a normalized requirement text against the four known templates.

    Matching is keyword-anchored and case-insensitive; anything that fits no
    template is Unknown and simply excluded from recovery, never rejected.
    """
    if _V1_RE.search(text):
        return Variation.V1
    if _V2_RE.search(text) and "!=" in text:
        return Variation.V2
    if _V3_RE.search(text):
        return Variation.V3
    if _V4_COND_RE.search(text) and _V4_FLAG_RE.search(text):
        return Variation.V4
    return Variation.UNKNOWN


def infer_condition_kind(variation: Variation, text: str) -> ConditionKind:
    """V1-V3 describe mature (setting) conditions, V4 demature (clearing)."""
    return VARIATION_CONDITION[variation]


def extract_messages(
    text: str,
    stopwords: frozenset[str] = DEFAULT_STOPWORDS,
    mask_trigger: bool = True,
) -> frozenset[str]:
    """Extract message/signal identifiers from a requirement text.

    Tokens are runs of word characters. Each token contributes itself plus
    every underscore-aligned suffix, so a compound condition identifier like
    ``Missing_Msg_MESSAGE_1`` also yields the plain message name ``MESSAGE_1``
    it embeds. Survivors must match the identifier grammar (at least one digit
    or underscore, length >= 4) and must not be stopwords.

    With ``mask_trigger`` the leading ``If <ident> = "...",`` clause is removed
    first: the trigger condition is itself a message and would otherwise leak
    into coverage checks.
    """
    if mask_trigger:
        text = _LEADING_TRIGGER_RE.sub("", text, count=1)
    found: set[str] = set()
    for token in _TOKEN_RE.findall(text):
        parts = token.split("_")
        for start in range(len(parts)):
            candidate = "_".join(parts[start:])
            if _IDENTIFIER_RE.match(candidate) and candidate.lower() not in stopwords:
                found.add(candidate)
    return frozenset(found)


def tokenize_for_vocabulary(text: str, stopwords: frozenset[str] = DEFAULT_STOPWORDS) -> list[str]:
    """Plain token stream (stopwords removed) for bag-of-words style embedders."""
    return [t for t in _TOKEN_RE.findall(text) if t.lower() not in stopwords]


def build_stakeholder(
    stake_id: str,
    text: str,
    variation_override: Variation | None = None,
    stopwords: frozenset[str] = DEFAULT_STOPWORDS,
    mask_trigger: bool = True,
) -> StakeholderRequirement:
    """Normalize, classify, and message-extract one stakeholder record.

    A record holding more than one trigger clause is two requirements pasted
    together; that is a data error, never something to split silently.
    """
    normalized = normalize_requirement_text(text)
    if len(_TRIGGER_CLAUSE_RE.findall(normalized)) > 1:
        raise CorpusError(f"stakeholder {stake_id!r} is not atomic: multiple trigger clauses")
    variation = variation_override or classify_variation(normalized)
    return StakeholderRequirement(
        id=stake_id,
        text=normalized,
        variation=variation,
        dtc_type=VARIATION_DTC[variation],
        condition_kind=infer_condition_kind(variation, normalized),
        messages=extract_messages(normalized, stopwords, mask_trigger=mask_trigger),
    )


def build_system(
    sys_id: str,
    name: str,
    mature_text: str,
    demature_text: str,
    stopwords: frozenset[str] = DEFAULT_STOPWORDS,
) -> SystemRequirement:
    """Normalize and message-extract one system record; DTC type from the name/text."""
    mature = normalize_requirement_text(mature_text)
    demature = normalize_requirement_text(demature_text)
    blob = f"{name} {mature} {demature}".lower()
    if "lostcomm" in blob or "lost_comm" in blob or "missing_msg" in blob:
        dtc = DtcType.LOST_COMMUNICATION
    elif "implausible" in blob:
        dtc = DtcType.IMPLAUSIBLE_DATA
    else:
        dtc = DtcType.UNKNOWN
    return SystemRequirement(
        id=sys_id,
        name=name,
        dtc_type=dtc,
        mature_text=mature,
        demature_text=demature,
        mature_messages=extract_messages(mature, stopwords, mask_trigger=False),
        demature_messages=extract_messages(demature, stopwords, mask_trigger=False),
    )


@dataclass(frozen=True)
class Corpus:
    """A referentially intact set of requirements and their recorded links."""

    stakeholders: tuple[StakeholderRequirement, ...]
    systems: tuple[SystemRequirement, ...]
    links: tuple[TraceLink, ...]

    def __post_init__(self) -> None:
        stake_ids = {s.id for s in self.stakeholders}
        sys_ids = {s.id for s in self.systems}
        seen: set[tuple[str, str]] = set()
        for link in self.links:
            if link.stake_id not in stake_ids:
                raise CorpusError(f"link references unknown stakeholder id {link.stake_id!r}")
            if link.sys_id not in sys_ids:
                raise CorpusError(f"link references unknown system id {link.sys_id!r}")
            if link.pair in seen:
                raise CorpusError(f"duplicate link {link.pair!r}")
            seen.add(link.pair)
        object.__setattr__(self, "_stake_index", {s.id: s for s in self.stakeholders})
        object.__setattr__(self, "_sys_index", {s.id: s for s in self.systems})

    def stakeholder(self, stake_id: str) -> StakeholderRequirement:
        return self._stake_index[stake_id]  # type: ignore[attr-defined]

    def system(self, sys_id: str) -> SystemRequirement:
        return self._sys_index[sys_id]  # type: ignore[attr-defined]

    def labeled_links(self) -> tuple[TraceLink, ...]:
        return tuple(l for l in self.links if l.label is not LinkLabel.UNLABELED)

    def linked_pairs(self) -> frozenset[tuple[str, str]]:
        return frozenset(l.pair for l in self.links)


_STAKE_FIELDS = {"id", "text", "variation"}
_SYS_FIELDS = {"id", "name", "mature", "demature"}
_LINK_FIELDS = {"stake_id", "sys_id", "label"}


def _read_records(path: str | Path, allowed: set[str], required: set[str]) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed record: {exc.msg}") from exc
            if not isinstance(record, dict):
                raise CorpusError(f"{path}:{lineno}: record must be an object")
            unknown = set(record) - allowed
            if unknown:
                raise CorpusError(f"{path}:{lineno}: unknown fields {sorted(unknown)}")
            missing = required - set(record)
            if missing:
                raise CorpusError(f"{path}:{lineno}: missing fields {sorted(missing)}")
            record["_lineno"] = lineno
            records.append(record)
    return records


def load_corpus(
    stakeholder_path: str | Path,
    system_path: str | Path,
    links_path: str | Path,
    stopwords: frozenset[str] = DEFAULT_STOPWORDS,
    mask_trigger: bool = True,
) -> Corpus:
    """Load and classify a corpus, verifying ids are unique and links resolve."""
    stakeholders = []
    seen_ids: set[str] = set()
    for rec in _read_records(stakeholder_path, _STAKE_FIELDS, {"id", "text"}):
        if rec["id"] in seen_ids:
            raise CorpusError(f"{stakeholder_path}:{rec['_lineno']}: duplicate id {rec['id']!r}")
        seen_ids.add(rec["id"])
        override = Variation(rec["variation"]) if "variation" in rec else None
        stakeholders.append(
            build_stakeholder(rec["id"], rec["text"], override, stopwords, mask_trigger)
        )

    systems = []
    seen_ids = set()
    for rec in _read_records(system_path, _SYS_FIELDS, _SYS_FIELDS):
        if rec["id"] in seen_ids:
            raise CorpusError(f"{system_path}:{rec['_lineno']}: duplicate id {rec['id']!r}")
        seen_ids.add(rec["id"])
        systems.append(build_system(rec["id"], rec["name"], rec["mature"], rec["demature"], stopwords))

    links = []
    for rec in _read_records(links_path, _LINK_FIELDS, {"stake_id", "sys_id"}):
        raw_label = rec.get("label")
        if raw_label is None:
            label = LinkLabel.UNLABELED
        elif raw_label in ("valid", "invalid"):
            label = LinkLabel.VALID if raw_label == "valid" else LinkLabel.INVALID
        else:
            raise CorpusError(f"{links_path}:{rec['_lineno']}: bad label {raw_label!r}")
        links.append(TraceLink(rec["stake_id"], rec["sys_id"], label))

    return Corpus(tuple(stakeholders), tuple(systems), tuple(links))


def write_corpus(
    corpus: Corpus,
    stakeholder_path: str | Path,
    system_path: str | Path,
    links_path: str | Path,
) -> None:
    """Write a corpus back out in the line-delimited record format."""
    with open(stakeholder_path, "w", encoding="utf-8") as fh:
        for s in corpus.stakeholders:
            fh.write(json.dumps({"id": s.id, "text": s.text}, sort_keys=True) + "\n")
    with open(system_path, "w", encoding="utf-8") as fh:
        for s in corpus.systems:
            fh.write(
                json.dumps(
                    {"id": s.id, "name": s.name, "mature": s.mature_text, "demature": s.demature_text},
                    sort_keys=True,
                )
                + "\n"
            )
    with open(links_path, "w", encoding="utf-8") as fh:
        for link in corpus.links:
            record: dict = {"stake_id": link.stake_id, "sys_id": link.sys_id}
            if link.label is not LinkLabel.UNLABELED:
                record["label"] = link.label.value.lower()
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def write_ground_truth(links: list[TraceLink], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for link in links:
            fh.write(
                json.dumps(
                    {"stake_id": link.stake_id, "sys_id": link.sys_id, "label": link.label.value.lower()},
                    sort_keys=True,
                )
                + "\n"
            )


@dataclass(frozen=True)
class SynthesisConfig:
    """Parameters for the ground-truth synthetic corpus generator."""

    n_stakeholders: int
    n_systems: int
    valid_link_rate: float = 0.6
    invalid_link_rate: float = 0.2
    variation_mix: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    message_vocabulary_size: int = 512
    random_seed: int = 0

    def __post_init__(self) -> None:
        if self.n_stakeholders < 0 or self.n_systems <= 0:
            raise InfeasibleConfigError("need n_stakeholders >= 0 and n_systems >= 1")
        if not (0 <= self.valid_link_rate <= 1 and 0 <= self.invalid_link_rate <= 1):
            raise InfeasibleConfigError("link rates must be fractions in [0, 1]")
        if self.valid_link_rate + self.invalid_link_rate > 1 + 1e-9:
            raise InfeasibleConfigError("link rates must sum to at most 1")
        if all(w <= 0 for w in self.variation_mix):
            raise InfeasibleConfigError("variation mix weights must not all be zero")
        if any(w < 0 for w in self.variation_mix):
            raise InfeasibleConfigError("variation mix weights must be non-negative")


# Messages listed per condition side of a generated system requirement.
_MESSAGES_PER_SIDE = 3
# After the guaranteed coverage block, every fourth valid pair is withheld
# from the recorded links; those pairs are the recovery targets.
_WITHHOLD_EVERY = 4

_ROLE_VALID = "valid"
_ROLE_INVALID = "invalid"
_ROLE_UNPAIRED = "unpaired"


def _stake_text(variation: Variation, token: str, trigger: str) -> str:
    if variation is Variation.V1:
        return (
            f'If {trigger} = "RUN", and the module M does NOT receive the message '
            f"{token} for a certain number of message cycles, then the module M shall: "
            f'--- Set the DTC to "Not Present" according to rules contained in the '
            f'"Reference_Document".'
        )
    if variation is Variation.V2:
        return (
            f'If {trigger} = "RUN", the internal signal state of {token} != "Valid", '
            f'then the module M must: --- Set the DTC to "Not Present" according to the '
            f'appropriate validation rules contained in the "Reference_Document".'
        )
    if variation is Variation.V3:
        return (
            f'If {trigger} = "RUN", and the module M does not detect a Plausibility '
            f"Fault on a signal within the message {token}, then the module M must: "
            f'--- Set the DTC to "Not Present" according to rules contained in the '
            f'"Reference_Document".'
        )
    if variation is Variation.V4:
        return (
            f'If {trigger} = "RUN", the module M determines there is a failure in '
            f"{token}, then the module M shall: --- Set the internal failure flag to "
            f'"Faulted". Set the DTC to "Present" according to rules contained in the '
            f'"Reference_Document".'
        )
    raise ValueError(variation)


def _system_side_text(dtc: DtcType, flag_name: str, tokens: list[str], clearing: bool) -> str:
    prefix = "Missing_Msg_" if dtc is DtcType.LOST_COMMUNICATION else "Implausible_"
    conditions = [prefix + t for t in tokens]
    if clearing:
        joined = " && ".join("!" + c for c in conditions)
        return f"if ( ENABLE_COMPONENT is enabled ){{ if ( {joined} ){{ {flag_name} = FALSE; }}}}"
    joined = " || ".join(conditions)
    return f"if ( ENABLE_COMPONENT is enabled ){{ if ( {joined} ){{ {flag_name} = TRUE; }}}}"


def _role_sequence(config: SynthesisConfig, rng: Random) -> list[str]:
    roles = []
    for i in range(config.n_stakeholders):
        position = (i + 0.5) / max(config.n_stakeholders, 1)
        if position <= config.valid_link_rate:
            roles.append(_ROLE_VALID)
        elif position <= config.valid_link_rate + config.invalid_link_rate:
            roles.append(_ROLE_INVALID)
        else:
            roles.append(_ROLE_UNPAIRED)
    rng.shuffle(roles)
    return roles


def _variation_queue(
    count: int,
    available: list[Variation],
    weights: list[float],
    rng: Random,
    guarantee_rounds: int,
) -> list[Variation]:
    # The first rounds cycle through every generatable variation so each
    # (variation, label) few-shot cell is populated whenever counts permit.
    queue: list[Variation] = []
    for _ in range(guarantee_rounds):
        for v in available:
            if len(queue) < count:
                queue.append(v)
    while len(queue) < count:
        queue.append(rng.choices(available, weights=weights, k=1)[0])
    return queue


def generate_synthetic_corpus(config: SynthesisConfig) -> tuple[Corpus, list[TraceLink]]:
    """Generate a corpus with known ground truth.

    Guarantees, relied on by the test oracles downstream:

    - deterministic output for a fixed seed;
    - a pair is ground-truth Valid exactly when the stakeholder's message set
      is fully contained in the system side bound by its condition kind;
    - recorded Invalid links never satisfy that coverage;
    - every Valid pair survives all three recovery prefilter stages;
    - each (variation, label) combination appears among recorded links when
      counts permit.

    Returns the corpus (whose recorded links carry their true labels) and the
    full ground truth: recorded links plus the withheld Valid pairs that a
    recovery run is expected to find.
    """
    rng = Random(config.random_seed)

    n_lost = max(1, config.n_systems // 2)
    n_impl = config.n_systems - n_lost

    variations = [Variation.V1, Variation.V2, Variation.V3, Variation.V4]
    weights = list(config.variation_mix)
    if n_impl == 0:
        # With no implausible-data system, V2-V4 stakeholders have no home.
        weights = [weights[0], 0.0, 0.0, 0.0]
        if weights[0] <= 0:
            raise InfeasibleConfigError(
                "a single-system corpus can only host V1 stakeholders, "
                "but the variation mix gives V1 zero weight"
            )
    available = [v for v, w in zip(variations, weights) if w > 0]
    available_weights = [w for w in weights if w > 0]

    roles = _role_sequence(config, rng)
    n_valid = roles.count(_ROLE_VALID)
    n_invalid = roles.count(_ROLE_INVALID)
    n_unpaired = roles.count(_ROLE_UNPAIRED)

    n_orphans = n_invalid + n_unpaired
    tokens_needed = (n_lost + 2 * n_impl) * _MESSAGES_PER_SIDE + n_orphans
    if config.message_vocabulary_size < tokens_needed:
        raise InfeasibleConfigError(
            f"vocabulary of {config.message_vocabulary_size} cannot supply "
            f"{tokens_needed} distinct message tokens"
        )

    vocabulary = [f"MESSAGE_{i + 101}" for i in range(config.message_vocabulary_size)]
    rng.shuffle(vocabulary)
    cursor = 0

    def take(n: int) -> list[str]:
        nonlocal cursor
        chunk = vocabulary[cursor : cursor + n]
        cursor += n
        return chunk

    systems: list[SystemRequirement] = []
    mature_pool: dict[str, list[str]] = {}
    demature_pool: dict[str, list[str]] = {}
    for i in range(config.n_systems):
        sys_id = f"SYS-{i + 1:03d}"
        dtc = DtcType.LOST_COMMUNICATION if i < n_lost else DtcType.IMPLAUSIBLE_DATA
        mature_tokens = take(_MESSAGES_PER_SIDE)
        if dtc is DtcType.LOST_COMMUNICATION:
            # Clearing is the literal negation of setting: same messages.
            demature_tokens = list(mature_tokens)
            flag = f"LostComm_Module_S{i + 1}"
            name = f"Lost Communication with source ECU group {i + 1}"
        else:
            # Distinct clearing pool; keeps the condition-side binding of the
            # recovery filter observable.
            demature_tokens = take(_MESSAGES_PER_SIDE)
            flag = f"ImplausibleData_Module_S{i + 1}"
            name = f"Implausible data from source ECU group {i + 1}"
        systems.append(
            build_system(
                sys_id,
                name,
                _system_side_text(dtc, flag, mature_tokens, clearing=False),
                _system_side_text(dtc, flag, demature_tokens, clearing=True),
            )
        )
        mature_pool[sys_id] = mature_tokens
        demature_pool[sys_id] = demature_tokens

    lost_systems = [s for s in systems if s.dtc_type is DtcType.LOST_COMMUNICATION]
    impl_systems = [s for s in systems if s.dtc_type is DtcType.IMPLAUSIBLE_DATA]

    valid_variations = _variation_queue(n_valid, available, available_weights, rng, 2)
    invalid_variations = _variation_queue(n_invalid, available, available_weights, rng, 2)
    unpaired_variations = _variation_queue(n_unpaired, available, available_weights, rng, 0)
    guarantee_block = 2 * len(available)

    stakeholders: list[StakeholderRequirement] = []
    recorded: list[TraceLink] = []
    ground_truth: list[TraceLink] = []
    valid_seen = invalid_seen = unpaired_seen = 0

    for i, role in enumerate(roles):
        stake_id = f"STK-{i + 1:04d}"
        if role == _ROLE_VALID:
            variation = valid_variations[valid_seen]
            valid_seen += 1
        elif role == _ROLE_INVALID:
            variation = invalid_variations[invalid_seen]
            invalid_seen += 1
        else:
            variation = unpaired_variations[unpaired_seen]
            unpaired_seen += 1

        trigger = f"Trigger_Condition_{rng.randrange(10, 100)}"
        pool = lost_systems if variation is Variation.V1 else impl_systems
        target = rng.choice(pool)
        side_tokens = (
            demature_pool[target.id] if variation is Variation.V4 else mature_pool[target.id]
        )

        if role == _ROLE_VALID:
            token = rng.choice(side_tokens)
            stakeholders.append(build_stakeholder(stake_id, _stake_text(variation, token, trigger)))
            truth = TraceLink(stake_id, target.id, LinkLabel.VALID, Provenance.ANNOTATOR)
            ground_truth.append(truth)
            past_block = valid_seen - guarantee_block
            if past_block > 0 and past_block % _WITHHOLD_EVERY == 0:
                pass  # withheld: a recovery run must rediscover this pair
            else:
                recorded.append(truth)
        else:
            # Orphan message: covered by no system, so any recorded link is
            # invalid and the pair can never survive the overlap stage.
            token = take(1)[0]
            stakeholders.append(build_stakeholder(stake_id, _stake_text(variation, token, trigger)))
            if role == _ROLE_INVALID:
                bogus = TraceLink(stake_id, target.id, LinkLabel.INVALID, Provenance.ANNOTATOR)
                recorded.append(bogus)
                ground_truth.append(bogus)

    corpus = Corpus(tuple(stakeholders), tuple(systems), tuple(recorded))
    return corpus, ground_truth
