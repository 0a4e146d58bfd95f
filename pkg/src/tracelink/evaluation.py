"""Evaluation metrics, exact statistics, and the cross-validation drivers.

Percentages are rounded half-up to two decimals, matching the reporting
convention of the result tables this mirrors. Metrics with a zero
denominator are flagged undefined rather than coerced to zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Hashable, Mapping, Protocol, Sequence

import numpy as np

from tracelink.corpus import DEFAULT_STOPWORDS, Corpus, tokenize_for_vocabulary
from tracelink.gateway import GatewayError
from tracelink.model import (
    ConfusionCounts,
    Decision,
    LabeledExample,
    LinkLabel,
    StakeholderRequirement,
    SystemRequirement,
    Variation,
    Verdict,
)
from tracelink.pipeline import AmbiguousVerdictError
from tracelink.retrieval import RetrievalDatabase, make_example_id


class EvaluationError(ValueError):
    pass


class PairSetMismatchError(EvaluationError):
    pass


class DegenerateTableError(EvaluationError):
    pass


def round2(value: float) -> float:
    """Round half-up to two decimals, as the reported tables do."""
    return float(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class MetricsReport:
    """Confusion-derived percentages; None marks an undefined (0/0) metric."""

    confusion: ConfusionCounts
    accuracy: float | None
    valid_precision: float | None
    valid_recall: float | None
    valid_f1: float | None
    invalid_precision: float | None
    invalid_recall: float | None
    invalid_f1: float | None
    macro_f1: float | None
    undefined_flags: frozenset[str] = field(default_factory=frozenset)

    def to_record(self) -> dict:
        return {
            "type": "metrics",
            "tp": self.confusion.tp,
            "fp": self.confusion.fp,
            "fn": self.confusion.fn,
            "tn": self.confusion.tn,
            "accuracy": self.accuracy,
            "valid_precision": self.valid_precision,
            "valid_recall": self.valid_recall,
            "valid_f1": self.valid_f1,
            "invalid_precision": self.invalid_precision,
            "invalid_recall": self.invalid_recall,
            "invalid_f1": self.invalid_f1,
            "macro_f1": self.macro_f1,
            "undefined": sorted(self.undefined_flags),
        }


@dataclass(frozen=True)
class RecoveryReport:
    """Share of model-predicted links that human review confirmed."""

    correctness: float | None
    confirmed: int
    predicted: int
    undefined: bool = False

    def to_record(self) -> dict:
        return {
            "type": "recovery",
            "correctness": self.correctness,
            "confirmed": self.confirmed,
            "predicted": self.predicted,
            "undefined": self.undefined,
        }


@dataclass(frozen=True)
class AgreementReport:
    kappa: float
    observed_agreement: float
    expected_agreement: float

    def to_record(self) -> dict:
        return {
            "type": "agreement",
            "kappa": self.kappa,
            "observed_agreement": self.observed_agreement,
            "expected_agreement": self.expected_agreement,
        }


@dataclass(frozen=True)
class SweepResult:
    best_threshold: float | None
    best_macro_f1: float | None
    curve: tuple[tuple[float, float | None], ...]

    def to_record(self) -> dict:
        return {
            "type": "sweep",
            "best_threshold": self.best_threshold,
            "best_macro_f1": self.best_macro_f1,
            "curve": [[t, m] for t, m in self.curve],
        }


def _ratio(numerator: int, denominator: int) -> float | None:
    if denominator == 0:
        return None
    return 100.0 * numerator / denominator


def _f1(precision: float | None, recall: float | None) -> float | None:
    if precision is None or recall is None or precision + recall == 0:
        return None
    return 2 * precision * recall / (precision + recall)


def macro_f1_from_class_f1(valid_f1: float, invalid_f1: float) -> float:
    """Unweighted mean of the two per-class F1 percentages, rounded half-up."""
    mean = (Decimal(repr(valid_f1)) + Decimal(repr(invalid_f1))) / 2
    return float(mean.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def metrics_from_confusion(confusion: ConfusionCounts) -> MetricsReport:
    """Derive all report percentables from raw counts.

    The valid class treats valid links as positives; the invalid class swaps
    the roles. Per-class F1 values are rounded before the macro average so
    the report is internally consistent to the printed precision.
    """
    tp, fp, fn, tn = confusion.tp, confusion.fp, confusion.fn, confusion.tn

    accuracy = _ratio(tp + tn, confusion.total)
    valid_precision = _ratio(tp, tp + fp)
    valid_recall = _ratio(tp, tp + fn)
    valid_f1 = _f1(valid_precision, valid_recall)
    invalid_precision = _ratio(tn, tn + fn)
    invalid_recall = _ratio(tn, tn + fp)
    invalid_f1 = _f1(invalid_precision, invalid_recall)

    values = {
        "accuracy": accuracy,
        "valid_precision": valid_precision,
        "valid_recall": valid_recall,
        "valid_f1": valid_f1,
        "invalid_precision": invalid_precision,
        "invalid_recall": invalid_recall,
        "invalid_f1": invalid_f1,
    }
    rounded = {k: (round2(v) if v is not None else None) for k, v in values.items()}

    if rounded["valid_f1"] is not None and rounded["invalid_f1"] is not None:
        macro = macro_f1_from_class_f1(rounded["valid_f1"], rounded["invalid_f1"])
    else:
        macro = None

    undefined = frozenset(k for k, v in values.items() if v is None) | (
        frozenset(("macro_f1",)) if macro is None else frozenset()
    )
    return MetricsReport(
        confusion=confusion,
        macro_f1=macro,
        undefined_flags=undefined,
        **rounded,
    )


def compute_metrics(
    predictions: Mapping[Hashable, LinkLabel], truth: Mapping[Hashable, LinkLabel]
) -> MetricsReport:
    """Score binary predictions against ground truth over the same pair set."""
    if set(predictions) != set(truth):
        missing = set(truth) - set(predictions)
        extra = set(predictions) - set(truth)
        raise PairSetMismatchError(
            f"prediction and truth pair sets differ (missing={len(missing)}, extra={len(extra)})"
        )
    tp = fp = fn = tn = 0
    for key, predicted in predictions.items():
        if predicted not in (LinkLabel.VALID, LinkLabel.INVALID):
            raise EvaluationError(f"prediction for {key!r} must be Valid or Invalid")
        actual = truth[key]
        if actual not in (LinkLabel.VALID, LinkLabel.INVALID):
            raise EvaluationError(f"truth for {key!r} must be Valid or Invalid")
        if predicted is LinkLabel.VALID and actual is LinkLabel.VALID:
            tp += 1
        elif predicted is LinkLabel.VALID and actual is LinkLabel.INVALID:
            fp += 1
        elif predicted is LinkLabel.INVALID and actual is LinkLabel.VALID:
            fn += 1
        else:
            tn += 1
    return metrics_from_confusion(ConfusionCounts(tp, fp, fn, tn))


def compute_correctness(confirmed: int, predicted: int) -> RecoveryReport:
    """Share of predicted links confirmed by human verification."""
    if confirmed < 0 or predicted < 0:
        raise EvaluationError("counts must be non-negative")
    if confirmed > predicted:
        raise EvaluationError(f"confirmed ({confirmed}) cannot exceed predicted ({predicted})")
    if predicted == 0:
        return RecoveryReport(correctness=None, confirmed=0, predicted=0, undefined=True)
    return RecoveryReport(
        correctness=round2(100.0 * confirmed / predicted),
        confirmed=confirmed,
        predicted=predicted,
    )


Table2x2 = tuple[tuple[int, int], tuple[int, int]]


def _validate_table(table: Table2x2) -> tuple[int, int, int, int]:
    (a, b), (c, d) = table
    if min(a, b, c, d) < 0:
        raise EvaluationError("table counts must be non-negative")
    if a + b + c + d == 0:
        raise EvaluationError("table must contain at least one observation")
    return a, b, c, d


def cohen_kappa(table: Table2x2) -> AgreementReport:
    """Chance-corrected agreement for a 2x2 rater table.

    kappa = (p_o - p_e) / (1 - p_e) with marginal-product expected agreement.
    """
    a, b, c, d = _validate_table(table)
    n = a + b + c + d
    p_o = (a + d) / n
    p_e = ((a + b) * (a + c) + (c + d) * (b + d)) / (n * n)
    if p_e == 1.0:
        raise DegenerateTableError("expected agreement is 1; kappa is undefined")
    return AgreementReport(
        kappa=(p_o - p_e) / (1 - p_e),
        observed_agreement=p_o,
        expected_agreement=p_e,
    )


def _log_comb(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def fisher_exact_two_sided(table: Table2x2) -> float:
    """Two-sided Fisher's exact test by the point-probability method.

    With both margins fixed, sums the hypergeometric probabilities of every
    table whose probability does not exceed the observed table's. Works in
    log space so arbitrarily large totals cannot overflow; the comparison
    carries a tiny relative fudge so equal-probability tables (symmetric
    cases) are included despite floating-point noise.
    """
    a, b, c, d = _validate_table(table)
    r1, r2 = a + b, c + d
    c1 = a + c
    n = r1 + r2

    log_denominator = _log_comb(n, c1)

    def log_p(x: int) -> float:
        return _log_comb(r1, x) + _log_comb(r2, c1 - x) - log_denominator

    lo = max(0, c1 - r2)
    hi = min(r1, c1)
    support = [log_p(x) for x in range(lo, hi + 1)]
    lp_observed = support[a - lo]

    included = [lp for lp in support if lp <= lp_observed + 1e-9]
    peak = max(included)
    p_value = math.exp(peak) * math.fsum(math.exp(lp - peak) for lp in included)
    return min(p_value, 1.0)


def tfidf_vectors(
    texts: Sequence[str], stopwords: frozenset[str] = DEFAULT_STOPWORDS
) -> tuple[np.ndarray, list[str]]:
    """Smoothed tf-idf rows, L2-normalized, over a lexicographic vocabulary.

    idf(t) = ln((1 + N) / (1 + df(t))) + 1; weights are raw counts times idf.
    """
    if not texts:
        raise EvaluationError("tf-idf needs at least one document")
    token_lists = [tokenize_for_vocabulary(t, stopwords) for t in texts]
    vocabulary = sorted({token for tokens in token_lists for token in tokens})
    if not vocabulary:
        raise EvaluationError("tf-idf vocabulary is empty after stopword removal")
    index = {term: i for i, term in enumerate(vocabulary)}

    n_docs = len(texts)
    matrix = np.zeros((n_docs, len(vocabulary)), dtype=float)
    for row, tokens in enumerate(token_lists):
        for token in tokens:
            matrix[row, index[token]] += 1.0

    df = np.count_nonzero(matrix, axis=0)
    idf = np.log((1 + n_docs) / (1 + df)) + 1.0
    matrix *= idf
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return matrix / norms, vocabulary


SWEEP_STEPS = 1000  # thresholds 0.000 .. 1.000 inclusive


def threshold_sweep(
    similarities: Sequence[float], labels: Sequence[LinkLabel]
) -> SweepResult:
    """Classify by similarity >= t for every t on the 0.001 grid.

    Returns the full macro-F1 curve and the argmax (ties resolve to the
    smallest threshold). Thresholds where macro-F1 is undefined stay on the
    curve flagged as None and never win.
    """
    if len(similarities) == 0:
        raise EvaluationError("threshold sweep needs at least one pair")
    if len(similarities) != len(labels):
        raise EvaluationError("similarities and labels must be parallel")
    sims = np.asarray(similarities, dtype=float)
    if np.any(sims < 0) or np.any(sims > 1):
        raise EvaluationError("similarities must be rescaled into [0, 1] first")

    truth_valid = np.array([label is LinkLabel.VALID for label in labels])
    thresholds = np.arange(SWEEP_STEPS + 1) / SWEEP_STEPS
    predicted = sims[None, :] >= thresholds[:, None]

    tp = (predicted & truth_valid).sum(axis=1)
    fp = (predicted & ~truth_valid).sum(axis=1)
    fn = (~predicted & truth_valid).sum(axis=1)
    tn = (~predicted & ~truth_valid).sum(axis=1)

    curve: list[tuple[float, float | None]] = []
    best_threshold: float | None = None
    best_macro: float | None = None
    for i, threshold in enumerate(thresholds):
        report = metrics_from_confusion(
            ConfusionCounts(int(tp[i]), int(fp[i]), int(fn[i]), int(tn[i]))
        )
        curve.append((float(threshold), report.macro_f1))
        if report.macro_f1 is not None and (best_macro is None or report.macro_f1 > best_macro):
            best_macro = report.macro_f1
            best_threshold = float(threshold)

    return SweepResult(best_threshold=best_threshold, best_macro_f1=best_macro, curve=tuple(curve))


def clamp_unit_interval(values: Sequence[float]) -> list[float]:
    """Clamp similarity scores into [0, 1] for the sweep grid."""
    return [min(1.0, max(0.0, float(v))) for v in values]


class PairJudge(Protocol):
    """What the cross-validation drivers need from the validation pipeline."""

    def build_database(self, examples: list[LabeledExample]) -> RetrievalDatabase: ...

    def judge(
        self,
        stake: StakeholderRequirement,
        system: SystemRequirement,
        db: RetrievalDatabase | None = None,
        exclusion: frozenset[str] = frozenset(),
        variation_exclusion: Variation | None = None,
    ) -> Verdict: ...


@dataclass(frozen=True)
class TrialRecord:
    """One cross-validation evaluation, with enough trace to audit retrieval."""

    example_id: str
    stake_id: str
    sys_id: str
    variation: Variation
    truth: LinkLabel
    predicted: LinkLabel
    retrieved_example_ids: tuple[str, ...]
    database_size: int


@dataclass(frozen=True)
class SkippedPair:
    example_id: str
    reason: str


@dataclass(frozen=True)
class LoocvResult:
    metrics: MetricsReport
    trials: tuple[TrialRecord, ...]
    skipped: tuple[SkippedPair, ...]


@dataclass(frozen=True)
class RobustnessResult:
    pooled: MetricsReport
    per_variation: dict[Variation, MetricsReport]
    trials: tuple[TrialRecord, ...]
    skipped: tuple[SkippedPair, ...]


def labeled_examples_from_corpus(corpus: Corpus) -> list[LabeledExample]:
    return [
        LabeledExample(
            stakeholder=corpus.stakeholder(link.stake_id),
            system=corpus.system(link.sys_id),
            label=link.label,
            example_id=make_example_id(link.stake_id, link.sys_id),
        )
        for link in corpus.labeled_links()
    ]


def _run_cross_validation(
    corpus: Corpus, judge: PairJudge, exclude_own_variation: bool
) -> tuple[tuple[TrialRecord, ...], tuple[SkippedPair, ...]]:
    examples = labeled_examples_from_corpus(corpus)
    if len(examples) < 2:
        raise EvaluationError("cross-validation needs at least two labeled links")
    db = judge.build_database(examples)

    trials: list[TrialRecord] = []
    skipped: list[SkippedPair] = []
    for example in examples:
        # Leave-one-out: the test pair never appears in its own database.
        exclusion = frozenset({example.example_id})
        variation_exclusion = example.stakeholder.variation if exclude_own_variation else None
        try:
            verdict = judge.judge(
                example.stakeholder,
                example.system,
                db,
                exclusion=exclusion,
                variation_exclusion=variation_exclusion,
            )
        except (GatewayError, AmbiguousVerdictError) as exc:
            skipped.append(SkippedPair(example.example_id, str(exc)))
            continue
        predicted = LinkLabel.VALID if verdict.decision is Decision.YES else LinkLabel.INVALID
        trials.append(
            TrialRecord(
                example_id=example.example_id,
                stake_id=example.stakeholder.id,
                sys_id=example.system.id,
                variation=example.stakeholder.variation,
                truth=example.label,
                predicted=predicted,
                retrieved_example_ids=verdict.retrieved_example_ids or (),
                database_size=len(db) - 1,
            )
        )
    return tuple(trials), tuple(skipped)


def _metrics_for_trials(trials: Sequence[TrialRecord]) -> MetricsReport:
    predictions = {t.example_id: t.predicted for t in trials}
    truth = {t.example_id: t.truth for t in trials}
    return compute_metrics(predictions, truth)


def run_loocv(corpus: Corpus, judge: PairJudge) -> LoocvResult:
    """Leave-one-out over the labeled links; one pooled confusion matrix.

    Each labeled link is judged against a database of the remaining n-1
    links. Provider failures skip only the affected pair and are reported
    separately, never counted into the confusion matrix.
    """
    trials, skipped = _run_cross_validation(corpus, judge, exclude_own_variation=False)
    return LoocvResult(metrics=_metrics_for_trials(trials), trials=trials, skipped=skipped)


def run_robustness(corpus: Corpus, judge: PairJudge) -> RobustnessResult:
    """Leave-one-out with the test pair's whole variation hidden from retrieval.

    Emulates encountering an unseen requirement variation: examples sharing
    the test pair's variation are excluded, so retrieval may only offer the
    remaining categories. Reports one metrics row per variation plus the
    pooled row.
    """
    variations = {
        corpus.stakeholder(link.stake_id).variation for link in corpus.labeled_links()
    }
    if len(variations) < 2:
        raise EvaluationError("robustness evaluation needs at least two variation classes")
    trials, skipped = _run_cross_validation(corpus, judge, exclude_own_variation=True)
    per_variation = {
        variation: _metrics_for_trials([t for t in trials if t.variation is variation])
        for variation in sorted(variations, key=lambda v: v.value)
        if any(t.variation is variation for t in trials)
    }
    return RobustnessResult(
        pooled=_metrics_for_trials(trials),
        per_variation=per_variation,
        trials=trials,
        skipped=skipped,
    )


def _cell(value: float | None) -> str:
    return f"{value:7.2f}" if value is not None else "     --"


def render_metrics_table(rows: Sequence[tuple[str, MetricsReport]]) -> str:
    """Plain-text table: accuracy, per-class precision/recall/F1, macro-F1."""
    header = (
        f"{'':12s} {'Acc':>7s} "
        f"{'V-Pre':>7s} {'V-Rec':>7s} {'V-F1':>7s} "
        f"{'I-Pre':>7s} {'I-Rec':>7s} {'I-F1':>7s} {'Macro-F1':>9s}"
    )
    lines = [header, "-" * len(header)]
    for label, report in rows:
        lines.append(
            f"{label:12s} {_cell(report.accuracy)} "
            f"{_cell(report.valid_precision)} {_cell(report.valid_recall)} {_cell(report.valid_f1)} "
            f"{_cell(report.invalid_precision)} {_cell(report.invalid_recall)} {_cell(report.invalid_f1)} "
            f"{_cell(report.macro_f1):>9s}"
        )
    return "\n".join(lines)


def write_report_records(records: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
