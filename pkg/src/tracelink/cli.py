"""Command-line entry points.

Batch analytics (corpus generation, evaluation, sweeps, statistics) run
in-process; ``validate`` and ``recover`` can either run locally or act as
thin clients against a running service instance via ``--server``.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import httpx

from tracelink.config import (
    AppConfig,
    build_validator,
    default_mock_config,
    load_app_corpus,
    load_config,
)
from tracelink.corpus import (
    SynthesisConfig,
    generate_synthetic_corpus,
    write_corpus,
    write_ground_truth,
)
from tracelink.evaluation import (
    clamp_unit_interval,
    cohen_kappa,
    fisher_exact_two_sided,
    labeled_examples_from_corpus,
    render_metrics_table,
    run_loocv,
    run_robustness,
    threshold_sweep,
    tfidf_vectors,
    write_report_records,
)
from tracelink.gateway import GatewayMode
from tracelink.prompting import StrategyKind
from tracelink.recovery import recover_links, write_recovery_output
from tracelink.retrieval import Metric


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tracelink")
    parser.add_argument("--config", type=Path, help="path to the JSON configuration file")
    parser.add_argument("--provider", help="provider id from the configuration")
    parser.add_argument(
        "--strategy",
        choices=list(StrategyKind.ALL),
        help="prompt strategy (default from configuration)",
    )
    parser.add_argument("--k", type=int, help="retrieved examples per label pool")
    parser.add_argument("--metric", choices=["cosine", "euclidean"])
    parser.add_argument("--mode", choices=["live", "record", "replay"])
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("--out", type=Path, help="output file or directory")

    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-corpus", help="generate a synthetic corpus with ground truth")
    gen.add_argument("--stakeholders", type=int, default=200)
    gen.add_argument("--systems", type=int, default=8)
    gen.add_argument("--valid-rate", type=float, default=0.6)
    gen.add_argument("--invalid-rate", type=float, default=0.2)
    gen.add_argument("--vocabulary", type=int, default=512)

    val = sub.add_parser("validate", help="judge one requirement pair")
    val.add_argument("--stake-id")
    val.add_argument("--sys-id")
    val.add_argument("--stake-text")
    val.add_argument("--sys-text")
    val.add_argument("--server", help="base URL of a running service to call instead")

    rec = sub.add_parser("recover", help="find missing trace links")
    rec.add_argument("--server", help="base URL of a running service to call instead")

    ev = sub.add_parser("evaluate", help="cross-validation over the labeled links")
    ev.add_argument("protocol", choices=["loocv", "robustness"])

    sub.add_parser("sweep", help="tf-idf similarity threshold sweep over labeled links")

    kap = sub.add_parser("kappa", help="inter-rater agreement for a 2x2 table")
    kap.add_argument("--table", type=int, nargs=4, required=True, metavar=("A", "B", "C", "D"))

    fis = sub.add_parser("fisher", help="two-sided exact test for a 2x2 table")
    fis.add_argument("--table", type=int, nargs=4, required=True, metavar=("A", "B", "C", "D"))

    srv = sub.add_parser("serve", help="run the HTTP service")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8777)

    return parser


def _load_app_config(args: argparse.Namespace) -> AppConfig:
    config = load_config(args.config) if args.config else default_mock_config()
    if args.provider:
        config = replace(config, provider_id=args.provider)
    if args.metric:
        config = replace(config, metric=Metric(args.metric))
    if args.mode:
        config = replace(config, mode=GatewayMode(args.mode))
    strategy = config.strategy
    if args.strategy:
        strategy = replace(strategy, kind=args.strategy)
    if args.k:
        strategy = replace(strategy, k=args.k)
    return replace(config, strategy=strategy)


def cmd_gen_corpus(args: argparse.Namespace) -> int:
    out_dir = args.out or Path("corpus")
    out_dir.mkdir(parents=True, exist_ok=True)
    config = SynthesisConfig(
        n_stakeholders=args.stakeholders,
        n_systems=args.systems,
        valid_link_rate=args.valid_rate,
        invalid_link_rate=args.invalid_rate,
        message_vocabulary_size=args.vocabulary,
        random_seed=args.seed or 0,
    )
    corpus, ground_truth = generate_synthetic_corpus(config)
    write_corpus(
        corpus,
        out_dir / "stakeholders.jsonl",
        out_dir / "systems.jsonl",
        out_dir / "links.jsonl",
    )
    write_ground_truth(ground_truth, out_dir / "ground-truth.jsonl")
    withheld = len(ground_truth) - len(corpus.links)
    print(
        f"wrote {len(corpus.stakeholders)} stakeholders, {len(corpus.systems)} systems, "
        f"{len(corpus.links)} recorded links ({withheld} ground-truth links withheld) to {out_dir}"
    )
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    if args.server:
        body = {
            "stake_id": args.stake_id,
            "stake_text": args.stake_text,
            "sys_id": args.sys_id,
            "sys_text": args.sys_text,
        }
        response = httpx.post(f"{args.server.rstrip('/')}/validate", json=body, timeout=300)
        response.raise_for_status()
        print(json.dumps(response.json(), indent=2))
        return 0

    config = _load_app_config(args)
    corpus = load_app_corpus(config)
    validator = build_validator(config)
    db = validator.build_database(labeled_examples_from_corpus(corpus))
    stake = corpus.stakeholder(args.stake_id) if args.stake_id else None
    system = corpus.system(args.sys_id) if args.sys_id else None
    if stake is None or system is None:
        print("local validation needs --stake-id and --sys-id", file=sys.stderr)
        return 2
    verdict = validator.judge(stake, system, db)
    print(json.dumps(
        {
            "decision": verdict.decision.value,
            "strategy": verdict.strategy,
            "explanation": verdict.explanation,
            "retrieved_example_ids": list(verdict.retrieved_example_ids or ()),
        },
        indent=2,
    ))
    return 0


def cmd_recover(args: argparse.Namespace) -> int:
    if args.server:
        base = args.server.rstrip("/")
        response = httpx.post(f"{base}/recover", json={}, timeout=60)
        response.raise_for_status()
        job_id = response.json()["job_id"]
        while True:
            status = httpx.get(f"{base}/recover/{job_id}", timeout=60).json()
            if status["state"] in ("done", "failed"):
                print(json.dumps(status, indent=2))
                return 0 if status["state"] == "done" else 1
            time.sleep(0.2)

    config = _load_app_config(args)
    corpus = load_app_corpus(config)
    validator = build_validator(config)
    db = validator.build_database(labeled_examples_from_corpus(corpus))

    recovered, funnel = recover_links(
        corpus,
        lambda stake, system: validator.judge(stake, system, db),
        strategy=config.strategy.describe(),
        stopwords=config.stopwords,
    )
    out = args.out or Path("recovery.jsonl")
    write_recovery_output(recovered, funnel, out)
    print(
        f"candidates {funnel.total_candidates} -> {funnel.after_stage1} -> "
        f"{funnel.after_stage2} -> {funnel.after_stage3}; "
        f"predicted valid {funnel.predicted_valid} (skipped {funnel.skipped}); wrote {out}"
    )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _load_app_config(args)
    corpus = load_app_corpus(config)
    validator = build_validator(config)

    records = []
    if args.protocol == "loocv":
        result = run_loocv(corpus, validator)
        print(render_metrics_table([("loocv", result.metrics)]))
        print(f"trials: {len(result.trials)}, skipped: {len(result.skipped)}")
        records.append(result.metrics.to_record())
    else:
        result = run_robustness(corpus, validator)
        rows = [("All", result.pooled)] + [
            (variation.value, report) for variation, report in result.per_variation.items()
        ]
        print(render_metrics_table(rows))
        print(f"trials: {len(result.trials)}, skipped: {len(result.skipped)}")
        records.append({"row": "All", **result.pooled.to_record()})
        records.extend(
            {"row": variation.value, **report.to_record()}
            for variation, report in result.per_variation.items()
        )
    if args.out:
        write_report_records(records, args.out)
        print(f"wrote {args.out}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _load_app_config(args)
    corpus = load_app_corpus(config)
    labeled = corpus.labeled_links()
    if not labeled:
        print("no labeled links to sweep", file=sys.stderr)
        return 2

    # One tf-idf space over both requirement collections; the similarity of a
    # link is the cosine of its stakeholder and system rows.
    stake_texts = {s.id: s.text for s in corpus.stakeholders}
    sys_texts = {s.id: f"{s.mature_text} {s.demature_text}" for s in corpus.systems}
    documents = list(stake_texts.values()) + list(sys_texts.values())
    matrix, _ = tfidf_vectors(documents, config.stopwords)
    stake_rows = {sid: matrix[i] for i, sid in enumerate(stake_texts)}
    sys_rows = {sid: matrix[len(stake_texts) + i] for i, sid in enumerate(sys_texts)}

    similarities = []
    labels = []
    for link in labeled:
        similarities.append(float(stake_rows[link.stake_id] @ sys_rows[link.sys_id]))
        labels.append(link.label)
    result = threshold_sweep(clamp_unit_interval(similarities), labels)
    print(
        f"best threshold {result.best_threshold} with macro-F1 {result.best_macro_f1} "
        f"over {len(labels)} labeled links"
    )
    if args.out:
        write_report_records([result.to_record()], args.out)
        print(f"wrote {args.out}")
    return 0


def cmd_kappa(args: argparse.Namespace) -> int:
    a, b, c, d = args.table
    report = cohen_kappa(((a, b), (c, d)))
    print(json.dumps(report.to_record(), indent=2))
    return 0


def cmd_fisher(args: argparse.Namespace) -> int:
    a, b, c, d = args.table
    p = fisher_exact_two_sided(((a, b), (c, d)))
    print(json.dumps({"type": "fisher", "p_value": p}, indent=2))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from tracelink.service.app import create_app

    config = _load_app_config(args)
    app = create_app(config)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


_COMMANDS = {
    "gen-corpus": cmd_gen_corpus,
    "validate": cmd_validate,
    "recover": cmd_recover,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "kappa": cmd_kappa,
    "fisher": cmd_fisher,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
