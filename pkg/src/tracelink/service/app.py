"""HTTP service: validation, recovery jobs, and the review queue.

Many concurrent readers, one serialized decision writer. Retrieval always
runs against a database snapshot consistent with the store version returned
to clients, so a validate request issued after a decision observes that
decision's example.
"""

from __future__ import annotations

import itertools
import threading
import uuid
from dataclasses import dataclass, field, replace

from fastapi import Depends, FastAPI, HTTPException, Query, Request

from tracelink.config import AppConfig, build_validator, load_app_corpus
from tracelink.corpus import Corpus, build_stakeholder, build_system
from tracelink.evaluation import compute_correctness, labeled_examples_from_corpus
from tracelink.gateway import GatewayError, TokenBudgetError
from tracelink.model import (
    LabeledExample,
    StakeholderRequirement,
    SystemRequirement,
    Variation,
)
from tracelink.pipeline import AmbiguousVerdictError, TraceValidator
from tracelink.prompting import PromptError, StrategyConfig
from tracelink.recovery import recover_links
from tracelink.retrieval import RetrievalDatabase
from tracelink.service.schemas import (
    DecisionRequest,
    DecisionResponse,
    FunnelModel,
    HealthResponse,
    JobStatus,
    MetricsResponse,
    RecoverAccepted,
    RecoverRequest,
    ReviewItemModel,
    ReviewQueueResponse,
    StrategyOverride,
    ValidateRequest,
    ValidateResponse,
)
from tracelink.store import (
    AlreadyDecidedError,
    ItemNotFoundError,
    ReviewStatus,
    ReviewStore,
    StoredExample,
)

_ADHOC_COUNTER = itertools.count(1)


@dataclass
class RecoveryJob:
    job_id: str
    state: str = "pending"
    done: int = 0
    total: int = 0
    recovered: int = 0
    queued_items: int = 0
    funnel: FunnelModel | None = None
    error: str | None = None


@dataclass
class AppState:
    config: AppConfig
    corpus: Corpus
    store: ReviewStore
    validator: TraceValidator
    jobs: dict[str, RecoveryJob] = field(default_factory=dict)
    _db_lock: threading.Lock = field(default_factory=threading.Lock)
    _db_version: int = -1
    _db: RetrievalDatabase | None = None

    def database(self) -> tuple[RetrievalDatabase, int]:
        """Retrieval database covering the corpus plus all reviewed examples.

        Rebuilt lazily per store version; new examples are embedded once and
        appended copy-on-write so in-flight readers keep their snapshot.
        """
        snapshot = self.store.snapshot()
        with self._db_lock:
            if self._db is not None and self._db_version == snapshot.version:
                return self._db, snapshot.version
            base = labeled_examples_from_corpus(self.corpus)
            known = {e.example_id for e in base}
            extra = [
                self._materialize(stored)
                for stored in snapshot.labeled_examples
                if f"{stored.stake_id}::{stored.sys_id}" not in known
            ]
            db = self.validator.build_database(base + extra)
            self._db, self._db_version = db, snapshot.version
            return db, snapshot.version

    def _materialize(self, stored: StoredExample) -> LabeledExample:
        return LabeledExample(
            stakeholder=self.corpus.stakeholder(stored.stake_id),
            system=self.corpus.system(stored.sys_id),
            label=stored.label,
            example_id=f"{stored.stake_id}::{stored.sys_id}",
        )


def _apply_strategy_override(
    base: StrategyConfig, override: StrategyOverride | None
) -> StrategyConfig:
    if override is None:
        return base
    changes = {k: v for k, v in override.model_dump().items() if v is not None}
    return replace(base, **changes)


def _resolve_stakeholder(state: AppState, body: ValidateRequest) -> StakeholderRequirement:
    if body.stake_id is not None:
        try:
            return state.corpus.stakeholder(body.stake_id)
        except KeyError:
            raise HTTPException(404, detail=f"unknown stakeholder id {body.stake_id!r}")
    if body.stake_text is not None:
        return build_stakeholder(
            f"adhoc-stk-{next(_ADHOC_COUNTER)}", body.stake_text, stopwords=state.config.stopwords
        )
    raise HTTPException(400, detail="request must carry stake_id or stake_text")


def _resolve_system(state: AppState, body: ValidateRequest) -> SystemRequirement:
    if body.sys_id is not None:
        try:
            return state.corpus.system(body.sys_id)
        except KeyError:
            raise HTTPException(404, detail=f"unknown system id {body.sys_id!r}")
    if body.sys_text is not None:
        return build_system(
            f"adhoc-sys-{next(_ADHOC_COUNTER)}",
            "ad-hoc system requirement",
            body.sys_text,
            body.sys_text,
            stopwords=state.config.stopwords,
        )
    raise HTTPException(400, detail="request must carry sys_id or sys_text")


def _item_projection(state: AppState, item) -> ReviewItemModel:
    stake = state.corpus.stakeholder(item.stake_id)
    system = state.corpus.system(item.sys_id)
    side = item.condition_side
    shared = stake.messages & system.side_messages(side)
    return ReviewItemModel(
        item_id=item.item_id,
        stake_id=item.stake_id,
        sys_id=item.sys_id,
        stakeholder_text=stake.text,
        system_condition_text=system.side_text(side),
        condition_side=side.value,
        shared_message_tokens=sorted(shared),
        vote_share=item.vote_share,
        explanation=item.explanation,
        status=item.status,
        decided_by=item.decided_by,
        decided_at=item.decided_at,
    )


def create_app(config: AppConfig, corpus: Corpus | None = None) -> FastAPI:
    corpus = corpus if corpus is not None else load_app_corpus(config)
    state = AppState(
        config=config,
        corpus=corpus,
        store=ReviewStore(config.store_path),
        validator=build_validator(config),
    )
    app = FastAPI(title="tracelink", version="0.1.0")
    app.state.tracelink = state

    async def require_token(request: Request) -> None:
        if config.api_token is None:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {config.api_token}":
            raise HTTPException(401, detail="missing or invalid bearer token")

    guarded = Depends(require_token)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(
            status="ok",
            store_version=state.store.version,
            provider_id=state.validator.provider.provider_id,
        )

    @app.post("/validate", response_model=ValidateResponse, dependencies=[guarded])
    def validate(body: ValidateRequest) -> ValidateResponse:
        stake = _resolve_stakeholder(state, body)
        system = _resolve_system(state, body)
        strategy = _apply_strategy_override(state.config.strategy, body.strategy)
        validator = replace_strategy(state.validator, strategy)
        db, version = state.database()
        try:
            verdict = validator.judge(stake, system, db)
        except (TokenBudgetError, PromptError) as exc:
            raise HTTPException(400, detail=str(exc))
        except (GatewayError, AmbiguousVerdictError) as exc:
            raise HTTPException(502, detail=f"upstream provider failure: {exc}")
        return ValidateResponse(
            decision=verdict.decision.value,
            explanation=verdict.explanation,
            retrieved_example_ids=list(verdict.retrieved_example_ids or ()),
            strategy=verdict.strategy,
            store_version=version,
            yes_votes=verdict.votes.yes_count if verdict.votes else None,
            no_votes=verdict.votes.no_count if verdict.votes else None,
        )

    @app.post("/recover", response_model=RecoverAccepted, dependencies=[guarded])
    def start_recovery(body: RecoverRequest) -> RecoverAccepted:
        job = RecoveryJob(job_id=uuid.uuid4().hex[:12])
        state.jobs[job.job_id] = job
        strategy = _apply_strategy_override(state.config.strategy, body.strategy)
        thread = threading.Thread(
            target=_run_recovery_job, args=(state, job, strategy), daemon=True
        )
        thread.start()
        return RecoverAccepted(job_id=job.job_id)

    @app.get("/recover/{job_id}", response_model=JobStatus, dependencies=[guarded])
    def recovery_status(job_id: str) -> JobStatus:
        job = state.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, detail=f"unknown recovery job {job_id!r}")
        return JobStatus(
            job_id=job.job_id,
            state=job.state,
            done=job.done,
            total=job.total,
            funnel=job.funnel,
            recovered=job.recovered,
            queued_items=job.queued_items,
            error=job.error,
        )

    @app.get("/review/queue", response_model=ReviewQueueResponse, dependencies=[guarded])
    def review_queue(
        status: str | None = Query(default=None),
        variation: str | None = Query(default=None),
        min_vote_share: float | None = Query(default=None, ge=0.0, le=1.0),
        page: int = Query(default=1, ge=1),
        page_size: int = Query(default=50, ge=1, le=500),
    ) -> ReviewQueueResponse:
        if status is not None and status not in (
            ReviewStatus.PENDING,
            ReviewStatus.ACCEPTED,
            ReviewStatus.REJECTED,
        ):
            raise HTTPException(400, detail=f"unknown status filter {status!r}")
        wanted_variation: Variation | None = None
        if variation is not None:
            try:
                wanted_variation = Variation(variation)
            except ValueError:
                raise HTTPException(400, detail=f"unknown variation filter {variation!r}")

        items = state.store.items()
        if status is not None:
            items = [i for i in items if i.status == status]
        if min_vote_share is not None:
            items = [i for i in items if i.vote_share >= min_vote_share]
        if wanted_variation is not None:
            items = [
                i
                for i in items
                if state.corpus.stakeholder(i.stake_id).variation is wanted_variation
            ]
        items.sort(key=lambda i: (-i.vote_share, i.item_id))
        total = len(items)
        start = (page - 1) * page_size
        page_items = items[start : start + page_size]
        return ReviewQueueResponse(
            items=[_item_projection(state, i) for i in page_items],
            page=page,
            page_size=page_size,
            total=total,
            store_version=state.store.version,
        )

    @app.post(
        "/review/{item_id}/decision", response_model=DecisionResponse, dependencies=[guarded]
    )
    def decide(item_id: str, body: DecisionRequest) -> DecisionResponse:
        if body.decision not in ("accept", "reject"):
            raise HTTPException(400, detail="decision must be 'accept' or 'reject'")
        try:
            version = state.store.record_decision(item_id, body.decision, body.reviewer)
        except ItemNotFoundError as exc:
            raise HTTPException(404, detail=str(exc))
        except AlreadyDecidedError as exc:
            raise HTTPException(409, detail=str(exc))
        item = state.store.get_item(item_id)
        return DecisionResponse(item_id=item_id, status=item.status, store_version=version)

    @app.get("/metrics/latest", response_model=MetricsResponse, dependencies=[guarded])
    def metrics_latest() -> MetricsResponse:
        items = state.store.items()
        accepted = sum(1 for i in items if i.status == ReviewStatus.ACCEPTED)
        rejected = sum(1 for i in items if i.status == ReviewStatus.REJECTED)
        pending = sum(1 for i in items if i.status == ReviewStatus.PENDING)
        decided = accepted + rejected
        report = compute_correctness(accepted, decided)
        return MetricsResponse(
            store_version=state.store.version,
            pending=pending,
            accepted=accepted,
            rejected=rejected,
            predicted=len(items),
            confirmed=accepted,
            correctness=report.correctness,
        )

    return app


def replace_strategy(validator: TraceValidator, strategy: StrategyConfig) -> TraceValidator:
    if strategy == validator.strategy:
        return validator
    return TraceValidator(
        gateway=validator.gateway,
        provider=validator.provider,
        embedder=validator.embedder,
        strategy=strategy,
        metric=validator.metric,
        mode=validator.mode,
    )


def _run_recovery_job(state: AppState, job: RecoveryJob, strategy: StrategyConfig) -> None:
    job.state = "running"
    try:
        db, _ = state.database()
        validator = replace_strategy(state.validator, strategy)

        def verdict_fn(stake, system):
            return validator.judge(stake, system, db)

        def on_progress(done: int, total: int) -> None:
            job.done, job.total = done, total

        recovered, funnel = recover_links(
            state.corpus,
            verdict_fn,
            strategy=strategy.describe(),
            stopwords=state.config.stopwords,
            on_progress=on_progress,
        )
        added = state.store.add_recovered_links(recovered)
        job.done = job.total
        job.recovered = len(recovered)
        job.queued_items = len(added)
        job.funnel = FunnelModel(**{k: v for k, v in funnel.to_record().items() if k != "type"})
        job.state = "done"
    except Exception as exc:  # job errors surface through the status endpoint
        job.error = str(exc)
        job.state = "failed"
