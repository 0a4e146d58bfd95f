"""Request/response bodies of the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    store_version: int
    provider_id: str


class StrategyOverride(BaseModel):
    kind: str | None = None
    k: int | None = Field(default=None, ge=1)
    runs: int | None = Field(default=None, ge=1)
    run_temperature: float | None = Field(default=None, ge=0.0)
    fewshot_seed: int | None = None
    explanation_mode: bool | None = None


class ValidateRequest(BaseModel):
    stake_id: str | None = None
    stake_text: str | None = None
    sys_id: str | None = None
    sys_text: str | None = None
    strategy: StrategyOverride | None = None


class ValidateResponse(BaseModel):
    decision: str
    explanation: str | None
    retrieved_example_ids: list[str]
    strategy: str
    store_version: int
    yes_votes: int | None = None
    no_votes: int | None = None


class RecoverRequest(BaseModel):
    strategy: StrategyOverride | None = None


class RecoverAccepted(BaseModel):
    job_id: str


class FunnelModel(BaseModel):
    total_candidates: int
    after_stage1: int
    after_stage2: int
    after_stage3: int
    predicted_valid: int
    drop_reasons: dict[str, int]
    skipped: int


class JobStatus(BaseModel):
    job_id: str
    state: str  # pending | running | done | failed
    done: int
    total: int
    funnel: FunnelModel | None = None
    recovered: int = 0
    queued_items: int = 0
    error: str | None = None


class ReviewItemModel(BaseModel):
    item_id: str
    stake_id: str
    sys_id: str
    stakeholder_text: str
    system_condition_text: str
    condition_side: str
    shared_message_tokens: list[str]
    vote_share: float
    explanation: str | None
    status: str
    decided_by: str | None = None
    decided_at: float | None = None


class ReviewQueueResponse(BaseModel):
    items: list[ReviewItemModel]
    page: int
    page_size: int
    total: int
    store_version: int


class DecisionRequest(BaseModel):
    decision: str  # accept | reject
    reviewer: str


class DecisionResponse(BaseModel):
    item_id: str
    status: str
    store_version: int


class MetricsResponse(BaseModel):
    store_version: int
    pending: int
    accepted: int
    rejected: int
    predicted: int
    confirmed: int
    correctness: float | None
