"""Configuration file loading and object wiring for the CLI and service.

The config is one JSON document naming the corpus files, the provider
catalogue, strategy and retrieval defaults, and storage paths. Credentials
never live here: HTTP providers read their bearer token from the
environment variable named in the config.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from tracelink.corpus import DEFAULT_STOPWORDS, Corpus, load_corpus, load_stopwords
from tracelink.gateway import (
    Gateway,
    GatewayMode,
    HttpTransport,
    MockProvider,
    MockRule,
    ProviderConfig,
    ReplayCache,
    Transport,
)
from tracelink.pipeline import TraceValidator
from tracelink.prompting import StrategyConfig
from tracelink.retrieval import (
    CachingEmbedder,
    Embedder,
    EmbeddingCache,
    LexicalEmbedder,
    Metric,
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusPaths:
    stakeholders: Path
    systems: Path
    links: Path


@dataclass(frozen=True)
class AppConfig:
    corpus: CorpusPaths | None = None
    provider_id: str = "mock"
    providers: dict[str, dict] = field(default_factory=dict)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    metric: Metric = Metric.COSINE
    mode: GatewayMode = GatewayMode.LIVE
    stopwords: frozenset[str] = DEFAULT_STOPWORDS
    store_path: Path = Path("review-store.jsonl")
    replay_cache: Path | None = None
    embedding_cache: Path | None = None
    concurrency_limit: int = 4
    api_token: str | None = None
    seed: int = 0


def load_config(path: str | Path) -> AppConfig:
    base = Path(path).parent
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc.msg}") from exc

    def resolve(value: str | None) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else base / p

    corpus = None
    if "corpus" in data:
        section = data["corpus"]
        corpus = CorpusPaths(
            stakeholders=resolve(section["stakeholders"]),
            systems=resolve(section["systems"]),
            links=resolve(section["links"]),
        )

    strategy_data = data.get("strategy", {})
    strategy = StrategyConfig(
        kind=strategy_data.get("kind", "rag"),
        k=strategy_data.get("k", 3),
        runs=strategy_data.get("runs", 10),
        run_temperature=strategy_data.get("run_temperature", 0.0),
        fewshot_seed=strategy_data.get("fewshot_seed", 0),
        explanation_mode=strategy_data.get("explanation_mode", False),
    )

    stopwords = DEFAULT_STOPWORDS
    if data.get("stopword_file"):
        stopwords = load_stopwords(resolve(data["stopword_file"]))

    return AppConfig(
        corpus=corpus,
        provider_id=data.get("provider", "mock"),
        providers=data.get("providers", {}),
        strategy=strategy,
        metric=Metric(data.get("metric", "cosine")),
        mode=GatewayMode(data.get("mode", "live")),
        stopwords=stopwords,
        store_path=resolve(data.get("store_path", "review-store.jsonl")),
        replay_cache=resolve(data.get("replay_cache")),
        embedding_cache=resolve(data.get("embedding_cache")),
        concurrency_limit=data.get("concurrency_limit", 4),
        api_token=data.get("api_token"),
        seed=data.get("seed", 0),
    )


def default_mock_config() -> AppConfig:
    """An offline configuration used when no config file is supplied."""
    return AppConfig(
        providers={"mock": {"type": "mock", "model_name": "scripted", "rules": []}},
        provider_id="mock",
    )


def provider_settings(config: AppConfig, provider_id: str | None = None) -> dict:
    pid = provider_id or config.provider_id
    if pid == "mock" and pid not in config.providers:
        return {"type": "mock", "model_name": "scripted", "rules": []}
    if pid not in config.providers:
        raise ConfigError(f"no provider {pid!r} in configuration")
    return {**config.providers[pid], "provider_id": pid}


def build_provider_config(config: AppConfig, provider_id: str | None = None) -> ProviderConfig:
    settings = provider_settings(config, provider_id)
    return ProviderConfig(
        provider_id=settings.get("provider_id", provider_id or config.provider_id),
        model_name=settings.get("model_name", "unknown"),
        endpoint=settings.get("endpoint", ""),
        temperature=settings.get("temperature", 0.0),
        max_output_tokens=settings.get("max_output_tokens", 1024),
        context_limit_tokens=settings.get("context_limit_tokens", 200_000),
        max_retries=settings.get("max_retries", 3),
        request_timeout=settings.get("request_timeout", 60.0),
    )


def build_transport(config: AppConfig, provider_id: str | None = None) -> Transport:
    settings = provider_settings(config, provider_id)
    kind = settings.get("type", "mock")
    if kind == "mock":
        rules = [MockRule(r["pattern"], r["response"]) for r in settings.get("rules", [])]
        return MockProvider(rules, default=settings.get("default_response", "No"))
    if kind == "http":
        headers = {}
        token_env = settings.get("token_env")
        if token_env and os.environ.get(token_env):
            headers["Authorization"] = f"Bearer {os.environ[token_env]}"
        return HttpTransport(headers)
    raise ConfigError(f"unknown provider type {kind!r}")


def build_gateway(config: AppConfig, provider_id: str | None = None) -> Gateway:
    cache = ReplayCache(config.replay_cache)
    return Gateway(
        build_transport(config, provider_id),
        cache=cache,
        max_in_flight=config.concurrency_limit,
    )


def build_embedder(config: AppConfig) -> Embedder:
    cache = EmbeddingCache(config.embedding_cache)
    return CachingEmbedder(LexicalEmbedder(), cache)


def build_validator(
    config: AppConfig,
    provider_id: str | None = None,
    strategy: StrategyConfig | None = None,
) -> TraceValidator:
    return TraceValidator(
        gateway=build_gateway(config, provider_id),
        provider=build_provider_config(config, provider_id),
        embedder=build_embedder(config),
        strategy=strategy or config.strategy,
        metric=config.metric,
        mode=config.mode,
    )


def load_app_corpus(config: AppConfig) -> Corpus:
    if config.corpus is None:
        raise ConfigError("configuration names no corpus files")
    return load_corpus(
        config.corpus.stakeholders,
        config.corpus.systems,
        config.corpus.links,
        stopwords=config.stopwords,
    )
