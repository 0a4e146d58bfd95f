import math
from random import Random

import numpy as np
import pytest

from tracelink.model import (
    DtcType,
    LabeledExample,
    LinkLabel,
    StakeholderRequirement,
    SystemRequirement,
    VARIATION_CONDITION,
    VARIATION_DTC,
    Variation,
)
from tracelink.retrieval import (
    CachingEmbedder,
    DegenerateVectorError,
    DimensionMismatchError,
    EmbeddingCache,
    EmbeddingVector,
    LexicalEmbedder,
    Metric,
    RetrievalConfig,
    RetrievalDatabase,
    RetrievalError,
    cosine_similarity,
    euclidean_distance,
    pair_text,
    requirement_pair_text,
    retrieve_examples,
)


def _vec(*values):
    return EmbeddingVector(tuple(float(v) for v in values))


def _example(example_id: str, label: LinkLabel, variation: Variation = Variation.V1):
    stake = StakeholderRequirement(
        id=f"s-{example_id}",
        text=f"text {example_id}",
        variation=variation,
        dtc_type=VARIATION_DTC[variation],
        condition_kind=VARIATION_CONDITION[variation],
    )
    system = SystemRequirement(
        id=f"y-{example_id}",
        name="n",
        dtc_type=DtcType.LOST_COMMUNICATION,
        mature_text="m",
        demature_text="d",
    )
    return LabeledExample(stake, system, label, example_id)


class TestPairText:
    def test_definition(self):
        assert pair_text("a", "b") == "a b"

    def test_empty_side_normalized(self):
        assert pair_text("", "b") == "b"

    def test_concatenation(self):
        assert pair_text("x y", "z") == "x y z"

    def test_system_side_joins_both_conditions(self):
        stake = StakeholderRequirement(id="s", text="stake words")
        system = SystemRequirement(
            id="y", name="n", dtc_type=DtcType.UNKNOWN, mature_text="mat", demature_text="dem"
        )
        assert requirement_pair_text(stake, system) == "stake words mat dem"


class TestLexicalEmbedder:
    def test_count_semantics(self):
        embedder = LexicalEmbedder(dimension=64)
        vector = np.asarray(embedder.embed("a a b").values)
        bucket_a, bucket_b = embedder._bucket("a"), embedder._bucket("b")
        assert bucket_a != bucket_b
        assert vector[bucket_a] == pytest.approx(2 * vector[bucket_b])

    def test_deterministic(self):
        embedder = LexicalEmbedder()
        assert embedder.embed("one two three") == embedder.embed("one two three")

    def test_empty_is_degenerate_zero(self):
        vector = LexicalEmbedder().embed("")
        assert vector.is_degenerate
        assert vector.dimension == 512

    def test_unit_norm(self):
        vector = LexicalEmbedder().embed("alpha beta gamma alpha")
        assert np.linalg.norm(vector.as_array()) == pytest.approx(1.0)


class TestEmbeddingVector:
    def test_rejects_non_finite(self):
        with pytest.raises(RetrievalError):
            EmbeddingVector((1.0, float("nan")))

    def test_rejects_empty(self):
        with pytest.raises(RetrievalError):
            EmbeddingVector(())


class TestSimilarities:
    def test_cosine_identity(self):
        assert cosine_similarity(_vec(1, 0), _vec(1, 0)) == pytest.approx(1.0)

    def test_cosine_orthogonal(self):
        assert cosine_similarity(_vec(1, 0), _vec(0, 1)) == pytest.approx(0.0)

    def test_cosine_hand_value(self):
        # 32 / (sqrt(14) * sqrt(77))
        expected = 32 / math.sqrt(14 * 77)
        assert cosine_similarity(_vec(1, 2, 3), _vec(4, 5, 6)) == pytest.approx(expected)
        assert round(expected, 4) == 0.9746

    def test_cosine_zero_vector_raises(self):
        with pytest.raises(DegenerateVectorError):
            cosine_similarity(_vec(0, 0), _vec(1, 0))

    def test_cosine_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            cosine_similarity(_vec(1, 2), _vec(1, 2, 3))

    def test_euclidean_identity(self):
        assert euclidean_distance(_vec(0, 0), _vec(0, 0)) == 0.0

    def test_euclidean_three_four_five(self):
        assert euclidean_distance(_vec(0, 0), _vec(3, 4)) == pytest.approx(5.0)

    def test_euclidean_symmetry(self):
        rng = Random(1)
        for _ in range(50):
            a = _vec(*(rng.uniform(-5, 5) for _ in range(6)))
            b = _vec(*(rng.uniform(-5, 5) for _ in range(6)))
            assert euclidean_distance(a, b) == pytest.approx(euclidean_distance(b, a))

    def test_euclidean_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            euclidean_distance(_vec(1), _vec(1, 2))


def brute_force_rank(db, query, config):
    """Independent oracle: exhaustive sort of each label pool."""
    results = {}
    for label in (LinkLabel.VALID, LinkLabel.INVALID):
        pool = []
        for example, vector in zip(db.examples, db.vectors):
            if example.label is not label:
                continue
            if example.example_id in config.exclusion:
                continue
            if (
                config.variation_exclusion is not None
                and example.stakeholder.variation is config.variation_exclusion
            ):
                continue
            if config.metric is Metric.COSINE:
                va, vq = vector.as_array(), query.as_array()
                na, nq = np.linalg.norm(va), np.linalg.norm(vq)
                score = float(va @ vq / (na * nq)) if na > 0 else float("-inf")
                pool.append((-score, example.example_id, example))
            else:
                distance = float(np.linalg.norm(vector.as_array() - query.as_array()))
                pool.append((distance, example.example_id, example))
        pool.sort(key=lambda item: (item[0], item[1]))
        results[label] = [item[2].example_id for item in pool[: config.k]]
    return results[LinkLabel.VALID], results[LinkLabel.INVALID]


def _random_db(rng, size, dimension=8):
    examples, vectors = [], []
    variations = [Variation.V1, Variation.V2, Variation.V3, Variation.V4]
    for i in range(size):
        label = LinkLabel.VALID if rng.random() < 0.5 else LinkLabel.INVALID
        examples.append(_example(f"e{i:05d}", label, rng.choice(variations)))
        vectors.append(_vec(*(rng.uniform(-1, 1) for _ in range(dimension))))
    return RetrievalDatabase(examples, vectors)


class TestRetrieve:
    def test_exhaustive_pool(self):
        db = RetrievalDatabase(
            [_example("v1", LinkLabel.VALID), _example("i1", LinkLabel.INVALID)],
            [_vec(1, 0), _vec(0, 1)],
        )
        result = retrieve_examples(db, _vec(1, 1), RetrievalConfig(k=1))
        assert [r.example.example_id for r in result.valid] == ["v1"]
        assert [r.example.example_id for r in result.invalid] == ["i1"]
        assert not result.valid_shortfall and not result.invalid_shortfall

    def test_six_entry_exclusion_case(self):
        rng = Random(7)
        db = _random_db(rng, 6)
        query = db.vectors[0]
        config = RetrievalConfig(k=2, exclusion=frozenset({db.examples[0].example_id}))
        result = retrieve_examples(db, query, config)
        expected_valid, expected_invalid = brute_force_rank(db, query, config)
        assert [r.example.example_id for r in result.valid] == expected_valid
        assert [r.example.example_id for r in result.invalid] == expected_invalid
        assert db.examples[0].example_id not in result.all_ids()

    def test_matches_brute_force_oracle(self):
        rng = Random(42)
        for trial in range(30):
            db = _random_db(rng, rng.randint(2, 60))
            query = _vec(*(rng.uniform(-1, 1) for _ in range(8)))
            config = RetrievalConfig(
                k=rng.randint(1, 8),
                metric=rng.choice([Metric.COSINE, Metric.EUCLIDEAN]),
                exclusion=frozenset(
                    e.example_id for e in db.examples if rng.random() < 0.15
                ),
                variation_exclusion=rng.choice([None, Variation.V1, Variation.V2]),
            )
            result = retrieve_examples(db, query, config)
            expected_valid, expected_invalid = brute_force_rank(db, query, config)
            assert [r.example.example_id for r in result.valid] == expected_valid
            assert [r.example.example_id for r in result.invalid] == expected_invalid

    def test_variation_exclusion_postcondition(self):
        rng = Random(3)
        db = _random_db(rng, 40)
        config = RetrievalConfig(k=5, variation_exclusion=Variation.V1)
        result = retrieve_examples(db, _vec(*([0.5] * 8)), config)
        for retrieved in result.valid + result.invalid:
            assert retrieved.example.stakeholder.variation is not Variation.V1

    def test_lengths_at_most_k(self):
        rng = Random(5)
        db = _random_db(rng, 30)
        result = retrieve_examples(db, _vec(*([0.3] * 8)), RetrievalConfig(k=4))
        assert len(result.valid) <= 4 and len(result.invalid) <= 4

    def test_shortfall_flag(self):
        db = RetrievalDatabase(
            [_example("v1", LinkLabel.VALID), _example("i1", LinkLabel.INVALID)],
            [_vec(1, 0), _vec(0, 1)],
        )
        result = retrieve_examples(db, _vec(1, 1), RetrievalConfig(k=3))
        assert result.valid_shortfall and result.invalid_shortfall
        assert len(result.valid) == 1 and len(result.invalid) == 1

    def test_scaling_invariance_cosine(self):
        rng = Random(11)
        examples, vectors = [], []
        for i in range(20):
            label = LinkLabel.VALID if i % 2 else LinkLabel.INVALID
            examples.append(_example(f"e{i:03d}", label))
            vectors.append(_vec(*(rng.uniform(0.1, 1) for _ in range(5))))
        query = _vec(*(rng.uniform(0.1, 1) for _ in range(5)))
        scale = 3.7
        scaled_db = RetrievalDatabase(
            examples, [_vec(*(v * scale for v in vec.values)) for vec in vectors]
        )
        scaled_query = _vec(*(v * scale for v in query.values))
        base = retrieve_examples(RetrievalDatabase(examples, vectors), query, RetrievalConfig(k=4))
        scaled = retrieve_examples(scaled_db, scaled_query, RetrievalConfig(k=4))
        assert base.all_ids() == scaled.all_ids()

    def test_tie_break_by_example_id(self):
        examples = [
            _example("b", LinkLabel.VALID),
            _example("a", LinkLabel.VALID),
            _example("c", LinkLabel.INVALID),
        ]
        vectors = [_vec(1, 0), _vec(1, 0), _vec(1, 0)]
        result = retrieve_examples(
            RetrievalDatabase(examples, vectors), _vec(1, 0), RetrievalConfig(k=2)
        )
        assert [r.example.example_id for r in result.valid] == ["a", "b"]

    def test_empty_database_raises(self):
        with pytest.raises(RetrievalError):
            retrieve_examples(RetrievalDatabase([], []), _vec(1, 0), RetrievalConfig())

    def test_query_dimension_mismatch(self):
        db = RetrievalDatabase([_example("v1", LinkLabel.VALID)], [_vec(1, 0)])
        with pytest.raises(DimensionMismatchError):
            retrieve_examples(db, _vec(1, 0, 0), RetrievalConfig())

    def test_degenerate_query_cosine(self):
        db = RetrievalDatabase([_example("v1", LinkLabel.VALID)], [_vec(1, 0)])
        with pytest.raises(DegenerateVectorError):
            retrieve_examples(db, _vec(0, 0), RetrievalConfig())


class TestDatabase:
    def test_unique_ids(self):
        with pytest.raises(RetrievalError, match="unique"):
            RetrievalDatabase(
                [_example("x", LinkLabel.VALID), _example("x", LinkLabel.INVALID)],
                [_vec(1, 0), _vec(0, 1)],
            )

    def test_parallel_lists(self):
        with pytest.raises(RetrievalError):
            RetrievalDatabase([_example("x", LinkLabel.VALID)], [])

    def test_mixed_dimensions(self):
        with pytest.raises(DimensionMismatchError):
            RetrievalDatabase(
                [_example("x", LinkLabel.VALID), _example("y", LinkLabel.INVALID)],
                [_vec(1, 0), _vec(1, 0, 0)],
            )

    def test_copy_on_append(self):
        db = RetrievalDatabase([_example("x", LinkLabel.VALID)], [_vec(1, 0)])
        bigger = db.with_appended([_example("y", LinkLabel.INVALID)], [_vec(0, 1)])
        assert len(db) == 1 and len(bigger) == 2


class CountingEmbedder:
    provider_id = "counting"
    dimension = 4

    def __init__(self):
        self.calls = 0

    def embed(self, text):
        self.calls += 1
        return EmbeddingVector((1.0, 0.0, 0.0, float(len(text))))


class TestEmbeddingCache:
    def test_cache_avoids_recompute(self):
        inner = CountingEmbedder()
        embedder = CachingEmbedder(inner)
        first = embedder.embed("same text")
        second = embedder.embed("same text")
        assert first == second
        assert inner.calls == 1

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        cache = EmbeddingCache(path)
        cache.put("lexical", "hello", (0.5, 0.5))
        reloaded = EmbeddingCache(path)
        assert reloaded.get("lexical", "hello") == (0.5, 0.5)
        assert reloaded.get("other", "hello") is None
