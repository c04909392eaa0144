"""Consistency metric vs. a brute-force oracle, and partition behavior."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from turnsmith.backends import MockBackend, StubEmbeddingBackend
from turnsmith.consistency import (
    ConsistencyScore,
    conversation_consistency,
    corpus_consistency,
    cosine,
    partition_by_consistency,
    read_scores_jsonl,
    write_scores_jsonl,
)
from turnsmith.errors import ConsistencyError
from turnsmith.synthesis import Dialogue

SQ2 = 1.0 / math.sqrt(2.0)


def _brute_force_all_pairs(vectors) -> float:
    """Independent oracle: plain double loop, no numpy."""
    sims = []
    for i in range(len(vectors)):
        for j in range(i + 1, len(vectors)):
            u, v = vectors[i], vectors[j]
            dot = sum(a * b for a, b in zip(u, v))
            nu = math.sqrt(sum(a * a for a in u))
            nv = math.sqrt(sum(b * b for b in v))
            sims.append(dot / (nu * nv))
    return sum(sims) / len(sims)


def _dialogue(dialogue_id: str, queries: list[str]) -> Dialogue:
    return Dialogue(
        id=dialogue_id,
        intent_id="i",
        topic="t",
        turns=tuple((q, f"answer to {q}") for q in queries),
    )


# --- cosine -------------------------------------------------------------------


def test_cosine_identity():
    assert cosine([3.0, 4.0], [3.0, 4.0]) == pytest.approx(1.0, abs=1e-12)


def test_cosine_orthogonal():
    assert cosine([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0, abs=1e-12)


def test_cosine_45_degrees():
    # oracle: dot = 1/sqrt(2), norms 1 and 1 -> exactly sqrt(2)/2
    value = cosine([1.0, 0.0], [SQ2, SQ2])
    assert value == pytest.approx(math.sqrt(2.0) / 2.0, abs=1e-9)
    assert f"{value:.8f}" == "0.70710678"


def test_cosine_dim_mismatch_and_zero_norm():
    with pytest.raises(ConsistencyError, match="dimension"):
        cosine([1.0, 0.0], [1.0, 0.0, 0.0])
    with pytest.raises(ConsistencyError, match="zero-norm"):
        cosine([0.0, 0.0], [1.0, 0.0])


def test_cosine_symmetry_and_bound_on_random_vectors():
    rng = np.random.default_rng(7)
    for _ in range(50):
        dim = int(rng.integers(2, 16))
        u, v = rng.normal(size=dim), rng.normal(size=dim)
        assert cosine(u, v) == pytest.approx(cosine(v, u), abs=1e-12)
        assert -1.0 <= cosine(u, v) <= 1.0


# --- conversation consistency ----------------------------------------------------


def test_three_query_derived_value():
    embedder = StubEmbeddingBackend({"a": [1.0, 0.0], "b": [0.0, 1.0], "c": [SQ2, SQ2]})
    score = conversation_consistency(["a", "b", "c"], embedder, dialogue_id="d1")
    assert score is not None
    assert score.value == pytest.approx(0.47140452, abs=1e-9)
    assert score.n_queries == 3
    assert score.embed_model == "stub-embed"


def test_identical_queries_score_one():
    embedder = MockBackend(seed=2)
    score = conversation_consistency(["same line", "same line", "same line"], embedder)
    assert score is not None
    assert score.value == pytest.approx(1.0, abs=1e-9)


def test_single_query_not_scorable():
    assert conversation_consistency(["only one"], MockBackend(seed=2)) is None


def test_matches_brute_force_on_200_random_dialogues():
    rng = np.random.default_rng(42)
    for case in range(200):
        dim = int(rng.integers(2, 65))
        n = int(rng.integers(2, 9))
        vectors = rng.normal(size=(n, dim))
        texts = [f"case {case} query {i}" for i in range(n)]
        embedder = StubEmbeddingBackend({t: vectors[i].tolist() for i, t in enumerate(texts)})
        score = conversation_consistency(texts, embedder)
        assert score is not None
        assert score.value == pytest.approx(_brute_force_all_pairs(vectors.tolist()), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.randoms(use_true_random=False))
def test_permutation_invariance(rnd):
    texts = [f"query number {i}" for i in range(5)]
    embedder = MockBackend(seed=11)
    base = conversation_consistency(texts, embedder).value
    shuffled = texts[:]
    rnd.shuffle(shuffled)
    assert conversation_consistency(shuffled, embedder).value == pytest.approx(base, abs=1e-9)


def test_adjacent_mode_differs_from_all_pairs():
    embedder = StubEmbeddingBackend({"a": [1.0, 0.0], "b": [0.0, 1.0], "c": [1.0, 0.0]})
    all_pairs = conversation_consistency(["a", "b", "c"], embedder).value
    adjacent = conversation_consistency(["a", "b", "c"], embedder, mode="adjacent").value
    assert all_pairs == pytest.approx(1.0 / 3.0, abs=1e-9)
    assert adjacent == pytest.approx(0.0, abs=1e-9)


# --- corpus -------------------------------------------------------------------


def test_corpus_mean_and_skip_counting():
    embedder = StubEmbeddingBackend(
        {
            "a1": [1.0, 0.0], "a2": [0.4, math.sqrt(1 - 0.16)],
            "b1": [1.0, 0.0], "b2": [0.6, 0.8],
        }
    )
    corpus = [_dialogue("da", ["a1", "a2"]), _dialogue("db", ["b1", "b2"]), _dialogue("dc", ["solo"])]
    corpus[2].turns = (("solo", "r"),)
    result = corpus_consistency(corpus, embedder)
    assert result.scored == 2
    assert result.skipped == 1
    assert result.mean == pytest.approx(0.5, abs=1e-9)
    values = {s.dialogue_id: s.value for s in result.scores}
    assert values["da"] == pytest.approx(0.4, abs=1e-9)
    assert values["db"] == pytest.approx(0.6, abs=1e-9)


def test_repeated_sentence_corpus_scores_mean_one():
    corpus = [_dialogue(f"d{i}", ["repeat me"] * 4) for i in range(5)]
    result = corpus_consistency(corpus, MockBackend(seed=3))
    assert result.mean == pytest.approx(1.0, abs=1e-9)


def test_corpus_with_no_scorable_dialogues_errors():
    corpus = [_dialogue("d0", ["one"])]
    corpus[0].turns = (("one", "r"),)
    with pytest.raises(ConsistencyError, match="two or more queries"):
        corpus_consistency(corpus, MockBackend(seed=3))


def test_scores_jsonl_round_trip(tmp_path):
    embedder = MockBackend(seed=4)
    corpus = [_dialogue(f"d{i}", [f"q{i}a", f"q{i}b"]) for i in range(3)]
    result = corpus_consistency(corpus, embedder)
    path = write_scores_jsonl(result, tmp_path / "scores.jsonl")
    lines = path.read_text().splitlines()
    assert len(lines) == 4
    summary = json.loads(lines[-1])
    assert summary["summary"] is True and summary["scored"] == 3
    reloaded = read_scores_jsonl(path)
    assert [s.dialogue_id for s in reloaded] == ["d0", "d1", "d2"]
    assert reloaded[0].value == pytest.approx(result.scores[0].value)


# --- partitioning ----------------------------------------------------------------


def _scores(values: dict[str, float]) -> list[ConsistencyScore]:
    return [ConsistencyScore(dialogue_id=k, value=v, n_queries=3, embed_model="stub") for k, v in values.items()]


def test_partition_top_and_bottom_by_sort_oracle():
    scores = _scores({f"id{i}": round(0.1 * i, 1) for i in range(1, 11)})  # 0.1 .. 1.0
    partition = partition_by_consistency(scores, 3, seed=1)
    assert set(partition.high) == {"id10", "id9", "id8"}
    assert partition.high[0] == "id10"
    assert set(partition.low) == {"id1", "id2", "id3"}
    assert partition.low[0] == "id1"
    assert len(partition.random) == 3


def test_partition_random_is_seed_deterministic():
    scores = _scores({f"id{i}": 0.01 * i for i in range(20)})
    a = partition_by_consistency(scores, 3, seed=7)
    b = partition_by_consistency(scores, 3, seed=7)
    c = partition_by_consistency(scores, 3, seed=8)
    assert a.random == b.random
    assert a.random != c.random or a.seed != c.seed


def test_partition_insufficient_corpus():
    scores = _scores({f"id{i}": 0.1 * i for i in range(5)})
    with pytest.raises(ConsistencyError, match="at least 6"):
        partition_by_consistency(scores, 3, seed=1)


def test_partition_high_and_low_disjoint_even_with_ties():
    scores = _scores({f"id{i}": 0.5 for i in range(6)})
    partition = partition_by_consistency(scores, 3, seed=1)
    assert not set(partition.high) & set(partition.low)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(min_value=-1.0, max_value=1.0, allow_nan=False), min_size=4, max_size=24),
    st.integers(min_value=1, max_value=3),
)
def test_partition_mean_high_geq_mean_low(values, k):
    if len(values) < 2 * k:
        return
    scores = _scores({f"id{i:03d}": v for i, v in enumerate(values)})
    partition = partition_by_consistency(scores, k, seed=0)
    by_id = {s.dialogue_id: s.value for s in scores}
    mean_high = sum(by_id[i] for i in partition.high) / k
    mean_low = sum(by_id[i] for i in partition.low) / k
    assert mean_high >= mean_low
    if len(set(values)) > 1 and mean_high == mean_low:
        # equality is only allowed when every selected score ties
        assert len({by_id[i] for i in partition.high + partition.low}) == 1
