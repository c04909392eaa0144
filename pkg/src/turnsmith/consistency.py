"""Chat-consistency metric over user queries, and consistency-based partitioning.

A conversation's consistency is the mean cosine similarity over all unordered
pairs of its query embeddings (an adjacent-pairs variant is available for
comparison experiments). Corpus-level consistency is the unweighted mean of
per-dialogue values. Partitioning splits a scored corpus into top-k / bottom-k /
seeded-random-k id sets.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .backends import EmbeddingBackend, EmbeddingVector
from .errors import ConsistencyError
from .synthesis import Dialogue

MODES = ("all_pairs", "adjacent")


@dataclass(frozen=True)
class ConsistencyScore:
    dialogue_id: str
    value: float
    n_queries: int
    embed_model: str


@dataclass(frozen=True)
class CorpusPartition:
    high: tuple[str, ...]
    low: tuple[str, ...]
    random: tuple[str, ...]
    k: int
    seed: int


@dataclass
class CorpusConsistency:
    scores: list[ConsistencyScore]
    mean: float
    scored: int
    skipped: int


def _as_array(vector) -> np.ndarray:
    if isinstance(vector, EmbeddingVector):
        return vector.values
    return np.asarray(vector, dtype=np.float64)


def cosine(u, v) -> float:
    """dot(u, v) / (|u| |v|), clamped into [-1, 1] against rounding."""
    a, b = _as_array(u), _as_array(v)
    if a.shape != b.shape:
        raise ConsistencyError(f"dimension mismatch: {a.shape} vs {b.shape}")
    norm_a, norm_b = np.linalg.norm(a), np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        raise ConsistencyError("cosine undefined for zero-norm vectors")
    return float(np.clip(np.dot(a, b) / (norm_a * norm_b), -1.0, 1.0))


def _pairwise_mean(matrix: np.ndarray, mode: str) -> float:
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0):
        raise ConsistencyError("cosine undefined for zero-norm vectors")
    unit = matrix / norms[:, None]
    n = unit.shape[0]
    if mode == "adjacent":
        sims = np.sum(unit[:-1] * unit[1:], axis=1)
        return float(np.clip(sims, -1.0, 1.0).mean())
    gram = np.clip(unit @ unit.T, -1.0, 1.0)
    upper = gram[np.triu_indices(n, k=1)]
    return float(upper.mean())


def conversation_consistency(
    queries: Sequence[str],
    embedder: EmbeddingBackend,
    *,
    dialogue_id: str = "",
    mode: str = "all_pairs",
) -> ConsistencyScore | None:
    """Mean pairwise similarity of the query embeddings.

    Returns None for conversations with fewer than two queries: they are not
    scorable, which is distinct from a scoring failure.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if len(queries) < 2:
        return None
    vectors = embedder.embed_texts(list(queries))
    matrix = np.stack([v.values for v in vectors])
    value = _pairwise_mean(matrix, mode)
    return ConsistencyScore(
        dialogue_id=dialogue_id,
        value=value,
        n_queries=len(queries),
        embed_model=vectors[0].model,
    )


def corpus_consistency(
    corpus: Sequence[Dialogue],
    embedder: EmbeddingBackend,
    *,
    mode: str = "all_pairs",
) -> CorpusConsistency:
    """Score every dialogue; the corpus mean is unweighted over scorable dialogues."""
    if not corpus:
        raise ConsistencyError("corpus is empty")
    # one embedding call for the whole corpus; the backend batches internally
    spans: list[tuple[Dialogue, int, int]] = []
    texts: list[str] = []
    skipped = 0
    for dialogue in corpus:
        queries = dialogue.queries
        if len(queries) < 2:
            skipped += 1
            continue
        spans.append((dialogue, len(texts), len(texts) + len(queries)))
        texts.extend(queries)
    if not spans:
        raise ConsistencyError("no dialogue has the two or more queries needed for scoring")
    vectors = embedder.embed_texts(texts)
    model = vectors[0].model
    scores = []
    for dialogue, start, end in spans:
        matrix = np.stack([v.values for v in vectors[start:end]])
        scores.append(
            ConsistencyScore(
                dialogue_id=dialogue.id,
                value=_pairwise_mean(matrix, mode),
                n_queries=end - start,
                embed_model=model,
            )
        )
    mean = float(np.mean([s.value for s in scores]))
    return CorpusConsistency(scores=scores, mean=mean, scored=len(scores), skipped=skipped)


def partition_by_consistency(scores: Sequence[ConsistencyScore], k: int, seed: int) -> CorpusPartition:
    """Top-k / bottom-k / random-k dialogue ids from a scored corpus.

    One ascending sort keyed on (value, id) supplies both ends, so high and
    low are disjoint whenever the corpus holds at least 2k scorable dialogues;
    ties break on dialogue id. The random sample is drawn from the full
    scored corpus with the recorded seed.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(scores) < 2 * k:
        raise ConsistencyError(f"need at least {2 * k} scorable dialogues for k={k}, have {len(scores)}")
    ordered = sorted(scores, key=lambda s: (s.value, s.dialogue_id))
    low = tuple(s.dialogue_id for s in ordered[:k])
    high = tuple(s.dialogue_id for s in reversed(ordered[-k:]))
    all_ids = sorted(s.dialogue_id for s in scores)
    sample = tuple(random.Random(seed).sample(all_ids, k))
    return CorpusPartition(high=high, low=low, random=sample, k=k, seed=seed)


def write_scores_jsonl(result: CorpusConsistency, path: str | Path) -> Path:
    """One record per dialogue plus a trailing summary record."""
    path = Path(path)
    lines = [
        json.dumps(
            {"id": s.dialogue_id, "value": s.value, "n_queries": s.n_queries, "embed_model": s.embed_model},
            ensure_ascii=False,
            sort_keys=True,
        )
        for s in result.scores
    ]
    lines.append(
        json.dumps(
            {"summary": True, "mean": result.mean, "scored": result.scored, "skipped": result.skipped},
            ensure_ascii=False,
            sort_keys=True,
        )
    )
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", "utf-8")
    tmp.replace(path)
    return path


def read_scores_jsonl(path: str | Path) -> list[ConsistencyScore]:
    scores = []
    for line in Path(path).read_text("utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        if record.get("summary"):
            continue
        scores.append(
            ConsistencyScore(
                dialogue_id=record["id"],
                value=float(record["value"]),
                n_queries=int(record["n_queries"]),
                embed_model=record.get("embed_model", ""),
            )
        )
    return scores
