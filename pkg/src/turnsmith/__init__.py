"""Skeleton-guided multi-turn dialogue synthesis, consistency scoring, and judge harnesses."""

from .backends import (
    ChatMessage,
    ChatResult,
    EmbeddingVector,
    GenerationParams,
    HttpChatBackend,
    HttpEmbeddingBackend,
    MockBackend,
    ScriptedChatBackend,
)
from .consistency import (
    ConsistencyScore,
    CorpusPartition,
    conversation_consistency,
    corpus_consistency,
    cosine,
    partition_by_consistency,
)
from .judging import (
    JudgeVerdict,
    LightRecord,
    TopdialRecord,
    aggregate_verdicts,
    collect_responses,
    judge_response,
    parse_score,
    render_agent_prompt,
)
from .mteval import MtDialogue, MtTask, per_turn_curve, run_mt, run_st, segment_summary, summarize
from .synthesis import (
    Dialogue,
    QuerySet,
    build_query_prompt,
    build_response_prompt,
    generate_query_set,
    generate_responses,
    synthesize_corpus,
)
from .taxonomy import IntentCategory, ScenarioSeed, Taxonomy, generate_scenarios, load_taxonomy, render_flow_steps

__version__ = "0.1.0"

__all__ = [
    "ChatMessage",
    "ChatResult",
    "ConsistencyScore",
    "CorpusPartition",
    "Dialogue",
    "EmbeddingVector",
    "GenerationParams",
    "HttpChatBackend",
    "HttpEmbeddingBackend",
    "IntentCategory",
    "JudgeVerdict",
    "LightRecord",
    "MockBackend",
    "MtDialogue",
    "MtTask",
    "QuerySet",
    "ScenarioSeed",
    "ScriptedChatBackend",
    "Taxonomy",
    "TopdialRecord",
    "aggregate_verdicts",
    "build_query_prompt",
    "build_response_prompt",
    "collect_responses",
    "conversation_consistency",
    "corpus_consistency",
    "cosine",
    "generate_query_set",
    "generate_responses",
    "generate_scenarios",
    "judge_response",
    "load_taxonomy",
    "parse_score",
    "partition_by_consistency",
    "per_turn_curve",
    "render_agent_prompt",
    "render_flow_steps",
    "run_mt",
    "run_st",
    "segment_summary",
    "summarize",
    "synthesize_corpus",
]
