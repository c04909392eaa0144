"""Two-stage skeleton-guided dialogue synthesis.

Stage one turns an (intent, topic) scenario into a full ordered set of user
queries in a single completion, with the intent's information flow embedded
in the prompt so the turns progress instead of drifting. Stage two feeds the
finished query list back and asks for *all* responses in one pass, letting
each answer account for the questions still to come.

Both stages validate the completion's JSON shape strictly and regenerate on
failure (same prompt, re-derived sampling seed) up to a repair budget.
"""

from __future__ import annotations

import datetime as _dt
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .backends import ChatBackend, ChatMessage, GenerationParams
from .errors import CorpusSynthesisError, ExtractionError, RepairExhaustedError
from .hashing import content_id, derive_seed, sha256_hex
from .jsonextract import extract_json_object
from .taxonomy import IntentCategory, ScenarioSeed, Taxonomy, generate_scenarios, render_flow_steps
from .templates import PromptTemplate, load_template

DEFAULT_MIN_TURNS = 6
DEFAULT_MAX_TURNS = 8
DEFAULT_REPAIR_BUDGET = 3
DEFAULT_FAILURE_THRESHOLD = 0.2


@dataclass(frozen=True)
class QuerySet:
    """Ordered user queries for one scenario, before any responses exist."""

    scenario: ScenarioSeed
    category: str
    turns: tuple[str, ...]
    prompt_sha256: str = ""


@dataclass
class Dialogue:
    """Aligned query/response turns plus provenance; the unit of the exported corpus."""

    id: str
    intent_id: str
    topic: str
    turns: tuple[tuple[str, str], ...]  # (query, response) pairs
    meta: dict = field(default_factory=dict)

    @property
    def queries(self) -> list[str]:
        return [q for q, _ in self.turns]

    @property
    def responses(self) -> list[str]:
        return [r for _, r in self.turns]


@dataclass
class RepairReport:
    """What happened while coercing a completion into the required shape."""

    raw: str
    extracted: str
    attempts: int  # regenerations consumed, 0 when the first completion was valid
    outcome: str  # "parsed" | "failed"


def dialogue_to_dict(dialogue: Dialogue) -> dict:
    return {
        "id": dialogue.id,
        "intent_id": dialogue.intent_id,
        "topic": dialogue.topic,
        "turns": [{"query": q, "response": r} for q, r in dialogue.turns],
        "meta": dialogue.meta,
    }


def dialogue_from_dict(data: dict) -> Dialogue:
    turns = tuple((t["query"], t["response"]) for t in data["turns"])
    return Dialogue(
        id=data["id"],
        intent_id=data.get("intent_id", ""),
        topic=data.get("topic", ""),
        turns=turns,
        meta=dict(data.get("meta", {})),
    )


def build_query_prompt(intent: IntentCategory, topic: str, template: PromptTemplate | None = None) -> str:
    if not topic.strip():
        raise ValueError("topic must be non-empty")
    template = template or load_template("query_gen")
    return template.render({"INFO_FLOWS_STEPS": render_flow_steps(intent), "CONTENT": topic.strip()})


def build_response_prompt(query_set: QuerySet, template: PromptTemplate | None = None) -> str:
    template = template or load_template("response_gen")
    content = json.dumps(
        {"topic": query_set.scenario.topic, "turns": list(query_set.turns)},
        ensure_ascii=False,
    )
    return template.render({"CONTENT": content})


class _ShapeError(ValueError):
    """Completion parsed but does not meet the required shape."""


def _clean_turns(raw: object, where: str) -> list[str]:
    if not isinstance(raw, list):
        raise _ShapeError(f"{where}: 'turns' must be a list")
    turns = []
    for i, turn in enumerate(raw):
        if not isinstance(turn, str) or not turn.strip():
            raise _ShapeError(f"{where}: turn #{i + 1} is empty or not a string")
        turns.append(turn.strip())
    return turns


def _validate_query_payload(payload: dict, min_turns: int, max_turns: int) -> tuple[str, list[str]]:
    category = payload.get("category")
    if not isinstance(category, str) or not category.strip():
        raise _ShapeError("query payload: missing or empty 'category'")
    turns = _clean_turns(payload.get("turns"), "query payload")
    if not min_turns <= len(turns) <= max_turns:
        raise _ShapeError(f"query payload: expected {min_turns}-{max_turns} turns, got {len(turns)}")
    return category.strip(), turns


def _validate_response_payload(payload: dict, expected: int) -> list[str]:
    turns = _clean_turns(payload.get("turns"), "response payload")
    if len(turns) != expected:
        raise _ShapeError(f"response payload: expected exactly {expected} responses, got {len(turns)}")
    return turns


def _generate_validated(
    prompt: str,
    backend: ChatBackend,
    params: GenerationParams,
    base_seed: int,
    validate,
    repair_budget: int,
):
    """Call, extract, validate; regenerate with a re-derived seed on failure."""
    messages = [ChatMessage("user", prompt)]
    raw, extracted = "", ""
    last_error: Exception | None = None
    for regen in range(repair_budget + 1):
        seed = base_seed if regen == 0 else derive_seed(base_seed, "repair", regen)
        result = backend.complete_chat(messages, params.with_seed(seed))
        raw = result.text
        try:
            payload, extracted = extract_json_object(raw)
            value = validate(payload)
        except (_ShapeError, ExtractionError) as exc:
            last_error = exc
            continue
        return value, RepairReport(raw=raw, extracted=extracted, attempts=regen, outcome="parsed")
    report = RepairReport(raw=raw, extracted=extracted, attempts=repair_budget, outcome="failed")
    raise RepairExhaustedError(
        f"output still invalid after {repair_budget} regeneration(s): {last_error}", report=report
    )


def generate_query_set(
    scenario: ScenarioSeed,
    intent: IntentCategory,
    backend: ChatBackend,
    params: GenerationParams | None = None,
    *,
    template: PromptTemplate | None = None,
    min_turns: int = DEFAULT_MIN_TURNS,
    max_turns: int = DEFAULT_MAX_TURNS,
    repair_budget: int = DEFAULT_REPAIR_BUDGET,
) -> tuple[QuerySet, RepairReport]:
    if scenario.intent_id != intent.id:
        raise ValueError(f"scenario intent {scenario.intent_id!r} does not match category {intent.id!r}")
    params = params or GenerationParams()
    prompt = build_query_prompt(intent, scenario.topic, template)
    base_seed = params.seed if params.seed is not None else scenario.seed
    (category, turns), report = _generate_validated(
        prompt,
        backend,
        params,
        base_seed,
        lambda payload: _validate_query_payload(payload, min_turns, max_turns),
        repair_budget,
    )
    query_set = QuerySet(
        scenario=scenario, category=category, turns=tuple(turns), prompt_sha256=sha256_hex(prompt)
    )
    return query_set, report


def generate_responses(
    query_set: QuerySet,
    backend: ChatBackend,
    params: GenerationParams | None = None,
    *,
    template: PromptTemplate | None = None,
    repair_budget: int = DEFAULT_REPAIR_BUDGET,
) -> tuple[Dialogue, RepairReport]:
    params = params or GenerationParams()
    prompt = build_response_prompt(query_set, template)
    base_seed = params.seed if params.seed is not None else derive_seed(query_set.scenario.seed, "responses")
    responses, report = _generate_validated(
        prompt,
        backend,
        params,
        base_seed,
        lambda payload: _validate_response_payload(payload, len(query_set.turns)),
        repair_budget,
    )
    scenario = query_set.scenario
    turns = tuple(zip(query_set.turns, responses))
    meta = {
        "model": params.model or getattr(backend, "model", ""),
        "temperature": params.temperature,
        "seed": base_seed,
        "query_prompt_sha256": query_set.prompt_sha256,
        "response_prompt_sha256": sha256_hex(prompt),
    }
    # wall-clock provenance would break byte-identical re-runs of seeded
    # offline pipelines, so only live backends record it
    if not getattr(backend, "deterministic", False):
        meta["created_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    dialogue = Dialogue(
        id=content_id(scenario.intent_id, scenario.topic, base_seed, *query_set.turns, *responses),
        intent_id=scenario.intent_id,
        topic=scenario.topic,
        turns=turns,
        meta=meta,
    )
    return dialogue, report


@dataclass
class CorpusReport:
    dialogues: list[Dialogue]
    planned: int
    failures: list[tuple[str, str]]  # (job key, reason)
    duplicates: int

    @property
    def failure_ratio(self) -> float:
        return len(self.failures) / self.planned if self.planned else 0.0


def synthesize_corpus(
    taxonomy: Taxonomy,
    scenarios_per_intent: int,
    dialogues_per_scenario: int,
    backend: ChatBackend,
    params: GenerationParams | None = None,
    *,
    seed: int = 0,
    intent_ids: Sequence[str] | None = None,
    topics_file: str | None = None,
    min_turns: int = DEFAULT_MIN_TURNS,
    max_turns: int = DEFAULT_MAX_TURNS,
    repair_budget: int = DEFAULT_REPAIR_BUDGET,
    failure_threshold: float = DEFAULT_FAILURE_THRESHOLD,
    fail_fast: bool = False,
    workers: int = 1,
    query_template: PromptTemplate | None = None,
    response_template: PromptTemplate | None = None,
) -> CorpusReport:
    """Emit an intent-stratified corpus of dialogues.

    Each scenario is sampled `dialogues_per_scenario` times with distinct
    derived seeds; samples that come back with identical turn texts are
    dropped as duplicates and counted. Per-dialogue failures are skipped
    unless fail_fast, and an aggregate error is raised when the failure
    ratio exceeds `failure_threshold`. Output order is deterministic given
    input order and seeds.
    """
    if scenarios_per_intent < 1 or dialogues_per_scenario < 1:
        raise ValueError("scenario and dialogue counts must be >= 1")
    categories = list(taxonomy.categories)
    if intent_ids is not None:
        categories = [taxonomy.get(intent_id) for intent_id in intent_ids]

    jobs: list[tuple[IntentCategory, ScenarioSeed, int]] = []
    for intent in categories:
        if topics_file is not None:
            from .taxonomy import scenarios_from_file

            scenarios = scenarios_from_file(intent, topics_file, derive_seed(seed, intent.id), scenarios_per_intent)
        else:
            scenarios = generate_scenarios(
                intent, scenarios_per_intent, derive_seed(seed, intent.id), backend, params
            )
        for scenario in scenarios:
            for k in range(dialogues_per_scenario):
                jobs.append((intent, scenario, k))

    def run_job(job: tuple[IntentCategory, ScenarioSeed, int]) -> Dialogue:
        intent, scenario, k = job
        sample_params = (params or GenerationParams()).with_seed(derive_seed(scenario.seed, "sample", k))
        query_set, _ = generate_query_set(
            scenario,
            intent,
            backend,
            sample_params,
            template=query_template,
            min_turns=min_turns,
            max_turns=max_turns,
            repair_budget=repair_budget,
        )
        dialogue, _ = generate_responses(
            query_set,
            backend,
            sample_params,
            template=response_template,
            repair_budget=repair_budget,
        )
        return dialogue

    outcomes: list[tuple[Dialogue | None, Exception | None]]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_job, job) for job in jobs]
            outcomes = []
            for future in futures:
                try:
                    outcomes.append((future.result(), None))
                except Exception as exc:  # noqa: BLE001 - recorded per job
                    outcomes.append((None, exc))
    else:
        outcomes = []
        for job in jobs:
            try:
                outcomes.append((run_job(job), None))
            except Exception as exc:  # noqa: BLE001 - recorded per job
                outcomes.append((None, exc))

    dialogues: list[Dialogue] = []
    seen_content: set[str] = set()
    duplicates = 0
    failures: list[tuple[str, str]] = []
    for (intent, scenario, k), (dialogue, error) in zip(jobs, outcomes):
        key = f"{intent.id}/{scenario.topic}#{k}"
        if error is not None:
            if fail_fast:
                raise error
            failures.append((key, str(error)))
            continue
        assert dialogue is not None
        # ids fold in the sampling seed, so dedupe on content alone: two
        # samples that produced the same turn texts are one dialogue
        content_key = content_id(dialogue.intent_id, dialogue.topic, *dialogue.queries, *dialogue.responses)
        if content_key in seen_content:
            duplicates += 1
            continue
        seen_content.add(content_key)
        dialogues.append(dialogue)

    report = CorpusReport(dialogues=dialogues, planned=len(jobs), failures=failures, duplicates=duplicates)
    if report.failure_ratio > failure_threshold:
        raise CorpusSynthesisError(
            f"{len(failures)}/{len(jobs)} dialogue jobs failed "
            f"(ratio {report.failure_ratio:.0%} > threshold {failure_threshold:.0%}); "
            f"failed: {', '.join(k for k, _ in failures[:20])}",
            failures=failures,
        )
    return report
