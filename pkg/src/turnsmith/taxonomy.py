"""Conversational intent taxonomy and scenario seeding.

A taxonomy is an ordered set of intent categories, each with an ordered
information flow that tells the query generator how a conversation of that
kind should progress. The built-in default ships as a data file and can be
replaced wholesale by a user-supplied YAML/JSON file with the same schema.

Taxonomy values are immutable after load and safe to share across workers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING

import yaml

from .errors import BackendError, TaxonomyError
from .hashing import derive_seed
from .jsonextract import extract_json_object

if TYPE_CHECKING:
    from .backends import ChatBackend, GenerationParams

BUILTIN_CATEGORY_COUNT = 9

_SLUG_RE = re.compile(r"^[a-z0-9]+(-[a-z0-9]+)*$")


@dataclass(frozen=True)
class FlowStep:
    """One stage of an intent's information flow. Indexes are 1-based and contiguous."""

    index: int
    instruction: str


@dataclass(frozen=True)
class IntentCategory:
    id: str
    name: str
    description: str
    flow: tuple[FlowStep, ...]
    reconstructed: bool = False


@dataclass(frozen=True)
class Taxonomy:
    categories: tuple[IntentCategory, ...]
    source: str = "builtin"

    def ids(self) -> list[str]:
        return [c.id for c in self.categories]

    def get(self, intent_id: str) -> IntentCategory:
        for category in self.categories:
            if category.id == intent_id:
                return category
        raise TaxonomyError(f"unknown intent id {intent_id!r} (known: {', '.join(self.ids())})")


@dataclass(frozen=True)
class ScenarioSeed:
    """A concrete conversation topic under one intent, with its own RNG seed."""

    intent_id: str
    topic: str
    seed: int

    def __post_init__(self):
        if not self.topic.strip():
            raise TaxonomyError("scenario topic must be non-empty")


def _parse_category(raw: object, position: int) -> IntentCategory:
    where = f"category #{position + 1}"
    if not isinstance(raw, dict):
        raise TaxonomyError(f"{where}: expected a mapping, got {type(raw).__name__}")
    cid = raw.get("id")
    if not isinstance(cid, str) or not cid.strip():
        raise TaxonomyError(f"{where}: missing or empty 'id'")
    where = f"category {cid!r}"
    if not _SLUG_RE.match(cid):
        raise TaxonomyError(f"{where}: id must be a lowercase hyphenated slug")
    name = raw.get("name")
    if not isinstance(name, str) or not name.strip():
        raise TaxonomyError(f"{where}: missing or empty 'name'")
    description = raw.get("description", "")
    if not isinstance(description, str):
        raise TaxonomyError(f"{where}: 'description' must be a string")
    flow_raw = raw.get("flow")
    if not isinstance(flow_raw, list) or not flow_raw:
        raise TaxonomyError(f"{where}: 'flow' must be a non-empty list")
    steps = []
    for i, instruction in enumerate(flow_raw):
        if not isinstance(instruction, str) or not instruction.strip():
            raise TaxonomyError(f"{where}: flow step #{i + 1} must be a non-empty string")
        steps.append(FlowStep(index=i + 1, instruction=instruction.strip()))
    return IntentCategory(
        id=cid,
        name=name.strip(),
        description=description.strip(),
        flow=tuple(steps),
        reconstructed=bool(raw.get("reconstructed", False)),
    )


def _parse_taxonomy(data: object, source: str) -> Taxonomy:
    if not isinstance(data, dict) or "categories" not in data:
        raise TaxonomyError(f"{source}: top level must be a mapping with a 'categories' list")
    raw_categories = data["categories"]
    if not isinstance(raw_categories, list) or not raw_categories:
        raise TaxonomyError(f"{source}: 'categories' must be a non-empty list")
    categories = [_parse_category(raw, i) for i, raw in enumerate(raw_categories)]
    seen: set[str] = set()
    for category in categories:
        if category.id in seen:
            raise TaxonomyError(f"{source}: duplicate category id {category.id!r}")
        seen.add(category.id)
    return Taxonomy(categories=tuple(categories), source=source)


def load_taxonomy(path: str | Path | None = None) -> Taxonomy:
    """Load a taxonomy file, or the built-in nine-category default when no path is given."""
    if path is None:
        text = resources.files("turnsmith").joinpath("data/intents.yaml").read_text("utf-8")
        taxonomy = _parse_taxonomy(yaml.safe_load(text), "builtin")
        if len(taxonomy.categories) != BUILTIN_CATEGORY_COUNT:
            raise TaxonomyError(
                f"builtin taxonomy must have {BUILTIN_CATEGORY_COUNT} categories, "
                f"found {len(taxonomy.categories)}"
            )
        return taxonomy
    path = Path(path)
    if not path.exists():
        raise TaxonomyError(f"taxonomy file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text("utf-8"))
    except yaml.YAMLError as exc:
        raise TaxonomyError(f"{path}: not valid YAML/JSON: {exc}") from exc
    return _parse_taxonomy(data, str(path))


def taxonomy_to_dict(taxonomy: Taxonomy) -> dict:
    return {
        "categories": [
            {
                "id": c.id,
                "name": c.name,
                "description": c.description,
                "reconstructed": c.reconstructed,
                "flow": [step.instruction for step in c.flow],
            }
            for c in taxonomy.categories
        ]
    }


def save_taxonomy(taxonomy: Taxonomy, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(yaml.safe_dump(taxonomy_to_dict(taxonomy), sort_keys=False, allow_unicode=True), "utf-8")
    return path


def render_flow_steps(intent: IntentCategory) -> str:
    """Numbered-list rendering of an intent's flow; byte-stable for equal inputs."""
    return "\n".join(f"{step.index}. {step.instruction}" for step in intent.flow)


@dataclass
class _TopicPool:
    """Case-insensitive ordered set of scenario topics."""

    topics: list[str] = field(default_factory=list)
    _seen: set[str] = field(default_factory=set)

    def add(self, topic: str) -> bool:
        key = topic.strip().lower()
        if not key or key in self._seen:
            return False
        self._seen.add(key)
        self.topics.append(topic.strip())
        return True


def generate_scenarios(
    intent: IntentCategory,
    count: int,
    seed: int,
    backend: "ChatBackend",
    params: "GenerationParams | None" = None,
    *,
    retry_budget: int = 5,
    template=None,
) -> list[ScenarioSeed]:
    """Ask the chat backend for `count` distinct scenario topics under `intent`.

    Topics are deduplicated case-insensitively; short batches trigger
    re-prompts (with a re-derived sampling seed) until the retry budget is
    exhausted. Each returned scenario carries a per-scenario seed derived
    from (seed, intent id, position), so downstream sampling is reproducible.
    """
    from .backends import ChatMessage, GenerationParams
    from .templates import load_template

    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    template = template or load_template("scenario_gen")
    params = params or GenerationParams(temperature=0.9)

    pool = _TopicPool()
    prompt = template.render(
        {
            "COUNT": str(count),
            "INTENT_NAME": intent.name,
            "INTENT_DESCRIPTION": intent.description or intent.name,
        }
    )
    last_error: Exception | None = None
    for attempt in range(retry_budget):
        attempt_params = params.with_seed(derive_seed(seed, intent.id, "scenarios", attempt))
        try:
            result = backend.complete_chat([ChatMessage("user", prompt)], attempt_params)
            payload, _ = extract_json_object(result.text)
        except BackendError:
            raise
        except Exception as exc:  # malformed payload: try again within budget
            last_error = exc
            continue
        topics = payload.get("topics")
        if not isinstance(topics, list):
            last_error = TaxonomyError("scenario payload missing 'topics' list")
            continue
        for topic in topics:
            if isinstance(topic, str):
                pool.add(topic)
        if len(pool.topics) >= count:
            break
    if len(pool.topics) < count:
        detail = f" (last error: {last_error})" if last_error else ""
        raise TaxonomyError(
            f"could not collect {count} distinct topics for {intent.id!r} "
            f"within {retry_budget} attempts, got {len(pool.topics)}{detail}"
        )
    return [
        ScenarioSeed(intent_id=intent.id, topic=topic, seed=derive_seed(seed, intent.id, i))
        for i, topic in enumerate(pool.topics[:count])
    ]


def scenarios_from_file(intent: IntentCategory, path: str | Path, seed: int, count: int | None = None) -> list[ScenarioSeed]:
    """Offline topic source: one topic per line, '#' comments and blanks ignored."""
    lines = Path(path).read_text("utf-8").splitlines()
    pool = _TopicPool()
    for line in lines:
        line = line.strip()
        if line and not line.startswith("#"):
            pool.add(line)
    topics = pool.topics if count is None else pool.topics[:count]
    if count is not None and len(topics) < count:
        raise TaxonomyError(f"{path}: only {len(topics)} distinct topics, need {count}")
    if not topics:
        raise TaxonomyError(f"{path}: no topics found")
    return [
        ScenarioSeed(intent_id=intent.id, topic=topic, seed=derive_seed(seed, intent.id, i))
        for i, topic in enumerate(topics)
    ]


def scenario_to_dict(scenario: ScenarioSeed) -> dict:
    return {"intent_id": scenario.intent_id, "topic": scenario.topic, "seed": scenario.seed}


def scenario_from_dict(data: dict) -> ScenarioSeed:
    try:
        return ScenarioSeed(intent_id=data["intent_id"], topic=data["topic"], seed=int(data["seed"]))
    except KeyError as exc:
        raise TaxonomyError(f"scenario record missing field {exc.args[0]!r}") from exc
