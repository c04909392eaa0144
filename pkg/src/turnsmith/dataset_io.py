"""Loaders and exporters for corpora and benchmark files.

Formats handled here:

* ShareGPT interchange: records with ``conversations: [{from: human|gpt,
  value: ...}]``, as a JSON array or JSON Lines. Ingest repairs alternation
  by merging consecutive same-role messages and drops leading non-human
  messages; every repair is recorded on the record.
* The synthesized-dialogue JSONL (id / intent_id / topic / turns / meta).
* Persona (Light-style) and target-guided (TopDial-style) benchmark files
  and multi-turn task files, in the documented JSON schemas (one committed
  fixture each under tests/fixtures/).
* A flat key=value training manifest carrying the fine-tuning defaults and
  the exported dataset's content hash.

Exporters write atomically (temp file then rename). Loaders are single-pass
and safe to run concurrently on distinct files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import SchemaError
from .judging import LightRecord, ReferenceTurn, TopdialRecord
from .mteval import MtDialogue, MtTask
from .synthesis import Dialogue, dialogue_from_dict, dialogue_to_dict

# published benchmark sizes used for cross-checking supplied files
PUBLISHED_COUNTS = {
    "light": {"dialogues": 1000, "utterances": 13392},
    "topdial": {"dialogues": 3606, "utterances": 40496},
}

_HUMAN_ALIASES = {"human", "user"}
_GPT_ALIASES = {"gpt", "assistant", "chatgpt", "model", "bard"}


@dataclass
class ChatCorpusRecord:
    """One training conversation in ShareGPT interchange shape."""

    id: str
    conversations: list[tuple[str, str]]  # (role, text), roles "human"/"gpt"
    repairs: list[str] = field(default_factory=list)

    @property
    def user_turns(self) -> int:
        return sum(1 for role, _ in self.conversations if role == "human")

    @property
    def n_messages(self) -> int:
        return len(self.conversations)


@dataclass
class LoadReport:
    loaded: int = 0
    skipped: int = 0
    repaired: int = 0
    utterances: int = 0
    reasons: list[str] = field(default_factory=list)


@dataclass
class CorpusStats:
    n_conversations: int
    n_utterances: int
    turn_histogram: dict[int, int]
    mean_turns: float

    def merge(self, other: "CorpusStats") -> "CorpusStats":
        histogram = dict(self.turn_histogram)
        for turns, count in other.turn_histogram.items():
            histogram[turns] = histogram.get(turns, 0) + count
        n_conversations = self.n_conversations + other.n_conversations
        total_turns = sum(t * c for t, c in histogram.items())
        return CorpusStats(
            n_conversations=n_conversations,
            n_utterances=self.n_utterances + other.n_utterances,
            turn_histogram=histogram,
            mean_turns=total_turns / n_conversations if n_conversations else 0.0,
        )


@dataclass
class TrainingManifest:
    learning_rate: float = 1e-5
    schedule: str = "cosine"
    epochs: int = 3
    per_device_batch_size: int = 1
    gradient_accumulation_steps: int = 2
    dataset_path: str = ""
    dataset_sha256: str = ""
    overrides: list[str] = field(default_factory=list)


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, "utf-8")
    tmp.replace(path)


def _read_json_records(path: Path) -> list:
    """A JSON array file or a JSONL file, sniffed from the first character."""
    text = path.read_text("utf-8")
    head = text.lstrip()[:1]
    if head == "[":
        data = json.loads(text)
        if not isinstance(data, list):
            raise SchemaError(f"{path}: expected a JSON array")
        return data
    records = []
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: line {i + 1} is not valid JSON: {exc}") from exc
    return records


# --- ShareGPT interchange ----------------------------------------------------


def _normalize_role(raw: object) -> str | None:
    if not isinstance(raw, str):
        return None
    lowered = raw.lower()
    if lowered in _HUMAN_ALIASES:
        return "human"
    if lowered in _GPT_ALIASES:
        return "gpt"
    return None


def _repair_record(raw: dict, fallback_id: str) -> tuple[ChatCorpusRecord | None, str]:
    conversations = raw.get("conversations")
    if not isinstance(conversations, list) or not conversations:
        return None, "missing or empty 'conversations'"
    repairs: list[str] = []
    messages: list[tuple[str, str]] = []
    for item in conversations:
        if not isinstance(item, dict) or "from" not in item or "value" not in item:
            return None, "conversation item lacks 'from'/'value'"
        role = _normalize_role(item["from"])
        if role is None:
            if str(item.get("from", "")).lower() == "system" and not messages:
                repairs.append("dropped_leading_system")
                continue
            return None, f"unsupported role {item['from']!r}"
        value = item["value"]
        if not isinstance(value, str) or not value.strip():
            return None, "empty message value"
        messages.append((role, value))
    while messages and messages[0][0] != "human":
        messages.pop(0)
        repairs.append("dropped_leading_gpt")
    merged: list[tuple[str, str]] = []
    for role, value in messages:
        if merged and merged[-1][0] == role:
            merged[-1] = (role, merged[-1][1] + "\n" + value)
            repairs.append(f"merged_consecutive_{role}")
        else:
            merged.append((role, value))
    if len(merged) < 2:
        return None, "fewer than 2 messages after repair"
    record_id = str(raw.get("id", fallback_id))
    return ChatCorpusRecord(id=record_id, conversations=merged, repairs=repairs), ""


def load_sharegpt(path: str | Path) -> tuple[list[ChatCorpusRecord], LoadReport]:
    """Load a ShareGPT-shape corpus, repairing alternation and skipping junk."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"corpus file not found: {path}")
    report = LoadReport()
    records: list[ChatCorpusRecord] = []
    for i, raw in enumerate(_read_json_records(path)):
        if not isinstance(raw, dict):
            report.skipped += 1
            report.reasons.append(f"record #{i}: not an object")
            continue
        record, reason = _repair_record(raw, fallback_id=f"rec-{i:06d}")
        if record is None:
            report.skipped += 1
            report.reasons.append(f"record #{i}: {reason}")
            continue
        if record.repairs:
            report.repaired += 1
        records.append(record)
    report.loaded = len(records)
    if not records:
        raise SchemaError(f"{path}: no valid records ({report.skipped} skipped)")
    return records, report


def filter_multi_turn(
    records: Sequence[ChatCorpusRecord],
    min_turns: int = 3,
    sample: int | None = None,
    seed: int = 0,
) -> list[ChatCorpusRecord]:
    """Keep records with strictly more than `min_turns` user turns, then sample.

    Sampling picks indices and preserves input order, so re-filtering a
    sampled corpus with sample equal to its own size is the identity.
    """
    import random

    if min_turns < 1:
        raise ValueError(f"min_turns must be >= 1, got {min_turns}")
    eligible = [r for r in records if r.user_turns > min_turns]
    if sample is None:
        return eligible
    if sample > len(eligible):
        raise ValueError(f"sample of {sample} requested but only {len(eligible)} records are eligible")
    picked = sorted(random.Random(seed).sample(range(len(eligible)), sample))
    return [eligible[i] for i in picked]


def _dialogue_to_sharegpt(dialogue: Dialogue) -> dict:
    conversations = []
    for query, response in dialogue.turns:
        conversations.append({"from": "human", "value": query})
        conversations.append({"from": "gpt", "value": response})
    return {"id": dialogue.id, "conversations": conversations}


def export_chat_jsonl(items: Sequence[Dialogue] | Sequence[ChatCorpusRecord], path: str | Path) -> Path:
    """Write training-ready JSON Lines in ShareGPT interchange shape."""
    path = Path(path)
    lines = []
    for item in items:
        if isinstance(item, Dialogue):
            payload = _dialogue_to_sharegpt(item)
        else:
            payload = {
                "id": item.id,
                "conversations": [{"from": role, "value": value} for role, value in item.conversations],
            }
        lines.append(json.dumps(payload, ensure_ascii=False, sort_keys=True))
    _atomic_write(path, "\n".join(lines) + "\n")
    return path


def corpus_stats(items: Sequence[Dialogue] | Sequence[ChatCorpusRecord]) -> CorpusStats:
    """Counts over a corpus; an utterance is any message of either role."""
    if not items:
        raise ValueError("corpus is empty")
    histogram: dict[int, int] = {}
    n_utterances = 0
    for item in items:
        if isinstance(item, Dialogue):
            turns = len(item.turns)
            n_utterances += 2 * turns
        else:
            turns = item.user_turns
            n_utterances += item.n_messages
        histogram[turns] = histogram.get(turns, 0) + 1
    n_conversations = len(items)
    mean_turns = sum(t * c for t, c in histogram.items()) / n_conversations
    return CorpusStats(
        n_conversations=n_conversations,
        n_utterances=n_utterances,
        turn_histogram=dict(sorted(histogram.items())),
        mean_turns=mean_turns,
    )


# --- synthesized-dialogue JSONL ----------------------------------------------


def write_dialogues_jsonl(dialogues: Sequence[Dialogue], path: str | Path) -> Path:
    path = Path(path)
    lines = [json.dumps(dialogue_to_dict(d), ensure_ascii=False, sort_keys=True) for d in dialogues]
    _atomic_write(path, "\n".join(lines) + "\n")
    return path


def read_dialogues_jsonl(path: str | Path) -> list[Dialogue]:
    path = Path(path)
    dialogues = []
    for i, line in enumerate(path.read_text("utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            dialogues.append(dialogue_from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError) as exc:
            raise SchemaError(f"{path}: line {i + 1}: {exc}") from exc
    if not dialogues:
        raise SchemaError(f"{path}: no dialogue records")
    return dialogues


# --- training manifest ---------------------------------------------------------


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def emit_training_manifest(dataset_path: str | Path, out_path: str | Path, **overrides) -> TrainingManifest:
    """Write the fine-tuning manifest with default hyperparameters and the dataset hash.

    Any default overridden via keyword is recorded by name in the manifest's
    `overrides` line.
    """
    dataset_path = Path(dataset_path)
    if not dataset_path.exists():
        raise SchemaError(f"dataset file not found: {dataset_path}")
    manifest = TrainingManifest(dataset_path=str(dataset_path), dataset_sha256=sha256_file(dataset_path))
    for key, value in overrides.items():
        if not hasattr(manifest, key) or key in ("dataset_path", "dataset_sha256", "overrides"):
            raise ValueError(f"unknown manifest override {key!r}")
        setattr(manifest, key, value)
        manifest.overrides.append(key)
    manifest.overrides.sort()
    lines = [
        f"learning_rate = {manifest.learning_rate!r}",
        f"schedule = {manifest.schedule}",
        f"epochs = {manifest.epochs}",
        f"per_device_batch_size = {manifest.per_device_batch_size}",
        f"gradient_accumulation_steps = {manifest.gradient_accumulation_steps}",
        f"dataset_path = {manifest.dataset_path}",
        f"dataset_sha256 = {manifest.dataset_sha256}",
        f"overrides = {','.join(manifest.overrides) if manifest.overrides else 'none'}",
    ]
    _atomic_write(Path(out_path), "\n".join(lines) + "\n")
    return manifest


# --- benchmark loaders ---------------------------------------------------------


def _require(raw: dict, name: str, where: str):
    if name not in raw or raw[name] in (None, ""):
        raise SchemaError(f"{where}: missing field {name!r}")
    return raw[name]


def _parse_turns(raw: object, where: str, speakers: tuple[str, ...] = ("user", "agent")) -> tuple[ReferenceTurn, ...]:
    if not isinstance(raw, list) or not raw:
        raise SchemaError(f"{where}: missing field 'turns'")
    turns = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise SchemaError(f"{where}: turn #{i} is not an object")
        speaker = item.get("speaker")
        if speaker not in speakers:
            raise SchemaError(f"{where}: turn #{i} has invalid field 'speaker'")
        text = item.get("text")
        if not isinstance(text, str) or not text.strip():
            raise SchemaError(f"{where}: turn #{i} has empty field 'text'")
        turns.append(ReferenceTurn(speaker=speaker, text=text))
    return tuple(turns)


def load_light(path: str | Path) -> tuple[list[LightRecord], LoadReport]:
    """Persona-dialogue benchmark file; see README for the JSON schema."""
    path = Path(path)
    records = []
    utterances = 0
    for i, raw in enumerate(_read_json_records(path)):
        where = f"{path.name} record #{i}"
        if not isinstance(raw, dict):
            raise SchemaError(f"{where}: not an object")
        turns = _parse_turns(raw.get("turns"), where)
        try:
            record = LightRecord(
                id=str(raw.get("id", f"light-{i:05d}")),
                user_character=_require(raw, "user_character", where),
                user_persona=_require(raw, "user_persona", where),
                agent_character=_require(raw, "agent_character", where),
                agent_persona=_require(raw, "agent_persona", where),
                setting=_require(raw, "setting", where),
                turns=turns,
            )
        except ValueError as exc:
            raise SchemaError(f"{where}: {exc}") from exc
        utterances += len(turns)
        records.append(record)
    if not records:
        raise SchemaError(f"{path}: no records")
    return records, LoadReport(loaded=len(records), utterances=utterances)


def load_topdial(path: str | Path) -> tuple[list[TopdialRecord], LoadReport]:
    """Target-guided benchmark file; see README for the JSON schema."""
    path = Path(path)
    records = []
    utterances = 0
    for i, raw in enumerate(_read_json_records(path)):
        where = f"{path.name} record #{i}"
        if not isinstance(raw, dict):
            raise SchemaError(f"{where}: not an object")
        target = raw.get("target")
        if not isinstance(target, dict) or not target.get("act") or not target.get("topic"):
            raise SchemaError(f"{where}: missing field 'target' (needs both 'act' and 'topic')")
        knowledge_raw = raw.get("domain_knowledge", [])
        if not isinstance(knowledge_raw, list):
            raise SchemaError(f"{where}: invalid field 'domain_knowledge'")
        knowledge = []
        for j, triple in enumerate(knowledge_raw):
            if not isinstance(triple, (list, tuple)) or len(triple) != 3:
                raise SchemaError(f"{where}: 'domain_knowledge' entry #{j} is not a triple")
            knowledge.append(tuple(str(x) for x in triple))
        profile = raw.get("user_profile")
        if not isinstance(profile, dict) or not profile:
            raise SchemaError(f"{where}: missing field 'user_profile'")
        personality = raw.get("user_personality", {})
        if not isinstance(personality, dict):
            raise SchemaError(f"{where}: invalid field 'user_personality'")
        turns = _parse_turns(raw.get("turns"), where)
        try:
            record = TopdialRecord(
                id=str(raw.get("id", f"topdial-{i:05d}")),
                target_act=str(target["act"]),
                target_topic=str(target["topic"]),
                domain_knowledge=tuple(knowledge),
                user_profile=profile,
                user_personality=personality,
                agent_role=_require(raw, "agent_role", where),
                turns=turns,
            )
        except ValueError as exc:
            raise SchemaError(f"{where}: {exc}") from exc
        utterances += len(turns)
        records.append(record)
    if not records:
        raise SchemaError(f"{path}: no records")
    return records, LoadReport(loaded=len(records), utterances=utterances)


def load_mteval(path: str | Path) -> MtTask:
    """Multi-turn task file: {"task": name, "dialogues": [{id, instructions[, boundary]}]}."""
    path = Path(path)
    try:
        data = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: top level must be an object")
    name = data.get("task")
    dialogues_raw = data.get("dialogues")
    if not isinstance(name, str):
        raise SchemaError(f"{path}: missing field 'task'")
    if not isinstance(dialogues_raw, list) or not dialogues_raw:
        raise SchemaError(f"{path}: missing field 'dialogues'")
    dialogues = []
    for i, raw in enumerate(dialogues_raw):
        where = f"{path.name} dialogue #{i}"
        if not isinstance(raw, dict):
            raise SchemaError(f"{where}: not an object")
        instructions = raw.get("instructions")
        if not isinstance(instructions, list) or not instructions:
            raise SchemaError(f"{where}: missing field 'instructions'")
        boundary = raw.get("boundary")
        if name == "refinement" and boundary is None:
            boundary = 7
        try:
            dialogues.append(
                MtDialogue(
                    id=str(raw.get("id", f"{name}-{i:04d}")),
                    instructions=tuple(instructions),
                    boundary=boundary,
                )
            )
        except ValueError as exc:
            raise SchemaError(f"{where}: {exc}") from exc
    try:
        return MtTask(name=name, dialogues=tuple(dialogues))
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def check_published_counts(benchmark: str, n_dialogues: int, n_utterances: int) -> bool:
    """True when the supplied file matches the published test-set sizes."""
    expected = PUBLISHED_COUNTS.get(benchmark)
    if expected is None:
        raise ValueError(f"no published counts recorded for {benchmark!r}")
    return n_dialogues == expected["dialogues"] and n_utterances == expected["utterances"]
