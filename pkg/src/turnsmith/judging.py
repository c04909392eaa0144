"""Teacher-forced response collection and 1-10 LLM-judge scoring.

Response collection always conditions the model under test on the *reference*
dialogue prefix, never on its own earlier outputs, so per-turn quality is
measured without error propagation: the prompt at a given (record, turn) is
identical no matter which model is being evaluated.

Judges run at temperature 0 and are told to output only the score. Parsing is
strict-integer first, then a bounded lenient fallback (first integer, must be
in range), then one re-ask, then a hard error that callers record and exclude
from aggregates.
"""

from __future__ import annotations

import csv
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Sequence

from .backends import ChatBackend, ChatMessage, GenerationParams
from .errors import VerdictError
from .hashing import sha256_hex
from .rounding import mean_half_up
from .templates import PromptTemplate, load_template

SCORE_MIN, SCORE_MAX = 1, 10


@dataclass(frozen=True)
class ReferenceTurn:
    speaker: str  # "user" | "agent"
    text: str

    def __post_init__(self):
        if self.speaker not in ("user", "agent"):
            raise ValueError(f"speaker must be 'user' or 'agent', got {self.speaker!r}")


def _check_alternation(turns: Sequence[ReferenceTurn], record_id: str) -> None:
    for prev, cur in zip(turns, turns[1:]):
        if prev.speaker == cur.speaker:
            raise ValueError(f"record {record_id!r}: consecutive {cur.speaker} turns do not alternate")


@dataclass
class LightRecord:
    """Persona-grounded roleplay dialogue: two characters in a scene."""

    benchmark = "light"

    id: str
    user_character: str
    user_persona: str
    agent_character: str
    agent_persona: str
    setting: str
    turns: tuple[ReferenceTurn, ...]

    def __post_init__(self):
        _check_alternation(self.turns, self.id)

    def context_label(self, speaker: str) -> str:
        if speaker == "user":
            return f"{self.user_character} (User)"
        return f"{self.agent_character} (Agent)"


@dataclass
class TopdialRecord:
    """Target-guided dialogue: the agent steers toward (act, topic)."""

    benchmark = "topdial"

    id: str
    target_act: str
    target_topic: str
    domain_knowledge: tuple[tuple[str, str, str], ...]
    user_profile: dict
    user_personality: dict
    agent_role: str
    turns: tuple[ReferenceTurn, ...]

    def __post_init__(self):
        _check_alternation(self.turns, self.id)

    def context_label(self, speaker: str) -> str:
        return "[User]" if speaker == "user" else "[Agent]"


Record = LightRecord | TopdialRecord


@dataclass(frozen=True)
class JudgeVerdict:
    record_id: str
    turn_index: int
    score: int
    judge_model: str
    benchmark: str
    raw: str = ""
    attempts: int = 1

    def __post_init__(self):
        if not SCORE_MIN <= self.score <= SCORE_MAX:
            raise ValueError(f"score must be in [{SCORE_MIN}, {SCORE_MAX}], got {self.score}")


def render_dialogue_context(record: Record, end: int) -> str:
    """The reference turns strictly before `end`, one labeled line each."""
    return "\n".join(f"{record.context_label(t.speaker)}: {t.text}" for t in record.turns[:end])


def _profile_text(profile: dict) -> str:
    return json.dumps(profile, ensure_ascii=False)


def agent_turn_indexes(record: Record, selection: str = "all") -> list[int]:
    indexes = [i for i, turn in enumerate(record.turns) if turn.speaker == "agent"]
    if selection == "all":
        return indexes
    if selection == "last":
        return indexes[-1:]
    raise ValueError(f"selection must be 'all' or 'last', got {selection!r}")


def render_agent_prompt(record: Record, turn_index: int, template: PromptTemplate | None = None) -> str:
    """Inference prompt for the model under test at one agent turn.

    The dialogue context is the reference prefix ending just before
    turn_index; pointing at a user turn is an error.
    """
    if not 0 <= turn_index < len(record.turns):
        raise IndexError(f"turn_index {turn_index} out of range for {len(record.turns)} turns")
    if record.turns[turn_index].speaker != "agent":
        raise ValueError(f"turn_index {turn_index} addresses a user turn")
    context = render_dialogue_context(record, turn_index)
    if isinstance(record, LightRecord):
        template = template or load_template("light_agent")
        return template.render(
            {
                "AGENT_CHARACTER": record.agent_character,
                "AGENT_PERSONA": record.agent_persona,
                "USER_CHARACTER": record.user_character,
                "USER_PERSONA": record.user_persona,
                "SETTING": record.setting,
                "DIALOGUE_CONTEXT": context,
            }
        )
    template = template or load_template("topdial_agent")
    return template.render(
        {
            "AGENT_ROLE": record.agent_role,
            "USER_NAME": str(record.user_profile.get("Name", "the user")),
            "USER_PROFILE": _profile_text(record.user_profile),
            "TARGET_ACT": record.target_act,
            "TARGET_TOPIC": record.target_topic,
            "DIALOGUE_CONTEXT": context,
        }
    )


@dataclass
class CollectedTurn:
    record_id: str
    turn_index: int
    prompt_sha256: str
    response: str = ""
    error: str = ""


def collect_responses(
    records: Sequence[Record],
    backend: ChatBackend,
    params: GenerationParams | None = None,
    *,
    selection: str = "all",
    workers: int = 1,
    template: PromptTemplate | None = None,
) -> list[CollectedTurn]:
    """Run the model under test over the selected agent turns of every record.

    Failures are recorded per turn and the run continues; outputs are keyed
    (record_id, turn_index) for joining with judge verdicts.
    """
    params = params or GenerationParams()
    jobs = [(record, i) for record in records for i in agent_turn_indexes(record, selection)]

    def run(job: tuple[Record, int]) -> CollectedTurn:
        record, turn_index = job
        prompt = render_agent_prompt(record, turn_index, template)
        collected = CollectedTurn(record_id=record.id, turn_index=turn_index, prompt_sha256=sha256_hex(prompt))
        try:
            collected.response = backend.complete_chat([ChatMessage("user", prompt)], params).text
        except Exception as exc:  # noqa: BLE001 - per-turn failures reported, run continues
            collected.error = str(exc)
        return collected

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, jobs))
    return [run(job) for job in jobs]


def parse_score(text: str) -> int:
    """Strict integer parse with a bounded lenient fallback.

    Accepts '7', ' 9\\n', and decorated forms like 'Score: 8' (first integer
    wins). Integers outside [1, 10] and score-free prose are rejected.
    """
    stripped = text.strip()
    match = re.fullmatch(r"-?\d+", stripped) or re.search(r"-?\d+", text)
    if match is None:
        raise VerdictError(f"no score in judge output: {text[:80]!r}")
    value = int(match.group(0))
    if not SCORE_MIN <= value <= SCORE_MAX:
        raise VerdictError(f"score {value} outside [{SCORE_MIN}, {SCORE_MAX}] in judge output: {text[:80]!r}")
    return value


def render_judge_prompt(record: Record, turn_index: int, response: str, template: PromptTemplate | None = None) -> str:
    context = render_dialogue_context(record, turn_index)
    if isinstance(record, LightRecord):
        template = template or load_template("light_judge")
        return template.render(
            {
                "AGENT_CHARACTER": record.agent_character,
                "SETTING": record.setting,
                "DIALOGUE_CONTEXT": context,
                "RESPONSE": response,
            }
        )
    template = template or load_template("topdial_judge")
    return template.render(
        {
            "TARGET_ACT, TARGET_TOPIC": f"{record.target_act}, {record.target_topic}",
            "TARGET_ACT": record.target_act,
            "TARGET_TOPIC": record.target_topic,
            "AGENT_ROLE": record.agent_role,
            "USER_PROFILE": _profile_text(record.user_profile),
            "DIALOGUE_CONTEXT": context,
            "RESPONSE": response,
        }
    )


def judge_response(
    record: Record,
    turn_index: int,
    response: str,
    judge_backend: ChatBackend,
    params: GenerationParams | None = None,
    *,
    template: PromptTemplate | None = None,
) -> JudgeVerdict:
    """Score one collected response at temperature 0; one re-ask on unparseable output."""
    if not response.strip():
        raise ValueError("response must be non-empty")
    params = params or GenerationParams(temperature=0.0)
    prompt = render_judge_prompt(record, turn_index, response, template)
    messages = [ChatMessage("user", prompt)]
    judge_model = params.model or getattr(judge_backend, "model", "")
    last_error: VerdictError | None = None
    for attempt in (1, 2):
        raw = judge_backend.complete_chat(messages, params).text
        try:
            score = parse_score(raw)
        except VerdictError as exc:
            last_error = exc
            continue
        return JudgeVerdict(
            record_id=record.id,
            turn_index=turn_index,
            score=score,
            judge_model=judge_model,
            benchmark=record.benchmark,
            raw=raw,
            attempts=attempt,
        )
    raise VerdictError(f"unparseable verdict after re-ask for ({record.id}, {turn_index}): {last_error}")


@dataclass
class GroupMean:
    mean: Decimal
    n: int


@dataclass
class VerdictSummary:
    groups: dict[tuple[str, str], GroupMean]  # (benchmark, judge_model) -> stat
    overall: Decimal


def aggregate_verdicts(verdicts: Sequence[JudgeVerdict]) -> VerdictSummary:
    """Unweighted per-(benchmark, judge) means at 2 decimals, plus the mean of those cells."""
    if not verdicts:
        raise ValueError("no verdicts to aggregate")
    grouped: dict[tuple[str, str], list[int]] = {}
    for verdict in verdicts:
        grouped.setdefault((verdict.benchmark, verdict.judge_model), []).append(verdict.score)
    groups = {key: GroupMean(mean=mean_half_up(scores), n=len(scores)) for key, scores in sorted(grouped.items())}
    overall = overall_average([g.mean for g in groups.values()])
    return VerdictSummary(groups=groups, overall=overall)


def overall_average(cell_means: Sequence[Decimal | float]) -> Decimal:
    """Mean of already-aggregated benchmark-by-judge cells, half-up at 2 decimals."""
    return mean_half_up(cell_means)


# --- artifact IO ------------------------------------------------------------


def write_verdicts_jsonl(verdicts: Sequence[JudgeVerdict], path: str | Path, *, keep_raw: bool = False) -> Path:
    path = Path(path)
    lines = []
    for v in verdicts:
        record = {
            "record_id": v.record_id,
            "turn_index": v.turn_index,
            "score": v.score,
            "judge_model": v.judge_model,
            "benchmark": v.benchmark,
        }
        if keep_raw:
            record["raw"] = v.raw
        lines.append(json.dumps(record, ensure_ascii=False, sort_keys=True))
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", "utf-8")
    tmp.replace(path)
    return path


def read_verdicts_jsonl(path: str | Path) -> list[JudgeVerdict]:
    verdicts = []
    for line in Path(path).read_text("utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        verdicts.append(
            JudgeVerdict(
                record_id=record["record_id"],
                turn_index=int(record["turn_index"]),
                score=int(record["score"]),
                judge_model=record.get("judge_model", ""),
                benchmark=record.get("benchmark", ""),
                raw=record.get("raw", ""),
            )
        )
    return verdicts


def write_summary_csv(summary: VerdictSummary, model_name: str, path: str | Path) -> Path:
    """One row per model under test, one column per benchmark-by-judge cell, then the average."""
    path = Path(path)
    cells = list(summary.groups.items())
    header = ["model"] + [f"{benchmark}:{judge}" for (benchmark, judge), _ in cells] + ["avg"]
    row = [model_name] + [f"{stat.mean:.2f}" for _, stat in cells] + [f"{summary.overall:.2f}"]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerow(row)
    return path
