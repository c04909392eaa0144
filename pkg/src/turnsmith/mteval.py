"""Multi-turn benchmark harness: ST/MT runs, per-turn curves, and summaries.

Two run conditions:

* MT replays the conversation: instruction t is sent with the full
  accumulated history, so the model sees 2t-1 messages (t user instructions
  interleaved with its own t-1 earlier replies). This measures the model
  under self-conditioning, unlike the judging module's teacher forcing.
* ST collapses the prior instructions into one user message per turn, so the
  model answers in a single turn with no assistant history. Instruction 1 is
  byte-identical across conditions.

Aggregation mirrors the published convention: per-turn means are rounded
half-up at two decimals, segment averages are means of those rounded values,
and deltas are differences of the rounded averages.
"""

from __future__ import annotations

import csv
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Sequence

from .backends import ChatBackend, ChatMessage, GenerationParams
from .errors import VerdictError
from .hashing import sha256_hex
from .judging import JudgeVerdict, parse_score
from .rounding import mean_half_up
from .templates import PromptTemplate, load_template

TASK_NAMES = ("expansion", "refinement", "follow-up")
PUBLISHED_TURNS = {"expansion": 70, "refinement": 480, "follow-up": 240}
REFINEMENT_INSTRUCTIONS = 12
REFINEMENT_BOUNDARY = 7  # second sub-task starts at the seventh instruction
DEFAULT_CONTEXT_JOINER = "\n\n"


@dataclass(frozen=True)
class MtDialogue:
    id: str
    instructions: tuple[str, ...]
    boundary: int | None = None

    def __post_init__(self):
        if not self.instructions:
            raise ValueError(f"dialogue {self.id!r} has no instructions")
        if any(not isinstance(i, str) or not i.strip() for i in self.instructions):
            raise ValueError(f"dialogue {self.id!r} has an empty instruction")


@dataclass(frozen=True)
class MtTask:
    name: str
    dialogues: tuple[MtDialogue, ...]

    def __post_init__(self):
        if self.name not in TASK_NAMES:
            raise ValueError(f"task name must be one of {TASK_NAMES}, got {self.name!r}")
        if not self.dialogues:
            raise ValueError(f"task {self.name!r} has no dialogues")
        if self.name == "refinement":
            for dialogue in self.dialogues:
                if len(dialogue.instructions) != REFINEMENT_INSTRUCTIONS:
                    raise ValueError(
                        f"refinement dialogue {dialogue.id!r} must have "
                        f"{REFINEMENT_INSTRUCTIONS} instructions, has {len(dialogue.instructions)}"
                    )
                if dialogue.boundary is not None and dialogue.boundary != REFINEMENT_BOUNDARY:
                    raise ValueError(
                        f"refinement dialogue {dialogue.id!r} boundary must be "
                        f"{REFINEMENT_BOUNDARY}, got {dialogue.boundary}"
                    )

    @property
    def total_turns(self) -> int:
        return sum(len(d.instructions) for d in self.dialogues)

    @property
    def boundary(self) -> int | None:
        return REFINEMENT_BOUNDARY if self.name == "refinement" else None


@dataclass
class TurnResult:
    """One sent turn: the exact messages, their digest, and the model's reply."""

    dialogue_id: str
    turn: int  # 1-based
    condition: str  # "ST" | "MT"
    instruction: str
    messages: tuple[tuple[str, str], ...]
    response: str = ""
    error: str = ""

    @property
    def messages_sent(self) -> int:
        return len(self.messages)

    @property
    def prompt_sha256(self) -> str:
        return sha256_hex(json.dumps(list(self.messages), ensure_ascii=False))


def _freeze(messages: Sequence[ChatMessage]) -> tuple[tuple[str, str], ...]:
    return tuple((m.role, m.content) for m in messages)


def run_mt(
    task: MtTask,
    backend: ChatBackend,
    params: GenerationParams | None = None,
    *,
    workers: int = 1,
) -> list[TurnResult]:
    """Full-history replay; a backend failure aborts that dialogue and is recorded."""
    params = params or GenerationParams()

    def run_dialogue(dialogue: MtDialogue) -> list[TurnResult]:
        results: list[TurnResult] = []
        history: list[ChatMessage] = []
        for t, instruction in enumerate(dialogue.instructions, start=1):
            history.append(ChatMessage("user", instruction))
            result = TurnResult(
                dialogue_id=dialogue.id,
                turn=t,
                condition="MT",
                instruction=instruction,
                messages=_freeze(history),
            )
            try:
                result.response = backend.complete_chat(history, params).text
            except Exception as exc:  # noqa: BLE001 - recorded, dialogue aborted
                result.error = str(exc)
                results.append(result)
                break
            history.append(ChatMessage("assistant", result.response))
            results.append(result)
        return results

    return _run_dialogues(task, run_dialogue, workers)


def run_st(
    task: MtTask,
    backend: ChatBackend,
    params: GenerationParams | None = None,
    *,
    workers: int = 1,
    context_joiner: str = DEFAULT_CONTEXT_JOINER,
) -> list[TurnResult]:
    """Collapsed-context runs: instruction t's prior context becomes one user message."""
    params = params or GenerationParams()

    def run_dialogue(dialogue: MtDialogue) -> list[TurnResult]:
        results: list[TurnResult] = []
        for t, instruction in enumerate(dialogue.instructions, start=1):
            collapsed = context_joiner.join(dialogue.instructions[:t])
            messages = [ChatMessage("user", collapsed)]
            result = TurnResult(
                dialogue_id=dialogue.id,
                turn=t,
                condition="ST",
                instruction=instruction,
                messages=_freeze(messages),
            )
            try:
                result.response = backend.complete_chat(messages, params).text
            except Exception as exc:  # noqa: BLE001 - turns are independent, keep going
                result.error = str(exc)
            results.append(result)
        return results

    return _run_dialogues(task, run_dialogue, workers)


def _run_dialogues(task: MtTask, run_dialogue, workers: int) -> list[TurnResult]:
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_dialogue = list(pool.map(run_dialogue, task.dialogues))
    else:
        per_dialogue = [run_dialogue(d) for d in task.dialogues]
    return [result for results in per_dialogue for result in results]


def _context_from_messages(messages: Sequence[tuple[str, str]]) -> str:
    labels = {"user": "User", "assistant": "Assistant", "system": "System"}
    return "\n".join(f"{labels[role]}: {text}" for role, text in messages[:-1])


def judge_transcript(
    results: Sequence[TurnResult],
    judge_backend: ChatBackend,
    params: GenerationParams | None = None,
    *,
    task_name: str,
    template: PromptTemplate | None = None,
    workers: int = 1,
) -> tuple[list[JudgeVerdict], list[tuple[str, int, str]]]:
    """Judge every completed turn; returns (verdicts, [(dialogue, turn, reason)] for failures)."""
    params = params or GenerationParams(temperature=0.0)
    template = template or load_template("mteval_judge")
    benchmark = f"mteval-{task_name}"
    judge_model = params.model or getattr(judge_backend, "model", "")
    todo = [r for r in results if not r.error and r.response.strip()]

    def judge_one(result: TurnResult) -> JudgeVerdict:
        # the judge sees what the model saw: under ST the final user message
        # is the collapsed context block, not the bare instruction
        prompt = template.render(
            {
                "DIALOGUE_CONTEXT": _context_from_messages(result.messages) or "(start of conversation)",
                "INSTRUCTION": result.messages[-1][1] if result.messages else result.instruction,
                "RESPONSE": result.response,
            }
        )
        messages = [ChatMessage("user", prompt)]
        last: VerdictError | None = None
        for attempt in (1, 2):
            raw = judge_backend.complete_chat(messages, params).text
            try:
                return JudgeVerdict(
                    record_id=result.dialogue_id,
                    turn_index=result.turn,
                    score=parse_score(raw),
                    judge_model=judge_model,
                    benchmark=benchmark,
                    raw=raw,
                    attempts=attempt,
                )
            except VerdictError as exc:
                last = exc
        raise VerdictError(f"unparseable verdict after re-ask for ({result.dialogue_id}, {result.turn}): {last}")

    verdicts: list[JudgeVerdict] = []
    failures: list[tuple[str, int, str]] = []
    outcomes: list[tuple[JudgeVerdict | None, Exception | None]] = []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(judge_one, r) for r in todo]
            for future in futures:
                try:
                    outcomes.append((future.result(), None))
                except Exception as exc:  # noqa: BLE001
                    outcomes.append((None, exc))
    else:
        for result in todo:
            try:
                outcomes.append((judge_one(result), None))
            except Exception as exc:  # noqa: BLE001
                outcomes.append((None, exc))
    for result, (verdict, error) in zip(todo, outcomes):
        if verdict is not None:
            verdicts.append(verdict)
        else:
            failures.append((result.dialogue_id, result.turn, str(error)))
    return verdicts, failures


# --- aggregation ------------------------------------------------------------


@dataclass(frozen=True)
class TurnScore:
    """One judged turn, decoupled from where the number came from."""

    dialogue_id: str
    turn: int
    score: float


def turn_scores_from_verdicts(verdicts: Sequence[JudgeVerdict]) -> list[TurnScore]:
    return [TurnScore(v.record_id, v.turn_index, float(v.score)) for v in verdicts]


@dataclass
class TurnCurve:
    task: str
    condition: str
    means: dict[int, Decimal]  # turn -> half-up 2-decimal mean
    counts: dict[int, int] = field(default_factory=dict)
    boundary: int | None = None

    def ordered_turns(self) -> list[int]:
        return sorted(self.means)

    def segment_average(self, turns: Sequence[int]) -> Decimal:
        return mean_half_up([self.means[t] for t in turns])


@dataclass
class SegmentSummary:
    first: Decimal
    second: Decimal
    delta: Decimal  # second - first, both already rounded


def per_turn_curve(
    scores: Sequence[TurnScore],
    *,
    task: str,
    condition: str,
    boundary: int | None = None,
    min_coverage: float = 0.0,
    expected_turn_count: int | None = None,
) -> TurnCurve:
    """Mean score per turn index across dialogues.

    `min_coverage` guards against silently thin curves: when an expected turn
    count is known, the fraction of (dialogue, turn) slots that actually got
    a score must reach it.
    """
    if not scores:
        raise ValueError("no turn scores")
    by_turn: dict[int, list[float]] = {}
    for score in scores:
        by_turn.setdefault(score.turn, []).append(score.score)
    if expected_turn_count is not None and expected_turn_count > 0:
        coverage = len(scores) / expected_turn_count
        if coverage < min_coverage:
            raise VerdictError(
                f"only {len(scores)}/{expected_turn_count} turns scored "
                f"({coverage:.0%} < required {min_coverage:.0%})"
            )
    means = {turn: mean_half_up(values) for turn, values in sorted(by_turn.items())}
    for turn, mean in means.items():
        if not Decimal(1) <= mean <= Decimal(10):
            raise ValueError(f"turn {turn} mean {mean} outside [1, 10]")
    counts = {turn: len(values) for turn, values in sorted(by_turn.items())}
    return TurnCurve(task=task, condition=condition, means=means, counts=counts, boundary=boundary)


def segment_summary(curve: TurnCurve) -> SegmentSummary:
    """Averages of the per-turn means before/from the boundary, and their delta."""
    if curve.boundary is None:
        raise ValueError("curve has no boundary to split on")
    first = [t for t in curve.ordered_turns() if t < curve.boundary]
    second = [t for t in curve.ordered_turns() if t >= curve.boundary]
    if not first or not second:
        raise ValueError(f"boundary {curve.boundary} does not split turns {curve.ordered_turns()}")
    first_avg = curve.segment_average(first)
    second_avg = curve.segment_average(second)
    return SegmentSummary(first=first_avg, second=second_avg, delta=second_avg - first_avg)


@dataclass
class BenchSummary:
    st_avg: Decimal
    mt_avg: Decimal
    delta: Decimal


def summarize(task_means: dict[str, dict[str, float | Decimal]]) -> BenchSummary:
    """Overall ST/MT averages over the three tasks; delta of the rounded averages."""
    missing = [name for name in TASK_NAMES if name not in task_means]
    if missing:
        raise ValueError(f"missing task mean(s) for: {', '.join(missing)}")
    st_avg = mean_half_up([task_means[name]["st"] for name in TASK_NAMES])
    mt_avg = mean_half_up([task_means[name]["mt"] for name in TASK_NAMES])
    return BenchSummary(st_avg=st_avg, mt_avg=mt_avg, delta=mt_avg - st_avg)


# --- artifact IO ------------------------------------------------------------


def write_transcript_jsonl(results: Sequence[TurnResult], path: str | Path) -> Path:
    path = Path(path)
    lines = []
    for r in results:
        lines.append(
            json.dumps(
                {
                    "dialogue_id": r.dialogue_id,
                    "turn": r.turn,
                    "condition": r.condition,
                    "instruction": r.instruction,
                    "messages": [list(m) for m in r.messages],
                    "messages_sent": r.messages_sent,
                    "prompt_sha256": r.prompt_sha256,
                    "response": r.response,
                    "error": r.error,
                },
                ensure_ascii=False,
                sort_keys=True,
            )
        )
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", "utf-8")
    tmp.replace(path)
    return path


def read_transcript_jsonl(path: str | Path) -> list[TurnResult]:
    results = []
    for line in Path(path).read_text("utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        results.append(
            TurnResult(
                dialogue_id=record["dialogue_id"],
                turn=int(record["turn"]),
                condition=record["condition"],
                instruction=record["instruction"],
                messages=tuple((role, text) for role, text in record["messages"]),
                response=record.get("response", ""),
                error=record.get("error", ""),
            )
        )
    return results


_CURVE_META_RE = re.compile(r"#\s*task=(\S+)\s+condition=(\S+)(?:\s+boundary=(\d+))?")


def write_curve_csv(curve: TurnCurve, path: str | Path) -> Path:
    """CSV with one row per turn index, self-describing via a comment header."""
    path = Path(path)
    meta = f"# task={curve.task} condition={curve.condition}"
    if curve.boundary is not None:
        meta += f" boundary={curve.boundary}"
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(meta + "\n")
        writer = csv.writer(fh)
        writer.writerow(["turn", "mean", "n"])
        for turn in curve.ordered_turns():
            writer.writerow([turn, f"{curve.means[turn]:.2f}", curve.counts.get(turn, 0)])
    return path


def read_curve_csv(path: str | Path) -> TurnCurve:
    path = Path(path)
    lines = path.read_text("utf-8").splitlines()
    task, condition, boundary = path.stem, "", None
    rows = lines
    if lines and lines[0].startswith("#"):
        match = _CURVE_META_RE.match(lines[0])
        if match:
            task, condition = match.group(1), match.group(2)
            boundary = int(match.group(3)) if match.group(3) else None
        rows = lines[1:]
    means: dict[int, Decimal] = {}
    counts: dict[int, int] = {}
    for row in csv.DictReader(rows):
        turn = int(row["turn"])
        means[turn] = Decimal(row["mean"])
        counts[turn] = int(row.get("n") or 0)
    if not means:
        raise ValueError(f"{path}: no curve rows")
    return TurnCurve(task=task, condition=condition, means=means, counts=counts, boundary=boundary)
