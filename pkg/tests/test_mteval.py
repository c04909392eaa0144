"""History-law contracts for ST/MT runs and published-table aggregation arithmetic."""

from __future__ import annotations

import json
from decimal import Decimal

import pytest

from turnsmith.backends import MockBackend, ScriptedChatBackend
from turnsmith.mteval import (
    MtDialogue,
    MtTask,
    TurnScore,
    judge_transcript,
    per_turn_curve,
    read_curve_csv,
    read_transcript_jsonl,
    run_mt,
    run_st,
    segment_summary,
    summarize,
    turn_scores_from_verdicts,
    write_curve_csv,
    write_transcript_jsonl,
)
from turnsmith.rounding import format_signed

TURNS_1_6 = [8.75, 8.23, 7.03, 6.68, 6.33, 6.08]
TURNS_7_12 = [8.40, 8.25, 7.30, 6.65, 6.33, 6.06]


def _refinement(n_dialogues: int = 1) -> MtTask:
    dialogues = tuple(
        MtDialogue(
            id=f"ref-{d}",
            instructions=tuple(f"instruction {t} of dialogue {d}" for t in range(1, 13)),
            boundary=7,
        )
        for d in range(n_dialogues)
    )
    return MtTask(name="refinement", dialogues=dialogues)


# --- task invariants -----------------------------------------------------------


def test_refinement_requires_12_instructions():
    with pytest.raises(ValueError, match="12 instructions"):
        MtTask(name="refinement", dialogues=(MtDialogue(id="x", instructions=("a", "b")),))


def test_refinement_boundary_must_be_7():
    with pytest.raises(ValueError, match="boundary"):
        MtTask(
            name="refinement",
            dialogues=(MtDialogue(id="x", instructions=tuple("abcdefghijkl"), boundary=5),),
        )


def test_unknown_task_name_rejected():
    with pytest.raises(ValueError, match="task name"):
        MtTask(name="essay", dialogues=(MtDialogue(id="x", instructions=("a",)),))


def test_task_records_sizes():
    task = _refinement(3)
    assert task.total_turns == 36
    assert task.boundary == 7


# --- MT history law ---------------------------------------------------------------


def test_mt_message_count_is_2t_minus_1():
    task = _refinement()
    results = run_mt(task, MockBackend(seed=1))
    assert len(results) == 12
    for result in results:
        assert result.messages_sent == 2 * result.turn - 1
        # alternation: user, assistant, ..., user
        roles = [role for role, _ in result.messages]
        assert roles[::2] == ["user"] * result.turn
        assert roles[1::2] == ["assistant"] * (result.turn - 1)


def test_mt_transcript_reproducible():
    task = _refinement()
    a = run_mt(task, MockBackend(seed=4))
    b = run_mt(task, MockBackend(seed=4))
    assert [r.response for r in a] == [r.response for r in b]
    assert [r.prompt_sha256 for r in a] == [r.prompt_sha256 for r in b]


def test_mt_backend_failure_aborts_dialogue_and_is_recorded():
    task = _refinement()
    backend = ScriptedChatBackend(["reply one", "reply two"])
    results = run_mt(task, backend)
    assert len(results) == 3
    assert results[0].response == "reply one"
    assert results[2].error and not results[2].response


# --- ST collapse ---------------------------------------------------------------


def test_st_turn1_prompt_equals_mt_turn1_byte_for_byte():
    task = _refinement()
    mt = run_mt(task, MockBackend(seed=1))
    st = run_st(task, MockBackend(seed=1))
    assert st[0].messages == mt[0].messages
    assert st[0].prompt_sha256 == mt[0].prompt_sha256


def test_st_turn3_is_one_user_message_with_context_block():
    task = _refinement()
    st = run_st(task, MockBackend(seed=1))
    third = st[2]
    assert third.messages_sent == 1
    role, content = third.messages[0]
    assert role == "user"
    for t in (1, 2, 3):
        assert f"instruction {t} of dialogue 0" in content
    assert "instruction 4" not in content


def test_st_runs_every_instruction_independently():
    task = _refinement(2)
    st = run_st(task, MockBackend(seed=1))
    assert len(st) == 24
    assert all(r.messages_sent == 1 for r in st)
    assert all(not r.error for r in st)


# --- judging transcripts ----------------------------------------------------------


def test_judge_transcript_scores_completed_turns():
    task = _refinement()
    results = run_mt(task, MockBackend(seed=1))
    verdicts, failures = judge_transcript(results, MockBackend(seed=2), task_name=task.name)
    assert not failures
    assert len(verdicts) == 12
    assert all(v.benchmark == "mteval-refinement" for v in verdicts)
    assert all(1 <= v.score <= 10 for v in verdicts)
    scores = turn_scores_from_verdicts(verdicts)
    assert [s.turn for s in scores] == list(range(1, 13))


# --- aggregation ---------------------------------------------------------------


def _curve_from_rows():
    scores = [TurnScore("row", t, v) for t, v in enumerate(TURNS_1_6 + TURNS_7_12, start=1)]
    return per_turn_curve(scores, task="refinement", condition="MT", boundary=7)


def test_published_per_turn_rows_reproduce_segment_averages():
    curve = _curve_from_rows()
    segments = segment_summary(curve)
    assert segments.first == Decimal("7.18")
    assert segments.second == Decimal("7.17")
    assert segments.delta == Decimal("-0.01")
    assert format_signed(segments.delta) == "-0.01"


def test_flat_curve_averages_to_itself():
    scores = [TurnScore(f"d{d}", t, 5) for d in range(4) for t in range(1, 7)]
    curve = per_turn_curve(scores, task="expansion", condition="ST")
    assert all(mean == Decimal("5.00") for mean in curve.means.values())
    assert curve.segment_average(curve.ordered_turns()) == Decimal("5.00")


def test_per_turn_means_average_across_dialogues():
    scores = [TurnScore("a", 1, 8), TurnScore("b", 1, 9), TurnScore("a", 2, 4), TurnScore("b", 2, 5)]
    curve = per_turn_curve(scores, task="expansion", condition="MT")
    assert curve.means == {1: Decimal("8.50"), 2: Decimal("4.50")}
    assert curve.counts == {1: 2, 2: 2}


def test_coverage_guard():
    scores = [TurnScore("a", 1, 8)]
    with pytest.raises(Exception, match="scored"):
        per_turn_curve(
            scores, task="expansion", condition="MT", min_coverage=0.9, expected_turn_count=10
        )


def test_summarize_replicates_published_task_means():
    consistent_row = {
        "expansion": {"st": 8.20, "mt": 9.03},
        "follow-up": {"st": 8.64, "mt": 8.86},
        "refinement": {"st": 7.36, "mt": 7.26},
    }
    summary = summarize(consistent_row)
    assert summary.st_avg == Decimal("8.07")
    assert summary.mt_avg == Decimal("8.38")
    assert format_signed(summary.delta) == "+0.31"

    sharegpt_row = {
        "expansion": {"st": 7.77, "mt": 8.09},
        "follow-up": {"st": 8.42, "mt": 8.51},
        "refinement": {"st": 6.01, "mt": 6.20},
    }
    assert summarize(sharegpt_row).st_avg == Decimal("7.40")


def test_summarize_equal_means_zero_delta():
    means = {name: {"st": 6.5, "mt": 6.5} for name in ("expansion", "refinement", "follow-up")}
    summary = summarize(means)
    assert summary.st_avg == summary.mt_avg == Decimal("6.50")
    assert format_signed(summary.delta) == "+0.00"


def test_summarize_missing_task_errors():
    with pytest.raises(ValueError, match="refinement"):
        summarize({"expansion": {"st": 1, "mt": 1}, "follow-up": {"st": 1, "mt": 1}})


# --- artifact IO ------------------------------------------------------------------


def test_transcript_jsonl_round_trip(tmp_path):
    task = _refinement()
    results = run_mt(task, MockBackend(seed=1))
    path = write_transcript_jsonl(results, tmp_path / "mt.jsonl")
    reloaded = read_transcript_jsonl(path)
    assert [(r.dialogue_id, r.turn, r.messages) for r in reloaded] == [
        (r.dialogue_id, r.turn, r.messages) for r in results
    ]
    first = json.loads(path.read_text().splitlines()[0])
    assert first["messages_sent"] == 1 and first["condition"] == "MT"


def test_curve_csv_round_trip_preserves_boundary(tmp_path):
    curve = _curve_from_rows()
    path = write_curve_csv(curve, tmp_path / "refinement_mt.csv")
    text = path.read_text().splitlines()
    assert text[0] == "# task=refinement condition=MT boundary=7"
    assert text[1] == "turn,mean,n"
    reloaded = read_curve_csv(path)
    assert reloaded.boundary == 7
    assert reloaded.means == curve.means
    assert reloaded.task == "refinement" and reloaded.condition == "MT"


def test_runs_parallel_dialogues_match_serial():
    task = _refinement(3)
    serial_mt = run_mt(task, MockBackend(seed=5))
    threaded_mt = run_mt(task, MockBackend(seed=5), workers=3)
    assert [(r.dialogue_id, r.turn, r.response) for r in serial_mt] == [
        (r.dialogue_id, r.turn, r.response) for r in threaded_mt
    ]
    serial_st = run_st(task, MockBackend(seed=5))
    threaded_st = run_st(task, MockBackend(seed=5), workers=3)
    assert [r.prompt_sha256 for r in serial_st] == [r.prompt_sha256 for r in threaded_st]


def test_judge_transcript_skips_errored_turns_and_parallelizes():
    task = _refinement()
    backend = ScriptedChatBackend(["reply one", "reply two"])
    results = run_mt(task, backend)  # third turn errored, dialogue aborted
    verdicts, failures = judge_transcript(results, MockBackend(seed=2), task_name=task.name)
    assert len(verdicts) == 2
    assert not failures
    threaded, _ = judge_transcript(results, MockBackend(seed=2), task_name=task.name, workers=2)
    assert [(v.record_id, v.turn_index, v.score) for v in verdicts] == [
        (v.record_id, v.turn_index, v.score) for v in threaded
    ]


def test_judge_transcript_records_unparseable_failures():
    task = _refinement()
    results = run_mt(task, MockBackend(seed=1))[:2]
    bad_judge = ScriptedChatBackend(["nope", "still nope", "8", "8"])
    verdicts, failures = judge_transcript(results, bad_judge, task_name=task.name)
    assert len(verdicts) == 1
    assert len(failures) == 1
    assert failures[0][0] == "ref-0"
