"""Teacher-forced prompts, verdict parsing totality, and aggregation arithmetic."""

from __future__ import annotations

from decimal import Decimal

import pytest

from turnsmith.backends import MockBackend, ScriptedChatBackend
from turnsmith.errors import VerdictError
from turnsmith.judging import (
    JudgeVerdict,
    LightRecord,
    ReferenceTurn,
    TopdialRecord,
    aggregate_verdicts,
    agent_turn_indexes,
    collect_responses,
    judge_response,
    overall_average,
    parse_score,
    read_verdicts_jsonl,
    render_agent_prompt,
    render_judge_prompt,
    write_summary_csv,
    write_verdicts_jsonl,
)


def _light() -> LightRecord:
    return LightRecord(
        id="L1",
        user_character="Traveler",
        user_persona="I walk the old roads selling maps.",
        agent_character="Lighthouse Keeper",
        agent_persona="I tend the lamp on the north cliff.",
        setting="The lamp room at dusk.",
        turns=(
            ReferenceTurn("user", "Hail the tower!"),
            ReferenceTurn("agent", "Come up, but mind the rail."),
            ReferenceTurn("user", "How do you keep the flame in a gale?"),
            ReferenceTurn("agent", "Double wicks and no sleep."),
        ),
    )


def _topdial() -> TopdialRecord:
    return TopdialRecord(
        id="T1",
        target_act="Play music",
        target_topic="River Lantern",
        domain_knowledge=(("River Lantern", "Singer", "Mo Yun"),),
        user_profile={"Name": "Hao Tian", "Occupation": "Student"},
        user_personality={"extraversion": "quiet"},
        agent_role="a music companion app persona",
        turns=(
            ReferenceTurn("agent", "Evening! Still on repeat?"),
            ReferenceTurn("user", "Caught me."),
            ReferenceTurn("agent", "Try Mo Yun's ballads."),
            ReferenceTurn("user", "Haven't tried them."),
        ),
    )


# --- prompt rendering -----------------------------------------------------------


def test_light_first_agent_turn_prompt_has_personas_and_only_opening_context():
    record = _light()
    prompt = render_agent_prompt(record, 1)
    assert record.agent_persona in prompt
    assert record.user_persona in prompt
    assert record.setting in prompt
    assert "Hail the tower!" in prompt
    assert "Come up" not in prompt  # the turn being generated is not context
    assert "How do you keep" not in prompt  # nothing after the target turn either


def test_topdial_prompt_substitutes_target():
    prompt = render_agent_prompt(_topdial(), 2)
    assert "Play music" in prompt
    assert "River Lantern" in prompt
    assert "Hao Tian" in prompt
    assert "Evening! Still on repeat?" in prompt and "Caught me." in prompt


def test_user_turn_index_rejected():
    with pytest.raises(ValueError, match="user turn"):
        render_agent_prompt(_light(), 0)
    with pytest.raises(IndexError):
        render_agent_prompt(_light(), 9)


def test_alternation_invariant_enforced():
    with pytest.raises(ValueError, match="alternate"):
        LightRecord(
            id="bad",
            user_character="A",
            user_persona="p",
            agent_character="B",
            agent_persona="p",
            setting="s",
            turns=(ReferenceTurn("user", "x"), ReferenceTurn("user", "y")),
        )


# --- collection -----------------------------------------------------------------


def test_collect_all_agent_turns_teacher_forced():
    record = _light()
    collected = collect_responses([record], MockBackend(seed=1))
    assert [(c.record_id, c.turn_index) for c in collected] == [("L1", 1), ("L1", 3)]
    assert all(c.response for c in collected)


def test_collect_prompts_identical_across_models():
    record_a, record_b = _light(), _topdial()
    run1 = collect_responses([record_a, record_b], MockBackend(seed=1))
    run2 = collect_responses([record_a, record_b], MockBackend(seed=999))
    hashes1 = [(c.record_id, c.turn_index, c.prompt_sha256) for c in run1]
    hashes2 = [(c.record_id, c.turn_index, c.prompt_sha256) for c in run2]
    assert hashes1 == hashes2  # reference history only; model outputs never leak in
    assert [c.response for c in run1] != [c.response for c in run2]


def test_collect_last_turn_only():
    collected = collect_responses([_light()], MockBackend(seed=1), selection="last")
    assert [(c.record_id, c.turn_index) for c in collected] == [("L1", 3)]


def test_collect_records_failures_and_continues():
    backend = ScriptedChatBackend(["only one reply"])
    collected = collect_responses([_light()], backend)
    assert collected[0].response == "only one reply"
    assert collected[1].error
    assert "exhausted" in collected[1].error


def test_agent_turn_indexes_selection_validation():
    with pytest.raises(ValueError, match="selection"):
        agent_turn_indexes(_light(), "some")


# --- verdict parsing --------------------------------------------------------------


@pytest.mark.parametrize("score", range(1, 11))
def test_parse_totality_in_range(score):
    assert parse_score(str(score)) == score
    assert parse_score(f"Score: {score}") == score
    assert parse_score(f"  {score}\n") == score


@pytest.mark.parametrize("text", ["11", "0", "-3", "Score: 42", "no digits here", ""])
def test_parse_rejects_out_of_range_and_prose(text):
    with pytest.raises(VerdictError):
        parse_score(text)


def test_judge_response_plain_and_decorated():
    verdict = judge_response(_light(), 1, "A fine response.", ScriptedChatBackend(["7"]))
    assert verdict.score == 7 and verdict.attempts == 1
    verdict = judge_response(_light(), 1, "A fine response.", ScriptedChatBackend(["Score: 8"]))
    assert verdict.score == 8


def test_judge_response_reasks_once_then_succeeds():
    backend = ScriptedChatBackend(["I will not grade this.", "9"])
    verdict = judge_response(_light(), 1, "resp", backend)
    assert verdict.score == 9
    assert verdict.attempts == 2
    assert len(backend.calls) == 2


def test_judge_response_fails_after_reask():
    backend = ScriptedChatBackend(["nope", "still nope"])
    with pytest.raises(VerdictError, match="re-ask"):
        judge_response(_light(), 1, "resp", backend)


def test_judge_runs_at_temperature_zero_by_default():
    backend = ScriptedChatBackend(["7"])
    judge_response(_topdial(), 0, "resp", backend)
    _, params = backend.calls[0]
    assert params.temperature == 0.0


def test_judge_prompt_contents():
    light_prompt = render_judge_prompt(_light(), 1, "candidate text")
    assert "Agent Character: Lighthouse Keeper" in light_prompt
    assert "candidate text" in light_prompt
    top_prompt = render_judge_prompt(_topdial(), 2, "candidate text")
    assert "Agent Target: Play music, River Lantern" in top_prompt
    assert '"Name": "Hao Tian"' in top_prompt


def test_judge_rejects_empty_response():
    with pytest.raises(ValueError, match="non-empty"):
        judge_response(_light(), 1, "   ", ScriptedChatBackend(["7"]))


# --- aggregation --------------------------------------------------------------------


def _verdict(benchmark: str, judge: str, score: int, i: int = 0) -> JudgeVerdict:
    return JudgeVerdict(record_id=f"r{i}", turn_index=1, score=score, judge_model=judge, benchmark=benchmark)


def test_overall_average_replicates_published_cells():
    assert overall_average([6.94, 7.50, 7.34, 7.51]) == Decimal("7.32")
    assert overall_average([7.48, 7.92, 7.87, 8.05]) == Decimal("7.83")


def test_single_verdict_mean_two_decimals():
    summary = aggregate_verdicts([_verdict("light", "judge-a", 9)])
    assert summary.groups[("light", "judge-a")].mean == Decimal("9.00")
    assert summary.overall == Decimal("9.00")


def test_aggregate_groups_by_benchmark_and_judge():
    verdicts = [
        _verdict("light", "qwen", 7, 1),
        _verdict("light", "qwen", 8, 2),
        _verdict("light", "llama", 6, 3),
        _verdict("topdial", "qwen", 9, 4),
    ]
    summary = aggregate_verdicts(verdicts)
    assert summary.groups[("light", "qwen")].mean == Decimal("7.50")
    assert summary.groups[("light", "qwen")].n == 2
    assert summary.groups[("light", "llama")].mean == Decimal("6.00")
    assert summary.overall == overall_average([Decimal("6.00"), Decimal("7.50"), Decimal("9.00")])


def test_aggregation_mean_linear_under_duplication():
    verdicts = [
        _verdict("light", "qwen", 7, 1),
        _verdict("light", "qwen", 4, 2),
        _verdict("topdial", "qwen", 9, 3),
    ]
    once = aggregate_verdicts(verdicts)
    twice = aggregate_verdicts(verdicts + verdicts)
    assert {k: v.mean for k, v in once.groups.items()} == {k: v.mean for k, v in twice.groups.items()}
    assert once.overall == twice.overall


def test_verdict_jsonl_round_trip_and_summary_csv(tmp_path):
    verdicts = [_verdict("light", "qwen", 7, 1), _verdict("topdial", "qwen", 9, 2)]
    path = write_verdicts_jsonl(verdicts, tmp_path / "verdicts.jsonl")
    reloaded = read_verdicts_jsonl(path)
    assert [(v.record_id, v.score) for v in reloaded] == [("r1", 7), ("r2", 9)]
    summary_path = write_summary_csv(aggregate_verdicts(reloaded), "my-model", tmp_path / "summary.csv")
    lines = summary_path.read_text().splitlines()
    assert lines[0] == "model,light:qwen,topdial:qwen,avg"
    assert lines[1] == "my-model,7.00,9.00,8.00"


def test_score_range_enforced_on_type():
    with pytest.raises(ValueError):
        JudgeVerdict(record_id="r", turn_index=0, score=11, judge_model="j", benchmark="light")


def test_collect_parallel_matches_serial():
    records = [_light(), _topdial()]
    serial = collect_responses(records, MockBackend(seed=1))
    threaded = collect_responses(records, MockBackend(seed=1), workers=4)
    assert [(c.record_id, c.turn_index, c.response) for c in serial] == [
        (c.record_id, c.turn_index, c.response) for c in threaded
    ]
