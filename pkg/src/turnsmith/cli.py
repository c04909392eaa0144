"""Command-line front end.

Every subcommand maps 1:1 onto a library operation, layers its configuration
as flags > environment > config file > defaults, validates before any network
call, and writes a run manifest (config snapshot, seed, input hashes) next to
its outputs. Exit codes: 0 success, 1 operational failure, 2 bad config or
usage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import consistency as consistency_mod
from . import dataset_io, judging, mteval, report, synthesis, taxonomy as taxonomy_mod
from .backends import GenerationParams
from .config import RunConfig, build_chat_backend, build_embedding_backend, hash_input_file, load_config, write_run_manifest
from .errors import ConfigError, TurnsmithError
from .hashing import derive_seed
from .templates import load_template


def _dump(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def _write_jsonl(records: list[dict], path: Path) -> Path:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(_dump(r) for r in records) + "\n", "utf-8")
    tmp.replace(path)
    return path


def _read_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text("utf-8").splitlines() if line.strip()]


def _out_path(config: RunConfig, out_file: str | None, default_name: str) -> Path:
    if out_file:
        path = Path(out_file)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / default_name


def _gen_params(config: RunConfig, *, judge: bool = False) -> GenerationParams:
    return GenerationParams(
        model=(config.judge_model if judge else config.chat_model),
        temperature=config.judge_temperature if judge else config.temperature,
        max_tokens=config.max_tokens,
        top_p=config.top_p,
    )


def _template(config: RunConfig, name: str):
    return load_template(name, search_dir=config.template_dir or None)


def _intent_list(config: RunConfig, selector: str) -> tuple[taxonomy_mod.Taxonomy, list[str] | None]:
    tax = taxonomy_mod.load_taxonomy(config.taxonomy or None)
    if selector == "all":
        return tax, None
    ids = [s.strip() for s in selector.split(",") if s.strip()]
    for intent_id in ids:
        tax.get(intent_id)  # raises on unknown ids
    return tax, ids


# --- subcommand handlers ------------------------------------------------------


def cmd_taxonomy_list(args, config: RunConfig) -> int:
    tax = taxonomy_mod.load_taxonomy(config.taxonomy or None)
    if args.json:
        print(_dump(taxonomy_mod.taxonomy_to_dict(tax)))
    else:
        for category in tax.categories:
            marker = " (reconstructed)" if category.reconstructed else ""
            print(f"{category.id}: {category.name}{marker} [{len(category.flow)} flow steps]")
    return 0


def cmd_taxonomy_validate(args, config: RunConfig) -> int:
    tax = taxonomy_mod.load_taxonomy(config.taxonomy or None)
    print(_dump({"source": tax.source, "categories": len(tax.categories), "ok": True}))
    return 0


def cmd_synth_scenarios(args, config: RunConfig) -> int:
    tax, ids = _intent_list(config, args.intents)
    categories = tax.categories if ids is None else [tax.get(i) for i in ids]
    backend = build_chat_backend(config)
    records = []
    for intent in categories:
        seed = derive_seed(config.seed, intent.id)
        if args.topics_file:
            scenarios = taxonomy_mod.scenarios_from_file(intent, args.topics_file, seed, args.count)
        else:
            scenarios = taxonomy_mod.generate_scenarios(
                intent, args.count, seed, backend, _gen_params(config),
                template=_template(config, "scenario_gen"),
            )
        records.extend(taxonomy_mod.scenario_to_dict(s) for s in scenarios)
    path = _write_jsonl(records, _out_path(config, args.out_file, "scenarios.jsonl"))
    write_run_manifest(path.parent, "synth scenarios", config, outputs=[str(path)])
    print(_dump({"scenarios": len(records), "path": str(path)}))
    return 0


def cmd_synth_queries(args, config: RunConfig) -> int:
    tax = taxonomy_mod.load_taxonomy(config.taxonomy or None)
    backend = build_chat_backend(config)
    scenarios = [taxonomy_mod.scenario_from_dict(r) for r in _read_jsonl(Path(args.scenarios))]
    records = []
    for scenario in scenarios:
        query_set, repair = synthesis.generate_query_set(
            scenario,
            tax.get(scenario.intent_id),
            backend,
            _gen_params(config),
            template=_template(config, "query_gen"),
            min_turns=config.min_turns,
            max_turns=config.max_turns,
            repair_budget=config.repair_budget,
        )
        records.append(
            {
                "intent_id": scenario.intent_id,
                "topic": scenario.topic,
                "seed": scenario.seed,
                "category": query_set.category,
                "turns": list(query_set.turns),
                "prompt_sha256": query_set.prompt_sha256,
                "repair_attempts": repair.attempts,
            }
        )
    path = _write_jsonl(records, _out_path(config, args.out_file, "queries.jsonl"))
    write_run_manifest(
        path.parent, "synth queries", config,
        inputs={args.scenarios: hash_input_file(args.scenarios)}, outputs=[str(path)],
    )
    print(_dump({"query_sets": len(records), "path": str(path)}))
    return 0


def cmd_synth_responses(args, config: RunConfig) -> int:
    backend = build_chat_backend(config)
    dialogues = []
    for record in _read_jsonl(Path(args.queries)):
        scenario = taxonomy_mod.ScenarioSeed(
            intent_id=record["intent_id"], topic=record["topic"], seed=int(record["seed"])
        )
        query_set = synthesis.QuerySet(
            scenario=scenario,
            category=record.get("category", record["topic"]),
            turns=tuple(record["turns"]),
            prompt_sha256=record.get("prompt_sha256", ""),
        )
        dialogue, _ = synthesis.generate_responses(
            query_set, backend, _gen_params(config),
            template=_template(config, "response_gen"),
            repair_budget=config.repair_budget,
        )
        dialogues.append(dialogue)
    path = _out_path(config, args.out_file, "dialogues.jsonl")
    dataset_io.write_dialogues_jsonl(dialogues, path)
    write_run_manifest(
        path.parent, "synth responses", config,
        inputs={args.queries: hash_input_file(args.queries)}, outputs=[str(path)],
    )
    print(_dump({"dialogues": len(dialogues), "path": str(path)}))
    return 0


def cmd_synth_corpus(args, config: RunConfig) -> int:
    tax, ids = _intent_list(config, args.intents)
    backend = build_chat_backend(config)
    result = synthesis.synthesize_corpus(
        tax,
        args.scenarios,
        args.per_scenario,
        backend,
        _gen_params(config),
        seed=config.seed,
        intent_ids=ids,
        topics_file=args.topics_file,
        min_turns=config.min_turns,
        max_turns=config.max_turns,
        repair_budget=config.repair_budget,
        failure_threshold=config.failure_threshold,
        fail_fast=args.fail_fast,
        workers=config.workers,
        query_template=_template(config, "query_gen"),
        response_template=_template(config, "response_gen"),
    )
    path = _out_path(config, args.out_file, "corpus.jsonl")
    dataset_io.write_dialogues_jsonl(result.dialogues, path)
    write_run_manifest(path.parent, "synth corpus", config, outputs=[str(path)])
    print(
        _dump(
            {
                "dialogues": len(result.dialogues),
                "planned": result.planned,
                "failures": len(result.failures),
                "duplicates": result.duplicates,
                "path": str(path),
            }
        )
    )
    return 0


def cmd_score(args, config: RunConfig) -> int:
    dialogues = dataset_io.read_dialogues_jsonl(args.in_file)
    embedder = build_embedding_backend(config, args.embedder)
    result = consistency_mod.corpus_consistency(dialogues, embedder, mode=args.mode)
    path = _out_path(config, args.out_file, "scores.jsonl")
    consistency_mod.write_scores_jsonl(result, path)
    write_run_manifest(
        path.parent, "score", config,
        inputs={args.in_file: hash_input_file(args.in_file)}, outputs=[str(path)],
    )
    print(_dump({"mean": result.mean, "scored": result.scored, "skipped": result.skipped, "path": str(path)}))
    return 0


def cmd_partition(args, config: RunConfig) -> int:
    scores = consistency_mod.read_scores_jsonl(args.scores)
    partition = consistency_mod.partition_by_consistency(scores, args.k, config.seed)
    path = _out_path(config, args.out_file, "partition.json")
    path.write_text(
        _dump(
            {
                "high": list(partition.high),
                "low": list(partition.low),
                "random": list(partition.random),
                "k": partition.k,
                "seed": partition.seed,
            }
        )
        + "\n",
        "utf-8",
    )
    write_run_manifest(
        path.parent, "partition", config,
        inputs={args.scores: hash_input_file(args.scores)}, outputs=[str(path)],
    )
    print(_dump({"k": partition.k, "path": str(path)}))
    return 0


def _load_benchmark_records(benchmark: str, data_path: str):
    if benchmark == "light":
        records, _ = dataset_io.load_light(data_path)
    elif benchmark == "topdial":
        records, _ = dataset_io.load_topdial(data_path)
    else:
        raise ConfigError(f"unsupported benchmark {benchmark!r} for this command")
    return records


def cmd_collect(args, config: RunConfig) -> int:
    records = _load_benchmark_records(args.benchmark, args.data)
    backend = build_chat_backend(config)
    collected = judging.collect_responses(
        records, backend, _gen_params(config), selection=args.select, workers=config.workers,
        template=_template(config, f"{args.benchmark}_agent"),
    )
    rows = [
        {
            "record_id": c.record_id,
            "turn_index": c.turn_index,
            "prompt_sha256": c.prompt_sha256,
            "response": c.response,
            "error": c.error,
        }
        for c in collected
    ]
    path = _write_jsonl(rows, _out_path(config, args.out_file, f"{args.benchmark}_responses.jsonl"))
    write_run_manifest(
        path.parent, "collect", config,
        inputs={args.data: hash_input_file(args.data)}, outputs=[str(path)],
    )
    failures = sum(1 for c in collected if c.error)
    print(_dump({"responses": len(rows), "failures": failures, "path": str(path)}))
    return 0


def cmd_judge(args, config: RunConfig) -> int:
    judge_backend = build_chat_backend(config, judge=True)
    params = _gen_params(config, judge=True)
    if args.benchmark == "mteval":
        task = dataset_io.load_mteval(args.data)
        results = mteval.read_transcript_jsonl(args.responses)
        verdicts, failures = mteval.judge_transcript(
            results, judge_backend, params, task_name=task.name, workers=config.workers,
            template=_template(config, "mteval_judge"),
        )
    else:
        records = {r.id: r for r in _load_benchmark_records(args.benchmark, args.data)}
        verdicts = []
        failures = []
        for row in _read_jsonl(Path(args.responses)):
            if row.get("error") or not row.get("response", "").strip():
                failures.append((row["record_id"], row["turn_index"], row.get("error") or "empty response"))
                continue
            record = records.get(row["record_id"])
            if record is None:
                failures.append((row["record_id"], row["turn_index"], "unknown record id"))
                continue
            try:
                verdicts.append(
                    judging.judge_response(
                        record, int(row["turn_index"]), row["response"], judge_backend, params,
                        template=_template(config, f"{args.benchmark}_judge"),
                    )
                )
            except TurnsmithError as exc:
                failures.append((row["record_id"], row["turn_index"], str(exc)))
    path = judging.write_verdicts_jsonl(verdicts, _out_path(config, args.out_file, "verdicts.jsonl"), keep_raw=args.keep_raw)
    write_run_manifest(
        path.parent, "judge", config,
        inputs={args.data: hash_input_file(args.data), args.responses: hash_input_file(args.responses)},
        outputs=[str(path)],
    )
    summary = judging.aggregate_verdicts(verdicts) if verdicts else None
    print(
        _dump(
            {
                "verdicts": len(verdicts),
                "failures": len(failures),
                "overall": f"{summary.overall:.2f}" if summary else None,
                "path": str(path),
            }
        )
    )
    return 0


def cmd_bench(args, config: RunConfig) -> int:
    task = dataset_io.load_mteval(args.task)
    backend = build_chat_backend(config)
    params = _gen_params(config)
    if args.condition == "mt":
        results = mteval.run_mt(task, backend, params, workers=config.workers)
    else:
        results = mteval.run_st(task, backend, params, workers=config.workers)
    path = _out_path(config, args.out_file, f"{task.name}_{args.condition}.jsonl")
    mteval.write_transcript_jsonl(results, path)
    write_run_manifest(
        path.parent, f"bench {args.condition}", config,
        inputs={args.task: hash_input_file(args.task)}, outputs=[str(path)],
    )
    errors = sum(1 for r in results if r.error)
    print(
        _dump(
            {
                "task": task.name,
                "boundary": task.boundary,
                "turns": len(results),
                "errors": errors,
                "path": str(path),
            }
        )
    )
    return 0


def cmd_export(args, config: RunConfig) -> int:
    dialogues = dataset_io.read_dialogues_jsonl(args.in_file)
    train_path = _out_path(config, args.out_file, "train.jsonl")
    dataset_io.export_chat_jsonl(dialogues, train_path)
    outputs = [str(train_path)]
    if args.manifest:
        overrides = {}
        if args.epochs is not None:
            overrides["epochs"] = args.epochs
        if args.learning_rate is not None:
            overrides["learning_rate"] = args.learning_rate
        manifest_path = train_path.with_suffix(".manifest.txt")
        dataset_io.emit_training_manifest(train_path, manifest_path, **overrides)
        outputs.append(str(manifest_path))
    write_run_manifest(
        train_path.parent, "export", config,
        inputs={args.in_file: hash_input_file(args.in_file)}, outputs=outputs,
    )
    print(_dump({"dialogues": len(dialogues), "outputs": outputs}))
    return 0


def cmd_stats(args, config: RunConfig) -> int:
    path = Path(args.in_file)
    with path.open("r", encoding="utf-8") as fh:
        head = fh.read(4096)
    if '"conversations"' in head:
        records, _ = dataset_io.load_sharegpt(path)
        stats = dataset_io.corpus_stats(records)
    else:
        stats = dataset_io.corpus_stats(dataset_io.read_dialogues_jsonl(path))
    payload = {
        "n_conversations": stats.n_conversations,
        "n_utterances": stats.n_utterances,
        "turn_histogram": {str(k): v for k, v in stats.turn_histogram.items()},
        "mean_turns": stats.mean_turns,
    }
    print(_dump(payload))
    return 0


def cmd_report(args, config: RunConfig) -> int:
    outputs = []
    if args.curves:
        curves = [mteval.read_curve_csv(p) for p in args.curves]
        svg_path = Path(args.svg) if args.svg else Path(args.curves[0]).with_suffix(".svg")
        report.write_curves_svg(curves, svg_path, boundary=args.boundary)
        outputs.append(str(svg_path))
        print(_dump({"curves": len(curves), "svg": str(svg_path)}))
    elif args.verdicts:
        verdicts = judging.read_verdicts_jsonl(args.verdicts)
        if not verdicts:
            raise ConfigError(f"no verdicts in {args.verdicts}")
        scores = mteval.turn_scores_from_verdicts(verdicts)
        curve = mteval.per_turn_curve(
            scores, task=args.task or "task", condition=args.condition or "MT", boundary=args.boundary
        )
        base = f"{curve.task}_{curve.condition.lower()}"
        csv_path = _out_path(config, args.out_file, f"{base}.csv")
        mteval.write_curve_csv(curve, csv_path)
        svg_path = csv_path.with_suffix(".svg")
        report.write_curves_svg([curve], svg_path)
        outputs.extend([str(csv_path), str(svg_path)])
        payload = {"turns": len(curve.means), "csv": str(csv_path), "svg": str(svg_path)}
        if curve.boundary is not None:
            segments = mteval.segment_summary(curve)
            payload["segments"] = {
                "first": f"{segments.first:.2f}",
                "second": f"{segments.second:.2f}",
                "delta": f"{segments.delta:+.2f}",
            }
        print(_dump(payload))
    elif args.summary_verdicts:
        verdicts = judging.read_verdicts_jsonl(args.summary_verdicts)
        if not verdicts:
            raise ConfigError(f"no verdicts in {args.summary_verdicts}")
        summary = judging.aggregate_verdicts(verdicts)
        csv_path = _out_path(config, args.out_file, "summary.csv")
        judging.write_summary_csv(summary, args.model or "model", csv_path)
        outputs.append(str(csv_path))
        print(_dump({"overall": f"{summary.overall:.2f}", "csv": str(csv_path)}))
    elif args.tasks_summary:
        task_means = json.loads(Path(args.tasks_summary).read_text("utf-8"))
        summary = mteval.summarize(task_means)
        csv_path = _out_path(config, args.out_file, "bench_summary.csv")
        report.write_bench_summary_csv(summary, task_means, csv_path)
        outputs.append(str(csv_path))
        print(
            _dump(
                {
                    "st_avg": f"{summary.st_avg:.2f}",
                    "mt_avg": f"{summary.mt_avg:.2f}",
                    "delta": f"{summary.delta:+.2f}",
                    "csv": str(csv_path),
                }
            )
        )
    else:
        raise ConfigError("report needs one of --curves, --verdicts, --summary-verdicts, --tasks-summary")
    if outputs:
        write_run_manifest(Path(outputs[0]).parent, "report", config, outputs=outputs)
    return 0


# --- parser -------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("run configuration")
    group.add_argument("--config", help="YAML/JSON config file")
    group.add_argument("--out", help="output directory (default: out)")
    group.add_argument("--seed", type=int, help="master randomness seed")
    group.add_argument("--backend", choices=["mock", "openai"], help="chat backend kind")
    group.add_argument("--base-url", dest="base_url", help="OpenAI-compatible endpoint base URL")
    group.add_argument("--chat-model", dest="chat_model", help="chat model identifier")
    group.add_argument("--judge-model", dest="judge_model", help="judge model identifier")
    group.add_argument("--embed-model", dest="embed_model", help="embedding model identifier")
    group.add_argument("--api-key-env", dest="api_key_env", help="env var holding the API key")
    group.add_argument("--temperature", type=float, help="sampling temperature (default 0.9)")
    group.add_argument("--judge-temperature", dest="judge_temperature", type=float, help="judge temperature (default 0.0)")
    group.add_argument("--max-tokens", dest="max_tokens", type=int, help="completion token cap (default: provider maximum)")
    group.add_argument("--top-p", dest="top_p", type=float, help="nucleus sampling parameter")
    group.add_argument("--timeout", type=float, help="HTTP timeout in seconds")
    group.add_argument("--max-attempts", dest="max_attempts", type=int, help="retry budget for transient failures")
    group.add_argument("--max-in-flight", dest="max_in_flight", type=int, help="bound on concurrent backend requests")
    group.add_argument("--workers", type=int, help="parallel pipeline workers")
    group.add_argument("--taxonomy", help="taxonomy file (default: builtin)")
    group.add_argument("--template-dir", dest="template_dir", help="directory of prompt template overrides")
    group.add_argument("--min-turns", dest="min_turns", type=int, help="minimum queries per dialogue")
    group.add_argument("--max-turns", dest="max_turns", type=int, help="maximum queries per dialogue")
    group.add_argument("--repair-budget", dest="repair_budget", type=int, help="regenerations allowed per invalid completion")
    group.add_argument("--failure-threshold", dest="failure_threshold", type=float, help="tolerated corpus failure ratio")


_CONFIG_FLAGS = (
    "out", "seed", "backend", "base_url", "chat_model", "judge_model", "embed_model",
    "api_key_env", "temperature", "judge_temperature", "max_tokens", "top_p", "timeout",
    "max_attempts", "max_in_flight", "workers", "taxonomy", "template_dir",
    "min_turns", "max_turns", "repair_budget", "failure_threshold",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="turnsmith",
        description="Synthesize skeleton-guided multi-turn dialogues, score chat consistency, and run judge harnesses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_tax = sub.add_parser("taxonomy", help="inspect or validate intent taxonomies")
    tax_sub = p_tax.add_subparsers(dest="subcommand", required=True)
    p = tax_sub.add_parser("list", help="list intent categories")
    _add_common(p)
    p.add_argument("--json", action="store_true", help="emit the full taxonomy as JSON")
    p.set_defaults(handler=cmd_taxonomy_list)
    p = tax_sub.add_parser("validate", help="load the taxonomy and report validity")
    _add_common(p)
    p.set_defaults(handler=cmd_taxonomy_validate)

    p_synth = sub.add_parser("synth", help="dialogue synthesis stages")
    synth_sub = p_synth.add_subparsers(dest="subcommand", required=True)
    p = synth_sub.add_parser("scenarios", help="generate scenario topics per intent")
    _add_common(p)
    p.add_argument("--intents", default="all", help="'all' or comma-separated intent ids")
    p.add_argument("--count", type=int, default=5, help="scenarios per intent")
    p.add_argument("--topics-file", dest="topics_file", help="offline topic source, one per line")
    p.add_argument("--out-file", dest="out_file", help="output path (default: <out>/scenarios.jsonl)")
    p.set_defaults(handler=cmd_synth_scenarios)
    p = synth_sub.add_parser("queries", help="generate query sets for scenarios")
    _add_common(p)
    p.add_argument("--scenarios", required=True, help="scenarios JSONL from 'synth scenarios'")
    p.add_argument("--out-file", dest="out_file", help="output path (default: <out>/queries.jsonl)")
    p.set_defaults(handler=cmd_synth_queries)
    p = synth_sub.add_parser("responses", help="generate single-pass response sets")
    _add_common(p)
    p.add_argument("--queries", required=True, help="query-set JSONL from 'synth queries'")
    p.add_argument("--out-file", dest="out_file", help="output path (default: <out>/dialogues.jsonl)")
    p.set_defaults(handler=cmd_synth_responses)
    p = synth_sub.add_parser("corpus", help="synthesize a full intent-stratified corpus")
    _add_common(p)
    p.add_argument("--intents", default="all", help="'all' or comma-separated intent ids")
    p.add_argument("--scenarios", type=int, required=True, help="scenarios per intent")
    p.add_argument("--per-scenario", dest="per_scenario", type=int, required=True, help="dialogues per scenario")
    p.add_argument("--topics-file", dest="topics_file", help="offline topic source, one per line")
    p.add_argument("--fail-fast", dest="fail_fast", action="store_true", help="abort on the first dialogue failure")
    p.add_argument("--out-file", dest="out_file", help="output path (default: <out>/corpus.jsonl)")
    p.set_defaults(handler=cmd_synth_corpus)

    p = sub.add_parser("score", help="chat-consistency scores for a dialogue corpus")
    _add_common(p)
    p.add_argument("--in", dest="in_file", required=True, help="dialogues JSONL")
    p.add_argument("--embedder", choices=["mock", "live"], default="mock", help="embedding backend")
    p.add_argument("--mode", choices=list(consistency_mod.MODES), default="all_pairs", help="pairing mode")
    p.add_argument("--out-file", dest="out_file", help="output path (default: <out>/scores.jsonl)")
    p.set_defaults(handler=cmd_score)

    p = sub.add_parser("partition", help="split a scored corpus into high/low/random sets")
    _add_common(p)
    p.add_argument("--scores", required=True, help="scores JSONL from 'score'")
    p.add_argument("--k", type=int, required=True, help="size of each partition")
    p.add_argument("--out-file", dest="out_file", help="output path (default: <out>/partition.json)")
    p.set_defaults(handler=cmd_partition)

    p = sub.add_parser("collect", help="teacher-forced response collection on a benchmark")
    _add_common(p)
    p.add_argument("--benchmark", choices=["light", "topdial"], required=True, help="benchmark kind")
    p.add_argument("--data", required=True, help="benchmark data file")
    p.add_argument("--select", choices=["all", "last"], default="all", help="which agent turns to answer")
    p.add_argument("--out-file", dest="out_file", help="output path (default: <out>/<benchmark>_responses.jsonl)")
    p.set_defaults(handler=cmd_collect)

    p = sub.add_parser("judge", help="LLM-judge scoring of collected responses")
    _add_common(p)
    p.add_argument("--benchmark", choices=["light", "topdial", "mteval"], required=True, help="benchmark kind")
    p.add_argument("--data", required=True, help="benchmark data / task file")
    p.add_argument("--responses", required=True, help="responses or transcript JSONL")
    p.add_argument("--keep-raw", dest="keep_raw", action="store_true", help="keep raw judge text in verdicts")
    p.add_argument("--out-file", dest="out_file", help="output path (default: <out>/verdicts.jsonl)")
    p.set_defaults(handler=cmd_judge)

    p_bench = sub.add_parser("bench", help="multi-turn benchmark runs")
    bench_sub = p_bench.add_subparsers(dest="subcommand", required=True)
    for condition, blurb in (("st", "single-turn condition (collapsed context)"), ("mt", "multi-turn condition (full history)")):
        p = bench_sub.add_parser(condition, help=blurb)
        _add_common(p)
        p.add_argument("--task", required=True, help="task JSON file")
        p.add_argument("--out-file", dest="out_file", help="output path (default: <out>/<task>_<condition>.jsonl)")
        p.set_defaults(handler=cmd_bench, condition=condition)

    p = sub.add_parser("export", help="export a corpus as training-ready chat JSONL")
    _add_common(p)
    p.add_argument("--in", dest="in_file", required=True, help="dialogues JSONL")
    p.add_argument("--manifest", action="store_true", help="also emit the training manifest")
    p.add_argument("--epochs", type=int, help="override the manifest's epoch count")
    p.add_argument("--learning-rate", dest="learning_rate", type=float, help="override the manifest's learning rate")
    p.add_argument("--out-file", dest="out_file", help="output path (default: <out>/train.jsonl)")
    p.set_defaults(handler=cmd_export)

    p = sub.add_parser("stats", help="corpus statistics (conversations, utterances, histogram)")
    _add_common(p)
    p.add_argument("--in", dest="in_file", required=True, help="dialogues JSONL or ShareGPT-shape file")
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("report", help="render curves (CSV+SVG) and summary tables")
    _add_common(p)
    p.add_argument("--curves", nargs="+", help="curve CSV file(s) to chart")
    p.add_argument("--svg", help="SVG output path for --curves")
    p.add_argument("--verdicts", help="verdicts JSONL to turn into a per-turn curve")
    p.add_argument("--task", help="task name for the curve")
    p.add_argument("--condition", choices=["ST", "MT"], help="condition label for the curve")
    p.add_argument("--boundary", type=int, help="turn index where a sub-task switch is marked")
    p.add_argument("--summary-verdicts", dest="summary_verdicts", help="verdicts JSONL for a benchmark-by-judge summary table")
    p.add_argument("--model", help="model name for the summary row")
    p.add_argument("--tasks-summary", dest="tasks_summary", help="JSON of per-task ST/MT means for the overall summary")
    p.add_argument("--out-file", dest="out_file", help="output path for the generated table")
    p.set_defaults(handler=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        flag_values = {name: getattr(args, name, None) for name in _CONFIG_FLAGS}
        config = load_config(getattr(args, "config", None), flag_values)
        return args.handler(args, config)
    except ConfigError as exc:
        print(_dump({"error": "config", "message": str(exc)}), file=sys.stderr)
        return 2
    except TurnsmithError as exc:
        print(_dump({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    except OSError as exc:
        print(_dump({"error": "io", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
