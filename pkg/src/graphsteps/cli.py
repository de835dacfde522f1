"""Command-line front end for the whole pipeline.

Subcommands: generate, annotate-mcts, search, evaluate, build-prefs, stats.
Flags override config-file values (--config takes a JSON object whose keys
are the long flag names with dashes replaced by underscores).

Exit codes: 0 success, 1 data error, 2 backend error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import gateway, mcts, pipeline, search
from .evaluation import EvaluationError, evaluate_run, exact_match, gold_from_record
from .graphs import GenerationExhaustedError, Graph
from .tasks import TaskKind
from .trajectories import PerturbationError

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_BACKEND_ERROR = 2

_DATA_ERRORS = (
    EvaluationError, pipeline.PipelineError, PerturbationError,
    GenerationExhaustedError, search.SearchError, ValueError, KeyError,
    FileNotFoundError, json.JSONDecodeError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValueError(message)


def _all_tasks(spec_text):
    if spec_text == "all":
        return list(TaskKind)
    return [TaskKind(t.strip()) for t in spec_text.split(",") if t.strip()]


def instance_from_record(rec):
    from .tasks import TaskInstance

    kind = TaskKind(rec["task"])
    return TaskInstance(
        instance_id=rec["id"],
        kind=kind,
        graph=Graph.from_record(rec["graph"]),
        args=tuple(rec.get("args", ())),
        gold=gold_from_record(rec),
        prompt=rec["question"],
    )


def _load_instances(path):
    return [instance_from_record(r) for r in pipeline.read_jsonl(path)]


def _pairs_with_traces(instances):
    from .tasks import solve

    return [(inst, solve(inst.kind, inst.graph, inst.args)[1]) for inst in instances]


def _make_backends(args, instances):
    name = args.backend
    if name == "http":
        if not args.backend_url:
            raise ValueError("--backend-url is required with --backend http")
        generator = gateway.HttpChatBackend(
            args.backend_url, args.model, timeout=args.timeout,
            max_retries=args.retries, concurrency=args.concurrency,
        )
        scorer = gateway.HttpStepScorer(
            args.backend_url, args.model, timeout=args.timeout,
            max_retries=args.retries, concurrency=args.concurrency,
            mode=args.scorer_mode,
        )
        return generator, scorer
    entries = gateway.oracle_entries(_pairs_with_traces(instances))
    scorer = gateway.OracleScorer(entries)
    if name == "mock-oracle":
        return gateway.OracleGenerator(entries), scorer
    if name == "mock-script":
        return gateway.SyntheticPoolBackend(
            entries, p_correct=args.p_correct, seed=args.seed
        ), scorer
    raise ValueError(f"unknown backend {name!r}")


def _parallel_map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# subcommands

def _cmd_generate(args):
    kinds = _all_tasks(args.tasks)
    pairs = pipeline.make_instances(kinds, args.count, args.tier, args.seed,
                                    family=args.family)
    out = Path(args.out)
    pipeline._write_jsonl(out / "instances.jsonl",
                          [pipeline.instance_record(i) for i, _ in pairs])
    records = pipeline.build_trajectory_records(
        pairs, negatives_per_positive=args.negatives, seed=args.seed
    )
    kept, rejected = pipeline.quality_filter(records)
    pipeline._write_jsonl(out / "trajectory_records.jsonl",
                          [r.to_json_dict() for r in kept])
    print(f"generated {len(pairs)} instances, {len(kept)} trajectory records "
          f"({len(rejected)} rejected) -> {out}")
    return EXIT_OK


def _cmd_annotate(args):
    instances = _load_instances(args.dataset)
    generator, _ = _make_backends(args, instances)
    params = mcts.AnnotatorParams(
        rollouts_per_estimate=args.k, budget=args.budget, temperature=args.temperature
    )
    pairs = _pairs_with_traces(instances)
    records = pipeline.build_mc_records(pairs, generator, params)
    kept, rejected = pipeline.quality_filter(records)
    pipeline._write_jsonl(args.out, [r.to_json_dict() for r in kept])
    print(f"annotated {len(instances)} problems -> {len(kept)} records "
          f"({len(rejected)} rejected) -> {args.out}")
    return EXIT_OK


def _cmd_search(args):
    instances = _load_instances(args.dataset)
    generator, scorer = _make_backends(args, instances)
    method = search.AggregationMethod.from_string(args.method)

    def run_one(inst):
        if args.strategy == "beam":
            result = search.beam_search(
                inst, args.n, args.k, generator, scorer, temperature=args.temperature
            )
        else:
            result = search.best_of_n(
                inst, args.n, generator, scorer, method, temperature=args.temperature
            )
        judgement = exact_match(result.final.raw, inst.gold, inst.kind)
        row = {
            "id": inst.instance_id,
            "task": inst.kind.value,
            "strategy": args.strategy,
            "method": args.method,
            "n": args.n,
            "chosen": result.final.raw,
            "correct": judgement.correct,
            "candidates": [
                {
                    "answer": c.raw_answer,
                    "step_scores": c.step_scores,
                    "score": search.solution_score(c, method),
                }
                for c in result.candidates
            ],
        }
        if args.strategy == "beam":
            row["k"] = args.k
            row["expansions_per_survivor"] = args.n // args.k
        return row

    rows = _parallel_map(run_one, instances, args.workers)
    pipeline._write_jsonl(args.out, rows)
    correct = sum(r["correct"] for r in rows)
    print(f"searched {len(rows)} instances ({correct} correct) -> {args.out}")
    return EXIT_OK


def _cmd_evaluate(args):
    manifest = pipeline.read_jsonl(args.manifest)
    dataset = {r["id"]: r for r in pipeline.read_jsonl(args.dataset)}
    report = evaluate_run(manifest, dataset)
    print(report.to_table())
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    return EXIT_OK


def _cmd_build_prefs(args):
    instances = _load_instances(args.dataset)
    generator, scorer = _make_backends(args, instances)
    params = pipeline.PreferenceParams(n=args.n, beam_k=args.k,
                                       temperature=args.temperature)
    pairs = pipeline.build_preference_pairs(instances, generator, scorer, params)
    pipeline._write_jsonl(args.out, [p.to_json_dict() for p in pairs])
    print(f"built {len(pairs)} preference pairs from {len(instances)} problems "
          f"-> {args.out}")
    return EXIT_OK


def _cmd_stats(args):
    records = []
    for path in args.records:
        records.extend(
            pipeline.DatasetRecord.from_json_dict(d) for d in pipeline.read_jsonl(path)
        )
    pairs = pipeline.read_jsonl(args.pairs) if args.pairs else []
    sft = pipeline.read_jsonl(args.sft) if args.sft else ()
    stats = pipeline.compute_stats(records, pairs, sft)
    text = json.dumps(stats, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _add_backend_flags(p):
    p.add_argument("--backend", default="mock-oracle",
                   choices=["mock-oracle", "mock-script", "http"])
    p.add_argument("--backend-url", default=os.environ.get("GRAPHSTEPS_BACKEND_URL"))
    p.add_argument("--model", default="default")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--concurrency", type=int, default=8)
    p.add_argument("--scorer-mode", default="logprob", choices=["logprob", "scalar"])
    p.add_argument("--p-correct", type=float, default=0.25,
                   help="gold-sample rate of the mock-script backend")
    p.add_argument("--temperature", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)


def build_parser():
    parser = _Parser(prog="graphsteps", description=__doc__)
    parser.add_argument("--config", help="JSON file with default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="task instances + trajectory records")
    p.add_argument("--tasks", default="all")
    p.add_argument("--tier", default="tiny", choices=["tiny", "small", "medium", "large"])
    p.add_argument("--count", type=int, default=20, help="problems per task")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--family", default=None,
                   choices=[None, "random", "small-world", "scale-free"])
    p.add_argument("--negatives", type=int, default=1,
                   help="perturbed variants per positive trajectory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("annotate-mcts", help="Monte Carlo step labels")
    p.add_argument("--dataset", required=True, help="instances.jsonl")
    p.add_argument("--budget", type=int, default=8, help="max tree selections")
    p.add_argument("--k", type=int, default=8, help="rollouts per estimate")
    p.add_argument("--out", required=True)
    _add_backend_flags(p)
    p.set_defaults(func=_cmd_annotate)

    p = sub.add_parser("search", help="best-of-n or beam search over a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--strategy", default="best-of-n", choices=["best-of-n", "beam"])
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--k", type=int, default=2, help="beam width")
    p.add_argument("--method", default="prm-last-vote",
                   choices=[m.value for m in search.AggregationMethod])
    p.add_argument("--out", required=True)
    _add_backend_flags(p)
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("evaluate", help="accuracy report from a run manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("build-prefs", help="DPO preference pairs")
    p.add_argument("--dataset", required=True)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--k", type=int, default=2, help="beam width for preferred outputs")
    p.add_argument("--out", required=True)
    _add_backend_flags(p)
    p.set_defaults(func=_cmd_build_prefs)

    p = sub.add_parser("stats", help="dataset statistics sidecar")
    p.add_argument("--records", nargs="+", required=True)
    p.add_argument("--pairs", default=None)
    p.add_argument("--sft", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_stats)

    return parser


def _apply_config(parser, argv):
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    config_path = argv[idx + 1]
    with open(config_path, encoding="utf-8") as fh:
        defaults = json.load(fh)
    for action in parser._subparsers._group_actions[0].choices.values():
        known = {a.dest for a in action._actions}
        action.set_defaults(**{k: v for k, v in defaults.items() if k in known})
    return argv[:idx] + argv[idx + 2:]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except gateway.BackendError as exc:
        print(json.dumps({"error": "backend", "message": str(exc)}), file=sys.stderr)
        return EXIT_BACKEND_ERROR
    except _DATA_ERRORS as exc:
        print(json.dumps({"error": "data", "message": str(exc)}), file=sys.stderr)
        return EXIT_DATA_ERROR
    except OSError as exc:
        print(json.dumps({"error": "data", "message": str(exc)}), file=sys.stderr)
        return EXIT_DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
