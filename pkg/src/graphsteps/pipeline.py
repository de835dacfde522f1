"""Assemble, filter, and serialize datasets.

Produces the problem set (instances with gold answers), PRM training
records from both trajectory perturbation and Monte Carlo annotation, an
SFT corpus of gold processes, and DPO preference pairs, plus a statistics
sidecar that tallies everything emitted.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import mcts, search, trajectories
from .evaluation import exact_match
from .graphs import (
    FAMILIES, TIER_RANGES, GenerationExhaustedError, Graph, GraphSpec, density,
    generate_graph, tier_for_count,
)
from .tasks import (
    AnswerType, TaskInstance, TaskKind, answer_to_text, build_prompt, solve,
)
from .trajectories import (
    PerturbationError, PerturbationPlan, StepSequence, applicable_indices,
    encode_training_record, render_trace,
)

_BALANCE_TRIES = 400


class PipelineError(RuntimeError):
    pass


def _sub_seed(*parts):
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


# ---------------------------------------------------------------------------
# instance generation

def make_instance(kind: TaskKind, tier: str, seed: int, family=None, index=0):
    """One task instance: sampled graph, valid args, gold answer, prompt.

    Boolean tasks alternate the target label by index so the emitted set is
    balanced; the graph is redrawn (sparser, for negative targets) until the
    label matches.
    """
    rng = random.Random(_sub_seed(seed, kind.value, tier, index))
    target_label = (index % 2 == 0) if kind.answer_type == AnswerType.BOOLEAN else None
    lo, hi = TIER_RANGES[tier]
    mean_n = (lo + hi) / 2
    for attempt in range(_BALANCE_TRIES):
        fam = family or rng.choice(FAMILIES)
        if kind.directedness == "directed":
            directed = True
        elif kind.directedness == "undirected":
            directed = False
        else:
            directed = rng.random() < 0.5
        edge_prob = None
        if target_label is False:
            # acyclic / disconnected draws only happen in sparse graphs
            fam = "random"
            edge_prob = (1.6 if kind == TaskKind.CYCLE else 2.5) / mean_n
        spec = GraphSpec(
            family=fam,
            directed=directed,
            size_tier=tier,
            weighted=kind.weighted,
            seed=rng.getrandbits(48),
            edge_prob=edge_prob,
            require_connected=kind.requires_connected,
        )
        try:
            graph = generate_graph(spec)
        except GenerationExhaustedError:
            continue
        args = _pick_args(kind, graph, rng)
        if args is None:
            continue
        try:
            gold, trace = solve(kind, graph, args)
        except Exception:
            continue
        if target_label is not None and gold != target_label:
            continue
        instance_id = f"{kind.value}-{tier}-{seed}-{index:04d}"
        instance = TaskInstance(
            instance_id=instance_id, kind=kind, graph=graph,
            args=args, gold=gold, prompt=build_prompt(kind, graph, args),
        )
        return instance, trace
    raise GenerationExhaustedError(
        f"could not build a {kind.value} instance (tier={tier}, index={index})"
    )


def _pick_args(kind, graph, rng):
    n = graph.node_count
    if kind.arity == 0:
        return ()
    if kind.arity == 1:
        return (rng.randrange(n),)
    u = rng.randrange(n)
    v = rng.randrange(n)
    guard = 0
    while v == u and guard < 50:
        v = rng.randrange(n)
        guard += 1
    if u == v:
        return None
    if kind == TaskKind.MAXIMUM_FLOW:
        # prefer source/sink pairs with any chance of flow
        sources = [x for x in range(n) if graph.successors(x)]
        sinks = [x for x in range(n) if graph.predecessors(x)]
        if sources and sinks:
            u = rng.choice(sources)
            candidates = [x for x in sinks if x != u]
            if candidates:
                v = rng.choice(candidates)
    return (u, v)


def make_instances(kinds, count_per_task, tier, seed, family=None):
    """Deterministic batch of (instance, trace) pairs across task kinds."""
    pairs = []
    for kind in kinds:
        for index in range(count_per_task):
            pairs.append(make_instance(kind, tier, seed, family=family, index=index))
    return pairs


# ---------------------------------------------------------------------------
# dataset records

DATASET_FIELDS = (
    "id", "task", "graph", "question", "steps", "labels", "answer",
    "source", "size_tier", "density_tier",
)


@dataclass
class DatasetRecord:
    id: str
    task: str
    graph: dict
    question: str
    steps: list[str]
    labels: str
    answer: str | None
    source: str
    size_tier: str
    density_tier: str
    text: str | None = None  # step-token-encoded training text

    def __post_init__(self):
        if len(self.labels) != len(self.steps):
            raise PipelineError("labels length must equal steps length")

    def to_json_dict(self):
        out = {k: getattr(self, k) for k in DATASET_FIELDS}
        out["text"] = self.text
        return out

    @classmethod
    def from_json_dict(cls, d):
        return cls(**{k: d[k] for k in DATASET_FIELDS}, text=d.get("text"))


def record_from_sequence(instance: TaskInstance, seq: StepSequence, suffix: str):
    encoded = encode_training_record(instance, seq)
    answer = seq.final_answer
    if answer is not None and not isinstance(answer, str):
        answer = answer_to_text(answer)
    return DatasetRecord(
        id=f"{instance.instance_id}#{suffix}",
        task=instance.kind.value,
        graph=instance.graph.to_record(),
        question=instance.prompt,
        steps=seq.texts,
        labels=seq.labels,
        answer=answer,
        source=seq.source,
        size_tier=tier_for_count(instance.graph.node_count),
        density_tier=density(instance.graph).tier,
        text=encoded.text,
    )


def instance_record(instance: TaskInstance):
    return {
        "id": instance.instance_id,
        "task": instance.kind.value,
        "graph": instance.graph.to_record(),
        "question": instance.prompt,
        "answer": answer_to_text(instance.gold),
        "args": list(instance.args),
        "size_tier": tier_for_count(instance.graph.node_count),
        "density_tier": density(instance.graph).tier,
    }


def build_trajectory_records(pairs, negatives_per_positive=1, seed=0):
    """Gold trajectory record plus perturbed negatives for every instance."""
    records = []
    for instance, trace in pairs:
        positive = render_trace(trace, instance)
        records.append(record_from_sequence(instance, positive, "t0"))
        emitted = 0
        strategies = ["calculation", "node-edge", "structure"]
        attempt = 0
        while emitted < negatives_per_positive and attempt < 6 * negatives_per_positive:
            strategy = strategies[attempt % len(strategies)]
            attempt += 1
            rng = random.Random(_sub_seed(seed, instance.instance_id, "neg", attempt))
            indices = applicable_indices(trace, strategy)
            if not indices:
                continue
            plan = PerturbationPlan(
                strategy=strategy,
                target_index=rng.choice(indices),
                seed=rng.getrandbits(32),
            )
            try:
                negative = trajectories.perturb(positive, plan)
            except PerturbationError:
                continue
            emitted += 1
            records.append(record_from_sequence(instance, negative, f"t{emitted}"))
    return records


def build_mc_records(pairs, generator, params=None):
    """Monte-carlo-annotated records for every instance."""
    params = params or mcts.AnnotatorParams()
    records = []
    for instance, _trace in pairs:
        for i, seq in enumerate(mcts.annotate(instance, generator, params)):
            records.append(record_from_sequence(instance, seq, f"mc{i}"))
    return records


# ---------------------------------------------------------------------------
# quality control

_LABEL_GRAMMAR = re.compile(r"\+*-*$")


def quality_filter(records):
    """Completeness and label filtering.

    Drops records with no final answer or a sentence repeated 3+ times in a
    row; keeps trajectory records only when every '-' trails every '+';
    truncates monte-carlo records right after their first '-'.
    """
    kept, rejected = [], []
    for record in records:
        if not _has_final_answer(record):
            rejected.append((record, "no final answer"))
            continue
        if _has_repeated_sentences(record.steps):
            rejected.append((record, "repeated sentences"))
            continue
        if record.source == "trajectory":
            if not _LABEL_GRAMMAR.fullmatch(record.labels):
                rejected.append((record, "negative steps precede positives"))
                continue
            kept.append(record)
            continue
        first_neg = record.labels.find("-")
        if first_neg >= 0 and first_neg + 1 < len(record.labels):
            record = _truncated(record, first_neg + 1)
        kept.append(record)
    return kept, rejected


def _truncated(record, length):
    return DatasetRecord(
        id=record.id, task=record.task, graph=record.graph, question=record.question,
        steps=record.steps[:length], labels=record.labels[:length],
        answer=record.answer, source=record.source, size_tier=record.size_tier,
        density_tier=record.density_tier,
        text=_reencode(record.question, record.steps[:length]),
    )


def _reencode(question, steps):
    return question + "\n" + "".join(s + trajectories.STEP_TOKEN for s in steps)


def _has_final_answer(record):
    if record.answer:
        return True
    return any("\\boxed{" in s for s in record.steps)


def _has_repeated_sentences(steps, threshold=3):
    sentences = []
    for step in steps:
        for piece in re.split(r"(?<=[.!?])\s+|\n+", step):
            piece = piece.strip()
            if piece:
                sentences.append(piece)
    run = 1
    for prev, cur in zip(sentences, sentences[1:]):
        run = run + 1 if cur == prev else 1
        if run >= threshold:
            return True
    return False


# ---------------------------------------------------------------------------
# preference pairs

@dataclass(frozen=True)
class PreferenceParams:
    n: int = 8
    beam_k: int = 2
    max_depth: int = 20
    temperature: float = 0.7


@dataclass
class PreferencePair:
    instance_id: str
    problem: str
    preferred_steps: list[str]
    preferred_answer: str
    dispreferred_steps: list[str]
    dispreferred_answer: str

    def to_json_dict(self):
        return {
            "id": self.instance_id,
            "question": self.problem,
            "preferred": self.preferred_steps,
            "preferred_answer": self.preferred_answer,
            "dispreferred": self.dispreferred_steps,
            "dispreferred_answer": self.dispreferred_answer,
        }


def build_preference_pairs(instances, generator, scorer, params=None):
    """Preferred = best beam-search output (must be correct); dispreferred =
    the wrong Best-of-N sample with the lowest step score.  Problems with no
    valid orientation are skipped."""
    params = params or PreferenceParams()
    pairs = []
    for instance in instances:
        try:
            beam = search.beam_search(
                instance, params.n, params.beam_k, generator, scorer,
                max_depth=params.max_depth, temperature=params.temperature,
            )
        except search.SearchError:
            continue
        preferred = next(
            (c for c in beam.candidates if c.order == beam.final.candidate_order), None
        )
        if preferred is None or not _judged(preferred, instance):
            continue
        try:
            bofn = search.best_of_n(
                instance, params.n, generator, scorer,
                method=search.AggregationMethod.PRM_LAST_VOTE,
                temperature=params.temperature,
            )
        except search.SearchError:
            continue
        wrong = [
            c for c in bofn.candidates
            if c.parsed and not _judged(c, instance)
        ]
        if not wrong:
            continue
        dispreferred = min(
            wrong,
            key=lambda c: (search.solution_score(c, search.AggregationMethod.PRM_MIN), c.order),
        )
        pairs.append(PreferencePair(
            instance_id=instance.instance_id,
            problem=instance.prompt,
            preferred_steps=list(preferred.steps),
            preferred_answer=preferred.raw_answer,
            dispreferred_steps=list(dispreferred.steps),
            dispreferred_answer=dispreferred.raw_answer,
        ))
    return pairs


def _judged(candidate, instance):
    return exact_match(candidate.raw_answer, instance.gold, instance.kind).correct


# ---------------------------------------------------------------------------
# corpora emission

def _write_jsonl(path, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def compute_stats(records, pairs=(), sft_rows=()):
    labels = "".join(r.labels for r in records)
    problems = {r.id.split("#")[0] for r in records}
    return {
        "graph_tasks": len({r.task for r in records}),
        "problems": len(problems),
        "solution_pairs_total": len(records),
        "solution_pairs_trajectory": sum(r.source == "trajectory" for r in records),
        "solution_pairs_monte_carlo": sum(r.source == "monte-carlo" for r in records),
        "positive_step_labels": labels.count("+"),
        "negative_step_labels": labels.count("-"),
        "max_steps_in_solution": max((len(r.steps) for r in records), default=0),
        "sft_pairs": len(list(sft_rows)),
        "preference_pairs": len(list(pairs)),
    }


def emit_corpora(records, pairs, out_dir, sft_records=None):
    """Write prm_train.jsonl, sft.jsonl, dpo.jsonl and stats.json.

    Ordering is deterministic (sorted by record id) so identical inputs
    produce byte-identical files.
    """
    out = Path(out_dir)
    records = sorted(records, key=lambda r: r.id)
    pairs = sorted(pairs, key=lambda p: p.instance_id)
    if sft_records is None:
        sft_records = [
            {
                "id": r.id, "task": r.task, "question": r.question,
                "response": "\n\n".join(r.steps),
            }
            for r in records
            if r.source == "trajectory" and set(r.labels) == {"+"}
        ]
    _write_jsonl(out / "prm_train.jsonl", [r.to_json_dict() for r in records])
    _write_jsonl(out / "sft.jsonl", sft_records)
    _write_jsonl(out / "dpo.jsonl", [p.to_json_dict() for p in pairs])
    stats = compute_stats(records, pairs, sft_records)
    stats_path = out / "stats.json"
    stats_path.parent.mkdir(parents=True, exist_ok=True)
    stats_path.write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return {
        "prm_train": out / "prm_train.jsonl",
        "sft": out / "sft.jsonl",
        "dpo": out / "dpo.jsonl",
        "stats": stats_path,
    }
