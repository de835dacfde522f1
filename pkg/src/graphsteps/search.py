"""Inference-time scaling: Best-of-N, PRM-guided beam search, aggregation.

A scorer assigns each reasoning step a probability of correctness; solutions
are ranked either by their last step's score or by their minimum step score,
and the final answer comes from a weighted majority vote over answer groups
(self-consistency is the unweighted special case).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .evaluation import extract_boxed, parse_answer
from .gateway import GenerationRequest, STEP_SEP, solution_prompt
from .tasks import TaskInstance
from .trajectories import segment_steps

MAX_DEPTH = 20  # matches the maximum steps seen in a solution


class SearchError(RuntimeError):
    pass


class NoParseableAnswerError(SearchError):
    """Every candidate's final answer was unparseable."""


class SearchExhaustedError(SearchError):
    """Beam search hit the depth cap with no finished beam."""


class AggregationMethod(Enum):
    PRM_LAST = "prm-last"
    PRM_MIN = "prm-min"
    PRM_LAST_VOTE = "prm-last-vote"
    PRM_MIN_VOTE = "prm-min-vote"
    SELF_CONSISTENCY = "self-consistency"

    @classmethod
    def from_string(cls, name):
        for m in cls:
            if m.value == name:
                return m
        raise ValueError(f"unknown aggregation method {name!r}")


@dataclass
class Candidate:
    steps: list[str]
    step_scores: list[float]
    raw_answer: str | None
    value: object
    order: int

    def __post_init__(self):
        if len(self.steps) != len(self.step_scores):
            raise ValueError("scores must align 1:1 with steps")

    @property
    def parsed(self):
        return self.value is not None


@dataclass(frozen=True)
class FinalAnswer:
    value: object
    raw: str | None
    score: float
    candidate_order: int


@dataclass
class RunResult:
    final: FinalAnswer
    candidates: list[Candidate]


def solution_score(candidate: Candidate, method: AggregationMethod) -> float:
    """Collapse per-step scores into one solution score."""
    if not candidate.steps:
        raise SearchError("candidate has no steps")
    if method in (AggregationMethod.PRM_MIN, AggregationMethod.PRM_MIN_VOTE):
        return min(candidate.step_scores)
    if method == AggregationMethod.SELF_CONSISTENCY:
        return 1.0
    return candidate.step_scores[-1]


def _group_key(value):
    if isinstance(value, list):
        return ("list", tuple(value))
    return (type(value).__name__, value)


def weighted_vote(candidates, method: AggregationMethod = AggregationMethod.PRM_LAST) -> FinalAnswer:
    """Group candidates by answer and return the answer whose summed solution
    scores are largest.  Unparseable candidates never join a group; ties go
    to the group holding the earliest-generated candidate."""
    groups = {}
    for c in candidates:
        if not c.parsed:
            continue
        key = _group_key(c.value)
        weight = solution_score(c, method)
        if key not in groups:
            groups[key] = {"weight": 0.0, "first": c}
        groups[key]["weight"] += weight
        if c.order < groups[key]["first"].order:
            groups[key]["first"] = c
    if not groups:
        raise NoParseableAnswerError("no candidate produced a parseable answer")
    best = max(groups.values(), key=lambda g: (g["weight"], -g["first"].order))
    rep = best["first"]
    return FinalAnswer(
        value=rep.value, raw=rep.raw_answer, score=best["weight"], candidate_order=rep.order
    )


def _make_candidate(instance, steps, scores, order):
    last = steps[-1] if steps else ""
    raw = extract_boxed(STEP_SEP.join(steps)) if steps else None
    value = parse_answer(raw, instance.kind.answer_type) if raw is not None else None
    # unparseable candidates carry zero scores so they cannot win anything
    if value is None:
        scores = [0.0] * len(steps)
    return Candidate(steps=list(steps), step_scores=list(scores), raw_answer=raw,
                     value=value, order=order)


def best_of_n(instance: TaskInstance, n: int, generator, scorer,
              method: AggregationMethod = AggregationMethod.PRM_LAST_VOTE,
              temperature: float = 0.7) -> RunResult:
    """Sample n full solutions, score each step-wise, aggregate per method."""
    if n < 1:
        raise ValueError("n must be >= 1")
    texts = generator.complete(GenerationRequest(
        prompt=instance.prompt, n=n, temperature=temperature,
    ))
    candidates = []
    for order, text in enumerate(texts):
        steps = segment_steps(text, MAX_DEPTH)
        scores = scorer.score_steps(instance.prompt, steps)
        candidates.append(_make_candidate(instance, steps, scores, order))
    if method in (AggregationMethod.PRM_LAST, AggregationMethod.PRM_MIN):
        ranked = [c for c in candidates if c.parsed]
        if not ranked:
            raise NoParseableAnswerError("no candidate produced a parseable answer")
        best = max(ranked, key=lambda c: (solution_score(c, method), -c.order))
        final = FinalAnswer(best.value, best.raw_answer,
                            solution_score(best, method), best.order)
        return RunResult(final=final, candidates=candidates)
    return RunResult(final=weighted_vote(candidates, method), candidates=candidates)


@dataclass
class _Beam:
    steps: list[str]
    scores: list[float]
    order: int
    finished: bool = False


def beam_search(instance: TaskInstance, n: int, k: int, generator, scorer,
                max_depth: int = MAX_DEPTH, temperature: float = 0.7) -> RunResult:
    """PRM-guided beam search: keep the top K of N step candidates, expand
    each survivor M = N/K ways per depth, and vote over finished beams."""
    if k < 1 or n < 1 or k > n:
        raise ValueError("need 1 <= k <= n")
    if n % k != 0:
        raise ValueError("n must be divisible by k (expansions per survivor = n/k)")
    m = n // k
    order = 0

    def sample_steps(prefix, count):
        nonlocal order
        texts = generator.complete(GenerationRequest(
            prompt=solution_prompt(instance.prompt, prefix),
            n=count, temperature=temperature, stop=(STEP_SEP,),
        ))
        out = []
        for text in texts:
            out.append(_Beam(steps=list(prefix) + [text.strip()], scores=[], order=order))
            order += 1
        return out

    pool = sample_steps((), n)
    beams: list[_Beam] = []
    for depth in range(1, max_depth + 1):
        for beam in pool:
            if not beam.scores:
                beam.scores = scorer.score_steps(instance.prompt, beam.steps)
                beam.finished = "\\boxed{" in beam.steps[-1]
        pool.sort(key=lambda b: (-b.scores[-1], b.order))
        beams = pool[:k]
        if all(b.finished for b in beams) or depth == max_depth:
            break
        pool = []
        for beam in beams:
            if beam.finished:
                pool.append(beam)
            else:
                pool.extend(sample_steps(beam.steps, m))

    finished = [b for b in beams if b.finished]
    if not finished:
        raise SearchExhaustedError("depth cap reached with no finished beam")
    candidates = [
        _make_candidate(instance, b.steps, b.scores, b.order) for b in finished
    ]
    final = weighted_vote(candidates, AggregationMethod.PRM_LAST)
    return RunResult(final=final, candidates=candidates)
