"""Tree-search annotation of model-generated reasoning steps.

For one problem, rollouts are sampled from solution prefixes and scored by
Monte Carlo estimation (fraction reaching the gold answer).  The most
promising wrong rollouts are popped by a PUCT-style rule, their first error
is located by binary search over prefixes, and everything before the error
is fed back into the tree as new states.  Emitted sequences carry '+' up to
the first error and a single trailing '-'.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .evaluation import extract_boxed, judge_text
from .gateway import GenerationRequest, solution_prompt
from .tasks import TaskInstance, TaskKind
from .trajectories import LabeledStep, StepSequence, segment_steps


class AnnotationError(RuntimeError):
    pass


class FrontierEmptyError(AnnotationError):
    """select() called with nothing left to explore."""


class AnnotationLogicError(AnnotationError):
    """locate_first_error invoked on a rollout whose prefixes all succeed."""


@dataclass(frozen=True)
class AnnotatorParams:
    alpha: float = 0.5
    beta: float = 0.9
    length_scale: int = 500  # tokens (whitespace proxy)
    c_puct: float = 0.125
    rollouts_per_estimate: int = 8
    budget: int = 16  # max selections
    max_steps: int = 20
    temperature: float = 0.7

    def __post_init__(self):
        if not (0 < self.alpha < 1 and 0 < self.beta < 1):
            raise ValueError("alpha and beta must lie in (0, 1)")
        if self.length_scale <= 0 or self.c_puct <= 0 or self.rollouts_per_estimate < 1:
            raise ValueError("length_scale, c_puct, rollouts_per_estimate must be positive")


@dataclass(frozen=True)
class GoldAnswer:
    kind: TaskKind
    value: object


@dataclass
class Rollout:
    steps: tuple[str, ...]
    text: str
    correct: bool

    @property
    def token_length(self):
        return len(self.text.split())


@dataclass
class TreeNode:
    prefix: tuple[str, ...]
    parent: tuple[str, ...] | None
    mc: float = 0.0
    visits: int = 0
    rollouts: list = field(default_factory=list)


@dataclass
class FrontierEntry:
    node_key: tuple[str, ...]
    rollout: Rollout
    order: int


class SearchTree:
    """Nodes keyed by their step prefix, plus the selectable rollout pool."""

    def __init__(self):
        self.nodes: dict[tuple, TreeNode] = {}
        self.frontier: list[FrontierEntry] = []
        self._order = 0

    def add_node(self, prefix, parent):
        node = TreeNode(prefix=tuple(prefix), parent=tuple(parent) if parent is not None else None)
        self.nodes[node.prefix] = node
        return node

    def push(self, node_key, rollout):
        self.frontier.append(FrontierEntry(tuple(node_key), rollout, self._order))
        self._order += 1

    def sibling_visit_sum(self, node_key):
        node = self.nodes[node_key]
        return sum(
            other.visits
            for key, other in self.nodes.items()
            if other.parent == node.parent and key != node.prefix
        )


def q_value(mc: float, rollout_length: int, params: AnnotatorParams) -> float:
    """alpha^(1 - MC) * beta^(len / L): higher for likelier, shorter rollouts."""
    return (params.alpha ** (1.0 - mc)) * (params.beta ** (rollout_length / params.length_scale))


def u_value(node_key, tree: SearchTree, params: AnnotatorParams) -> float:
    """c_puct * sqrt(sum of sibling visits) / (1 + N(s))."""
    node = tree.nodes[node_key]
    return params.c_puct * math.sqrt(tree.sibling_visit_sum(node_key)) / (1.0 + node.visits)


def select(tree: SearchTree, params: AnnotatorParams) -> FrontierEntry:
    """Pop the frontier rollout maximizing Q(s, r) + U(s); earliest insertion
    wins ties.  Counts a visit on the popped state."""
    if not tree.frontier:
        raise FrontierEmptyError("annotation budget exhausted: frontier is empty")
    best_idx = None
    best = None
    for i, entry in enumerate(tree.frontier):
        node = tree.nodes[entry.node_key]
        score = q_value(node.mc, entry.rollout.token_length, params) + u_value(
            entry.node_key, tree, params
        )
        key = (score, -entry.order)
        if best is None or key > best:
            best = key
            best_idx = i
    entry = tree.frontier.pop(best_idx)
    tree.nodes[entry.node_key].visits += 1
    return entry


def mc_estimate(prefix: str, gold: GoldAnswer, generator, k: int = 8,
                temperature: float = 0.7) -> float:
    """Fraction of k completions from the prefix that reach the gold answer."""
    if k < 1:
        raise ValueError("k must be >= 1")
    texts = generator.complete(GenerationRequest(prompt=prefix, n=k, temperature=temperature))
    hits = sum(judge_text(t, gold.value, gold.kind).correct for t in texts)
    return hits / k


def locate_first_error(prefix_steps, gold: GoldAnswer, generator, params: AnnotatorParams,
                       *, problem: str, estimator=None) -> int:
    """Smallest i (1-based) with MC(steps[:i]) = 0, found by binary search.

    Uses O(log n) estimate batches: one to confirm the full prefix fails,
    then at most ceil(log2(n)) probes.
    """
    steps = list(prefix_steps)
    if not steps:
        raise ValueError("rollout must contain at least one step")

    if estimator is None:
        def estimator(i):
            return mc_estimate(
                solution_prompt(problem, steps[:i]), gold, generator,
                params.rollouts_per_estimate, params.temperature,
            )

    if estimator(len(steps)) > 0:
        raise AnnotationLogicError("no error to locate: full prefix still succeeds")
    lo, hi = 1, len(steps)
    while lo < hi:
        mid = (lo + hi) // 2
        if estimator(mid) == 0:
            hi = mid
        else:
            lo = mid + 1
    return lo


class Annotator:
    """Per-problem annotation loop with an MC cache shared across phases."""

    def __init__(self, instance: TaskInstance, generator, params: AnnotatorParams):
        self.instance = instance
        self.generator = generator
        self.params = params
        self.gold = GoldAnswer(instance.kind, instance.gold)
        self.tree = SearchTree()
        self._cache: dict[tuple, tuple[float, list[Rollout]]] = {}

    def _estimate(self, prefix_steps):
        key = tuple(prefix_steps)
        if key in self._cache:
            return self._cache[key]
        prompt = solution_prompt(self.instance.prompt, prefix_steps)
        texts = self.generator.complete(GenerationRequest(
            prompt=prompt, n=self.params.rollouts_per_estimate,
            temperature=self.params.temperature,
        ))
        rollouts = []
        for text in texts:
            steps = tuple(segment_steps(text, self.params.max_steps))
            correct = judge_text(text, self.gold.value, self.gold.kind).correct
            rollouts.append(Rollout(steps=steps, text=text, correct=correct))
        mc = sum(r.correct for r in rollouts) / len(rollouts)
        self._cache[key] = (mc, rollouts)
        return mc, rollouts

    def _expand(self, prefix, parent):
        node = self.tree.add_node(prefix, parent)
        mc, rollouts = self._estimate(prefix)
        node.mc = mc
        node.rollouts = rollouts
        if 0.0 < mc < 1.0:
            seen = set()
            for rollout in rollouts:
                if rollout.correct or not rollout.steps or rollout.steps in seen:
                    continue
                seen.add(rollout.steps)
                self.tree.push(node.prefix, rollout)
        return node

    def run(self):
        root = self._expand((), None)
        emitted = []
        seen = set()

        def emit(steps, labels, answer):
            key = (tuple(steps), labels)
            if key in seen:
                return
            seen.add(key)
            emitted.append(StepSequence(
                problem_id=self.instance.instance_id,
                steps=[LabeledStep(t, l) for t, l in zip(steps, labels)],
                final_answer=answer,
                source="monte-carlo",
            ))

        for rollout in root.rollouts:
            if rollout.correct and rollout.steps:
                emit(rollout.steps, "+" * len(rollout.steps), self.instance.gold)

        selections = 0
        while self.tree.frontier and selections < self.params.budget:
            entry = select(self.tree, self.params)
            selections += 1
            node = self.tree.nodes[entry.node_key]
            steps = list(entry.rollout.steps)
            try:
                first_error = locate_first_error(
                    steps, self.gold, self.generator, self.params,
                    problem=self.instance.prompt,
                    estimator=lambda i, _p=node.prefix: self._estimate(list(_p) + steps[:i])[0],
                )
            except AnnotationLogicError:
                # the generator recovers even after this wrong rollout's last
                # step; nothing to localize, so skip the entry
                continue
            prefix_steps = list(node.prefix)
            emitted_steps = prefix_steps + steps[:first_error]
            labels = "+" * (len(emitted_steps) - 1) + "-"
            emit(emitted_steps, labels, extract_boxed(entry.rollout.text))
            # positions before the error become fresh states for exploration
            for j in range(1, first_error):
                child_prefix = tuple(prefix_steps + steps[:j])
                if child_prefix not in self.tree.nodes:
                    self._expand(child_prefix, node.prefix)
        return emitted


def annotate(instance: TaskInstance, generator, params: AnnotatorParams | None = None):
    """Run the annotation loop; returns monte-carlo-sourced StepSequences."""
    params = params or AnnotatorParams()
    if params.budget < 0:
        raise ValueError("budget must be >= 0")
    if params.budget == 0:
        return []
    return Annotator(instance, generator, params).run()
