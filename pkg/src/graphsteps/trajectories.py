"""Turn execution traces into labeled natural-language step sequences.

Positive sequences are rendered straight from a solver trace (template
phrasing is seed-stable but varies across steps and problems).  Negative
variants are manufactured by perturbing one step and regenerating everything
downstream from the corrupted state, so errors propagate plausibly.
"""

from __future__ import annotations

import hashlib
import random
import re
from dataclasses import dataclass, field

from . import tasks
from .evaluation import exact_match
from .graphs import Graph
from .tasks import ExecutionTrace, TaskError, TaskInstance, TaskKind, answer_to_text

#: literal separator terminating each step in PRM training text
STEP_TOKEN = "\n\n\n\n\n"

STRATEGIES = ("structure", "node-edge", "calculation")

_STRUCTURE_TAGS = frozenset({"structure_check"})
_NODE_EDGE_TAGS = frozenset({
    "neighbor_scan", "predecessor_scan", "traversal", "bfs_layer",
    "shortest_paths", "augment", "cycle_scan", "mst_grow", "edge_sort",
})
_CALC_TAGS = frozenset({
    "degree_count", "neighbor_links", "formula", "pagerank_iter",
    "max_identify", "set_ops", "flow_sum", "distance_collect",
    "order_collect", "weight_sum", "conclusion",
})

_TAGS_FOR_STRATEGY = {
    "structure": _STRUCTURE_TAGS,
    "node-edge": _NODE_EDGE_TAGS,
    "calculation": _CALC_TAGS,
}

_PERTURB_RETRIES = 24


class TemplateGapError(KeyError):
    """A trace step carries a tag the renderer has no template for."""


class PerturbationError(RuntimeError):
    """Perturbation could not produce an answer different from gold."""


class NoApplicableStepError(PerturbationError):
    """The chosen strategy has no matching step in this sequence."""


@dataclass(frozen=True)
class LabeledStep:
    text: str
    label: str  # '+' or '-'

    def __post_init__(self):
        if self.label not in "+-":
            raise ValueError(f"bad label {self.label!r}")
        if STEP_TOKEN in self.text:
            raise ValueError("step text contains the step token")


@dataclass(frozen=True)
class Provenance:
    instance: TaskInstance
    trace: ExecutionTrace


@dataclass
class StepSequence:
    problem_id: str
    steps: list[LabeledStep]
    final_answer: object
    source: str  # "trajectory" | "monte-carlo"
    provenance: Provenance | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.steps:
            raise ValueError("step sequence must be non-empty")

    @property
    def labels(self):
        return "".join(s.label for s in self.steps)

    @property
    def texts(self):
        return [s.text for s in self.steps]


@dataclass(frozen=True)
class PerturbationPlan:
    strategy: str
    target_index: int
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")


@dataclass(frozen=True)
class EncodedRecord:
    text: str
    labels: str


# ---------------------------------------------------------------------------
# rendering

def _fmt_nodes(nodes):
    return "[" + ", ".join(str(n) for n in nodes) + "]"


def _fmt_float(x):
    return format(x, ".6g")


def _fmt_path(path):
    return " -> ".join(str(n) for n in path)


def _facts(kind, tag, payload):
    if tag == "structure_check":
        word = "a directed" if payload["directed"] else "an undirected"
        return (f"{word} graph with {payload['node_count']} nodes and"
                f" {payload['edge_count']} edges")
    if tag == "neighbor_scan":
        return _neighbor_scan_facts(payload)
    if tag == "degree_count":
        if "in_degree" in payload:
            return (f"node {payload['node']} has in-degree {payload['in_degree']} and"
                    f" out-degree {payload['out_degree']}, for a total degree of"
                    f" {payload['total']}")
        return f"node {payload['node']} has degree {payload['total']}"
    if tag == "neighbor_links":
        if payload["count"] == 0:
            return (f"no edges exist among the {payload['degree']} neighbors of"
                    f" node {payload['node']}")
        pairs = ", ".join(f"({a}, {b})" for a, b in payload["pairs"])
        return (f"{payload['count']} edge(s) exist among the {payload['degree']}"
                f" neighbors of node {payload['node']}: {pairs}")
    if tag == "formula":
        return _formula_facts(payload)
    if tag == "pagerank_init":
        return (f"every node starts with PageRank 1/{payload['node_count']}"
                f" = {_fmt_float(payload['value'])}")
    if tag == "pagerank_iter":
        vec = ", ".join(
            f"node {i}: {_fmt_float(v)}" for i, v in enumerate(payload["values"])
        )
        return f"after iteration {payload['iteration']} the values are {vec}"
    if tag == "max_identify":
        if "node" in payload:
            return (f"the largest PageRank value is {_fmt_float(payload['value'])},"
                    f" at node {payload['node']}")
        a, b = payload["pair"]
        return (f"the maximum shortest-path distance is {payload['value']},"
                f" attained between node {a} and node {b}")
    if tag == "predecessor_scan":
        preds = payload["predecessors"]
        if payload["directed"]:
            if not preds:
                return f"no edges point into node {payload['node']}"
            return f"the edges pointing into node {payload['node']} come from {_fmt_nodes(preds)}"
        return (f"the graph is undirected, so every neighbor of node"
                f" {payload['node']} counts as a predecessor: {_fmt_nodes(preds)}")
    if tag == "set_ops":
        if "common" in payload:
            if not payload["common"]:
                return f"node {payload['u']} and node {payload['v']} share no neighbors"
            return (f"the common neighbors of node {payload['u']} and node"
                    f" {payload['v']} are {_fmt_nodes(payload['common'])}")
        return (f"the intersection is {_fmt_nodes(payload['intersection'])}"
                f" ({len(payload['intersection'])} node(s)) and the union is"
                f" {_fmt_nodes(payload['union'])} ({len(payload['union'])} node(s))")
    if tag == "traversal":
        reach = "is reached" if payload["reached"] else "is never reached"
        return (f"breadth-first search from node {payload['start']} visits"
                f" {_fmt_path(payload['order'])}; node {payload['target']} {reach}")
    if tag == "augment":
        return (f"augmenting path {_fmt_path(payload['path'])} carries"
                f" {payload['bottleneck']} unit(s) of flow")
    if tag == "flow_sum":
        if not payload["bottlenecks"]:
            return "no augmenting path exists, so the total flow is 0"
        blist = " + ".join(str(b) for b in payload["bottlenecks"])
        return f"the bottleneck values sum to {blist} = {payload['total']}"
    if tag == "bfs_layer":
        return f"layer {payload['layer']} adds {_fmt_nodes(payload['nodes'])}"
    if tag == "order_collect":
        return f"the full visit order is {_fmt_nodes(payload['order'])}"
    if tag == "cycle_scan":
        if payload["found"]:
            u, v = payload["back_edge"]
            return (f"depth-first search reaches node {v} again via edge"
                    f" ({u}, {v}), closing a cycle")
        return ("depth-first search finishes without revisiting any active"
                " node, so no cycle exists")
    if tag == "shortest_paths":
        rows = "; ".join(
            f"from {src}: {_fmt_nodes(row)}" for src, row in sorted(payload["rows"].items())
        )
        return f"BFS from each node gives the distance rows {rows}"
    if tag == "distance_collect":
        return (f"the farthest distance from each node is"
                f" {_fmt_nodes(payload['eccentricities'])}")
    if tag == "edge_sort":
        items = ", ".join(f"({u}, {v}, w={w})" for u, v, w in payload["edges"])
        return f"sorted by weight the edges are {items}"
    if tag == "mst_grow":
        acc = ", ".join(f"({u}, {v}, w={w})" for u, v, w in payload["accepted"])
        if payload["rejected"]:
            rej = ", ".join(f"({u}, {v}, w={w})" for u, v, w in payload["rejected"])
            return f"accept {acc}; skip {rej} to avoid closing a cycle"
        return f"accept {acc}"
    if tag == "weight_sum":
        wsum = " + ".join(str(w) for w in payload["weights"])
        return f"the accepted edge weights sum to {wsum} = {payload['total']}"
    raise TemplateGapError(tag)


def _neighbor_scan_facts(payload):
    if "neighborhood" in payload:  # clustering
        word = "out-neighbors" if payload["directed"] else "neighbors"
        if not payload["neighborhood"]:
            return f"node {payload['node']} has no {word}"
        return (f"node {payload['node']} has {payload['count']} {word}:"
                f" {_fmt_nodes(payload['neighborhood'])}")
    if "set_u" in payload:  # node-pair scans
        return (f"the neighbors of node {payload['u']} are {_fmt_nodes(payload['set_u'])}"
                f" and the neighbors of node {payload['v']} are {_fmt_nodes(payload['set_v'])}")
    if "out_neighbors" in payload:
        base = (f"node {payload['node']} has out-neighbors"
                f" {_fmt_nodes(payload['out_neighbors'])} and in-neighbors"
                f" {_fmt_nodes(payload['in_neighbors'])}")
        if "neighbors" in payload:
            base += f", so its neighbor set is {_fmt_nodes(payload['neighbors'])}"
        return base
    if not payload["neighbors"]:
        return f"node {payload['node']} has no neighbors"
    return f"node {payload['node']} is connected to {_fmt_nodes(payload['neighbors'])}"


def _formula_facts(payload):
    if payload["task"] == "clustering":
        if payload.get("degenerate"):
            return (f"the node has fewer than 2 relevant neighbors (D ="
                    f" {payload['d']}), so the clustering coefficient is defined"
                    f" as {_fmt_float(payload['value'])}")
        t, d, v = payload["t"], payload["d"], _fmt_float(payload["value"])
        if payload["directed"]:
            return f"C = T / (D * (D - 1)) = {t} / ({d} * {d - 1}) = {v}"
        return f"C = 2T / (D * (D - 1)) = 2 * {t} / ({d} * {d - 1}) = {v}"
    if payload["union_size"] == 0:
        return "both neighbor sets are empty, so the Jaccard coefficient is 0"
    return (f"J = |intersection| / |union| = {payload['inter_size']} /"
            f" {payload['union_size']} = {_fmt_float(payload['value'])}")


_FRAMES = {
    "structure_check": (
        "The graph is {facts}.",
        "First, examine the structure: this is {facts}.",
        "Note the setup: we are given {facts}.",
    ),
    "neighbor_scan": (
        "Scanning the edge list: {facts}.",
        "From the edges, {facts}.",
        "Reading off the adjacency, {facts}.",
    ),
    "degree_count": (
        "Counting the connections: {facts}.",
        "Now count them: {facts}.",
        "Tallying up, {facts}.",
    ),
    "neighbor_links": (
        "Checking edges between those neighbors: {facts}.",
        "Among the neighbors, {facts}.",
        "Inspecting the neighborhood, {facts}.",
    ),
    "formula": (
        "Apply the formula: {facts}.",
        "Plugging in, {facts}.",
        "By the definition, {facts}.",
    ),
    "pagerank_init": (
        "Initialize: {facts}.",
        "To begin, {facts}.",
        "Set up the starting values: {facts}.",
    ),
    "pagerank_iter": (
        "Update step: {facts}.",
        "Iterating once more, {facts}.",
        "Recomputing, {facts}.",
    ),
    "max_identify": (
        "Comparing the results, {facts}.",
        "Picking the maximum: {facts}.",
        "Scanning for the largest entry, {facts}.",
    ),
    "predecessor_scan": (
        "Looking for incoming edges: {facts}.",
        "From the edge list, {facts}.",
        "Checking each edge, {facts}.",
    ),
    "set_ops": (
        "Combining the sets: {facts}.",
        "Working out the overlap, {facts}.",
        "Comparing the two sets, {facts}.",
    ),
    "traversal": (
        "Traverse the graph: {facts}.",
        "Walking the graph, {facts}.",
        "Running the search, {facts}.",
    ),
    "augment": (
        "Searching the residual graph: {facts}.",
        "Next, {facts}.",
        "Pushing more flow: {facts}.",
    ),
    "flow_sum": (
        "Adding up the flow: {facts}.",
        "In total, {facts}.",
        "Summing the augmentations, {facts}.",
    ),
    "bfs_layer": (
        "Expanding the frontier: {facts}.",
        "Visiting the next layer, {facts}.",
        "From the current queue, {facts}.",
    ),
    "order_collect": (
        "Collecting the traversal: {facts}.",
        "Putting the layers together, {facts}.",
        "Assembling the sequence, {facts}.",
    ),
    "cycle_scan": (
        "Search for a cycle: {facts}.",
        "Probing the graph, {facts}.",
        "Following the edges, {facts}.",
    ),
    "shortest_paths": (
        "Compute all shortest paths: {facts}.",
        "Breadth-first search from every node: {facts}.",
        "Working out pairwise distances, {facts}.",
    ),
    "distance_collect": (
        "Collect the distances: {facts}.",
        "Gathering the results, {facts}.",
        "Summarizing the rows, {facts}.",
    ),
    "edge_sort": (
        "Order the edges: {facts}.",
        "Arranging by weight, {facts}.",
        "Start by sorting: {facts}.",
    ),
    "mst_grow": (
        "Grow the tree: {facts}.",
        "Adding edges greedily, {facts}.",
        "Building up the spanning tree: {facts}.",
    ),
    "weight_sum": (
        "Total the weights: {facts}.",
        "Adding them up, {facts}.",
        "Finally, {facts}.",
    ),
    "conclusion": (
        "So the final answer is \\boxed{{{answer}}}.",
        "Therefore, the answer is \\boxed{{{answer}}}.",
        "Hence the result is \\boxed{{{answer}}}.",
    ),
}


def _pick_frame(problem_key, index, tag):
    frames = _FRAMES.get(tag)
    if frames is None:
        raise TemplateGapError(tag)
    digest = hashlib.sha256(f"{problem_key}|{index}|{tag}".encode()).digest()
    return frames[digest[0] % len(frames)]


def _render_steps(trace, instance):
    texts = []
    for i, step in enumerate(trace.steps):
        frame = _pick_frame(instance.prompt, i, step.tag)
        if step.tag == "conclusion":
            texts.append(frame.format(answer=step.payload["answer_text"]))
        else:
            texts.append(frame.format(facts=_facts(instance.kind, step.tag, step.payload)))
    return texts


def render_trace(trace: ExecutionTrace, instance: TaskInstance) -> StepSequence:
    """One all-positive step per trace step; deterministic in its inputs."""
    texts = _render_steps(trace, instance)
    return StepSequence(
        problem_id=instance.instance_id,
        steps=[LabeledStep(t, "+") for t in texts],
        final_answer=trace.answer,
        source="trajectory",
        provenance=Provenance(instance, trace),
    )


def applicable_indices(trace: ExecutionTrace, strategy: str):
    tags = _TAGS_FOR_STRATEGY[strategy]
    return [i for i, s in enumerate(trace.steps) if s.tag in tags]


# ---------------------------------------------------------------------------
# perturbation

def perturb(seq: StepSequence, plan: PerturbationPlan) -> StepSequence:
    """Corrupt one step per the plan's strategy, regenerate downstream steps
    from the corrupted state, and relabel: prefix '+', the rest '-'.

    Retries different corruptions until the final answer differs from gold;
    raises PerturbationError when the strategy cannot achieve that here.
    """
    if seq.source != "trajectory" or seq.provenance is None:
        raise PerturbationError("only trajectory-sourced sequences can be perturbed")
    if any(s.label != "+" for s in seq.steps):
        raise PerturbationError("perturbation starts from an all-positive sequence")
    trace, instance = seq.provenance.trace, seq.provenance.instance
    idx = plan.target_index
    if not (0 <= idx < len(trace.steps)):
        raise PerturbationError(f"target index {idx} out of range")
    if idx not in applicable_indices(trace, plan.strategy):
        raise NoApplicableStepError(
            f"step {idx} ({trace.steps[idx].tag}) does not accept {plan.strategy}"
        )
    rng = random.Random(plan.seed)
    for _ in range(_PERTURB_RETRIES):
        if plan.strategy == "calculation":
            corrupted = _corrupt_calc(instance, trace, idx, rng)
        else:
            corrupted = _corrupt_graph_reading(instance, trace, idx, rng, plan.strategy)
        if corrupted is None or len(corrupted.steps) <= idx:
            continue
        rendered = answer_to_text(corrupted.answer)
        if exact_match(rendered, instance.gold, instance.kind).correct:
            continue  # corruption collided with gold; resample
        suffix = _render_steps(corrupted, instance)[idx:]
        steps = [LabeledStep(s.text, "+") for s in seq.steps[:idx]]
        steps += [LabeledStep(t, "-") for t in suffix]
        return StepSequence(
            problem_id=seq.problem_id,
            steps=steps,
            final_answer=corrupted.answer,
            source="trajectory",
        )
    raise PerturbationError(
        f"retries exhausted: {plan.strategy} at step {idx} kept matching gold"
    )


def _corrupt_graph_reading(instance, trace, idx, rng, strategy):
    """Re-solve on a misread graph (flipped directedness, or one edge off)."""
    g, kind = instance.graph, instance.kind
    variants = []
    if strategy == "structure" and kind.directedness == "any" and not g.weighted:
        variants.append("flip")
    if g.edges:
        variants.append("drop")
    variants.append("add")
    choice = rng.choice(variants)
    if choice == "flip":
        misread = g.undirected_view() if g.directed else g.as_directed_view()
    elif choice == "drop":
        victim = _pick_edge(g.edges, instance.args, rng)
        misread = Graph(g.node_count, g.directed, tuple(e for e in g.edges if e != victim))
    else:
        extra = _pick_missing_edge(g, instance.args, rng)
        if extra is None:
            return None
        misread = Graph(g.node_count, g.directed, tuple(sorted(g.edges + (extra,))))
    try:
        _, corrupted = tasks.solve(kind, misread, instance.args)
    except TaskError:
        return None
    return corrupted


def _pick_edge(edges, args, rng):
    touching = [e for e in edges if args and (e[0] in args or e[1] in args)]
    return rng.choice(touching or list(edges))


def _pick_missing_edge(g, args, rng):
    candidates = []
    for u in range(g.node_count):
        for v in range(g.node_count):
            if u == v:
                continue
            if not g.directed and u > v:
                continue
            if g.has_edge(u, v) or (not g.directed and g.has_edge(v, u)):
                continue
            candidates.append((u, v))
    if not candidates:
        return None
    touching = [p for p in candidates if args and (p[0] in args or p[1] in args)]
    u, v = rng.choice(touching or candidates)
    w = rng.randint(1, 10) if g.weighted else None
    return (u, v, w)


def _corrupt_int(value, rng, minimum=0):
    for _ in range(8):
        cand = value + rng.choice((-2, -1, 1, 2))
        if cand != value and cand >= minimum:
            return cand
    return value + 1


def _corrupt_float(value, rng):
    if value == 0.0:
        return rng.choice((0.1, 0.25, 0.5))
    cand = value * rng.choice((0.5, 2.0, 1.5))
    return cand if cand != value else value + 0.5


def _corrupt_node_list(order, rng, node_count, sequence_sensitive):
    order = list(order)
    moves = []
    if len(order) >= 2:
        moves.append("drop")
        if sequence_sensitive:
            moves.append("swap")
    phantoms = [x for x in range(node_count) if x not in order]
    if phantoms:
        moves.append("add")
    if not moves:
        return None
    move = rng.choice(moves)
    if move == "swap":
        i = rng.randrange(len(order) - 1)
        order[i], order[i + 1] = order[i + 1], order[i]
    elif move == "drop":
        order.pop(rng.randrange(len(order)))
    else:
        phantom = rng.choice(phantoms)
        if sequence_sensitive:
            order.append(phantom)
        else:
            order = sorted(order + [phantom])
    return order


def _rebuild(steps, idx, replacements, answer):
    """Copy trace steps, swapping in corrupted steps from idx on, and close
    with a conclusion carrying the corrupted answer."""
    out = list(steps[:idx]) + list(replacements)
    out.append(tasks.TraceStep(
        "conclusion", {"answer": answer, "answer_text": answer_to_text(answer)}
    ))
    return ExecutionTrace(tuple(out))


def _corrupt_calc(instance, trace, idx, rng):
    """Corrupt the number computed at step idx and recompute its dependents."""
    kind = instance.kind
    steps = trace.steps
    tag = steps[idx].tag
    payload = dict(steps[idx].payload)

    if tag == "conclusion":
        answer = _corrupt_answer_value(trace.answer, instance, rng)
        if answer is None:
            return None
        return _rebuild(steps, idx, [], answer)

    if tag == "degree_count":
        payload["total"] = _corrupt_int(payload["total"], rng)
        return _rebuild(steps, idx, [tasks.TraceStep(tag, payload)], payload["total"])

    if tag == "neighbor_links":
        t = _corrupt_int(payload["count"], rng)
        payload["count"] = t
        # keep the listed pairs; the count is the arithmetic slip
        d = payload["degree"]
        directed = payload["directed"]
        value = t / (d * (d - 1)) if directed else 2.0 * t / (d * (d - 1))
        formula = dict(steps[idx + 1].payload, t=t, value=value)
        return _rebuild(
            steps, idx,
            [tasks.TraceStep(tag, payload), tasks.TraceStep("formula", formula)],
            value,
        )

    if tag == "formula":
        value = _corrupt_float(payload["value"], rng)
        payload["value"] = value
        return _rebuild(steps, idx, [tasks.TraceStep(tag, payload)], value)

    if tag == "set_ops":
        return _corrupt_set_ops(instance, steps, idx, payload, rng)

    if tag == "pagerank_iter":
        return _corrupt_pagerank(instance, steps, idx, payload, rng)

    if tag == "max_identify":
        if "node" in payload:  # pagerank argmax
            n = instance.graph.node_count
            if n < 2:
                return None
            payload["node"] = (payload["node"] + 1 + rng.randrange(n - 1)) % n
            return _rebuild(steps, idx, [tasks.TraceStep(tag, payload)], payload["node"])
        payload["value"] = _corrupt_int(payload["value"], rng, minimum=1)
        return _rebuild(steps, idx, [tasks.TraceStep(tag, payload)], payload["value"])

    if tag == "flow_sum":
        total = _corrupt_int(payload["total"], rng)
        payload["total"] = total
        return _rebuild(steps, idx, [tasks.TraceStep(tag, payload)], total)

    if tag == "distance_collect":
        ecc = list(payload["eccentricities"])
        j = rng.randrange(len(ecc))
        new_max = max(ecc) + rng.choice((1, 2))
        ecc[j] = new_max
        payload["eccentricities"] = ecc
        ident = dict(steps[idx + 1].payload)
        ident["value"] = new_max
        ident["pair"] = [j, ident["pair"][1]]
        return _rebuild(
            steps, idx,
            [tasks.TraceStep(tag, payload), tasks.TraceStep("max_identify", ident)],
            new_max,
        )

    if tag == "weight_sum":
        total = _corrupt_int(payload["total"], rng, minimum=1)
        payload["total"] = total
        return _rebuild(steps, idx, [tasks.TraceStep(tag, payload)], total)

    if tag == "order_collect":
        order = _corrupt_node_list(
            payload["order"], rng, instance.graph.node_count, sequence_sensitive=True
        )
        if order is None:
            return None
        payload["order"] = order
        return _rebuild(steps, idx, [tasks.TraceStep(tag, payload)], order)

    return None


def _corrupt_answer_value(value, instance, rng):
    if isinstance(value, bool):
        return not value
    if isinstance(value, float):
        return _corrupt_float(value, rng)
    if isinstance(value, (list, tuple)):
        seq_sensitive = instance.kind == TaskKind.BFS
        return _corrupt_node_list(value, rng, instance.graph.node_count, seq_sensitive)
    return _corrupt_int(value, rng)


def _corrupt_set_ops(instance, steps, idx, payload, rng):
    if "common" in payload:
        common = _corrupt_node_list(
            payload["common"], rng, instance.graph.node_count, sequence_sensitive=False
        )
        if common is None:
            return None
        payload["common"] = sorted(common)
        return _rebuild(
            steps, idx, [tasks.TraceStep("set_ops", payload)], len(payload["common"])
        )
    inter = list(payload["intersection"])
    union = list(payload["union"])
    extras = [x for x in union if x not in inter]
    if inter and (not extras or rng.random() < 0.5):
        inter.pop(rng.randrange(len(inter)))
    elif extras:
        inter.append(extras[rng.randrange(len(extras))])
        inter.sort()
    else:
        return None
    payload["intersection"] = inter
    value = len(inter) / len(union) if union else 0.0
    formula = dict(steps[idx + 1].payload, inter_size=len(inter), value=value)
    return _rebuild(
        steps, idx,
        [tasks.TraceStep("set_ops", payload), tasks.TraceStep("formula", formula)],
        value,
    )


def _corrupt_pagerank(instance, steps, idx, payload, rng):
    g = instance.graph
    n = g.node_count
    values = list(payload["values"])
    j = rng.randrange(n)
    values[j] = values[j] * rng.choice((2.0, 3.0)) + 0.05
    payload = dict(payload, values=values)
    replaced = [tasks.TraceStep("pagerank_iter", payload)]
    iteration = payload["iteration"]
    for k in range(iteration + 1, tasks.PAGERANK_ITERATIONS + 1):
        values = _pagerank_step(g, values)
        replaced.append(tasks.TraceStep("pagerank_iter", {"iteration": k, "values": values}))
    top = max(range(n), key=lambda i: values[i])
    replaced.append(tasks.TraceStep("max_identify", {"node": top, "value": values[top]}))
    return _rebuild(steps, idx, replaced, top)


def _pagerank_step(g, values):
    n = g.node_count
    d = tasks.PAGERANK_DAMPING
    out_deg = {u: len(g.successors(u)) for u in range(n)}
    dangling = sum(values[u] for u in range(n) if out_deg[u] == 0)
    base = (1.0 - d) / n + d * dangling / n
    nxt = [base] * n
    for u in range(n):
        if out_deg[u] == 0:
            continue
        share = d * values[u] / out_deg[u]
        for v in g.successors(u):
            nxt[v] += share
    return nxt


# ---------------------------------------------------------------------------
# step encoding and segmentation

def encode_training_record(instance: TaskInstance, seq: StepSequence) -> EncodedRecord:
    """Prompt plus steps, each terminated by the literal step token, and the
    parallel '+'/'-' label string."""
    if "\n" in instance.prompt:
        raise ValueError("prompt must be single-line for lossless decoding")
    for step in seq.steps:
        if STEP_TOKEN in step.text:
            raise ValueError("step text contains the step token")
        if step.text != step.text.strip("\n"):
            raise ValueError("step text must not begin or end with newlines")
    body = "".join(step.text + STEP_TOKEN for step in seq.steps)
    return EncodedRecord(text=instance.prompt + "\n" + body, labels=seq.labels)


def decode_training_record(record: EncodedRecord):
    """Inverse of encode_training_record: (prompt, step texts, labels)."""
    parts = record.text.split(STEP_TOKEN)
    if parts[-1] != "":
        raise ValueError("encoded text must end with the step token")
    parts = parts[:-1]
    prompt, first = parts[0].split("\n", 1)
    steps = [first] + parts[1:]
    if len(steps) != len(record.labels):
        raise ValueError("label string length must match step count")
    return prompt, steps, record.labels


def segment_steps(text: str, max_steps: int = 20):
    """Split generator output into steps: blank-line boundaries first, then
    'Step N' prefixes, capped by merging overflow into the final step."""
    parts = [p.strip() for p in re.split(r"\n\s*\n", text) if p.strip()]
    if len(parts) <= 1:
        pieces = re.split(r"(?m)(?=^Step \d+)", text)
        alt = [p.strip() for p in pieces if p.strip()]
        if len(alt) > 1:
            parts = alt
    if not parts:
        parts = [text.strip() or text]
    if len(parts) > max_steps:
        parts = parts[: max_steps - 1] + ["\n\n".join(parts[max_steps - 1:])]
    return parts
