"""Exact solvers for the 13 graph computational problems.

Each solver returns both the answer and an ExecutionTrace: the ordered,
semantically tagged intermediate values the algorithm actually computed.
Traces feed the trajectory renderer, so payload keys are a stable contract.

All node-list answers use ascending ids (BFS uses ascending neighbor
expansion) so gold answers are canonical and exactly comparable.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum

from .graphs import Graph, render_edgelist


class TaskError(ValueError):
    """Task arguments or graph shape violate the task's contract."""


class DisconnectedGraphError(TaskError):
    """Raised by solvers that are only defined on connected graphs."""


class AnswerType(str, Enum):
    INTEGER = "integer"
    FLOAT = "float"
    BOOLEAN = "boolean"
    NODE_LIST = "node_list"


class TaskKind(str, Enum):
    DEGREE = "degree"
    CLUSTERING_COEFFICIENT = "clustering_coefficient"
    NEIGHBOR = "neighbor"
    PAGERANK = "pagerank"
    PREDECESSOR = "predecessor"
    JACCARD = "jaccard"
    COMMON_NEIGHBOR = "common_neighbor"
    CONNECTIVITY = "connectivity"
    MAXIMUM_FLOW = "maximum_flow"
    BFS = "bfs"
    CYCLE = "cycle"
    DIAMETER = "diameter"
    MST = "mst"

    @property
    def level(self):
        return _LEVEL[self]

    @property
    def answer_type(self):
        return _ANSWER_TYPE[self]

    @property
    def arity(self):
        return _ARITY[self]

    @property
    def directedness(self):
        """'any', 'directed', or 'undirected'."""
        return _DIRECTEDNESS.get(self, "any")

    @property
    def weighted(self):
        return self in (TaskKind.MAXIMUM_FLOW, TaskKind.MST)

    @property
    def requires_connected(self):
        return self in (TaskKind.DIAMETER, TaskKind.MST)


_LEVEL = {
    TaskKind.DEGREE: "node",
    TaskKind.CLUSTERING_COEFFICIENT: "node",
    TaskKind.NEIGHBOR: "node",
    TaskKind.PAGERANK: "node",
    TaskKind.PREDECESSOR: "node",
    TaskKind.JACCARD: "node-pair",
    TaskKind.COMMON_NEIGHBOR: "node-pair",
    TaskKind.CONNECTIVITY: "node-pair",
    TaskKind.MAXIMUM_FLOW: "node-pair",
    TaskKind.BFS: "graph",
    TaskKind.CYCLE: "graph",
    TaskKind.DIAMETER: "graph",
    TaskKind.MST: "graph",
}

_ANSWER_TYPE = {
    TaskKind.DEGREE: AnswerType.INTEGER,
    TaskKind.CLUSTERING_COEFFICIENT: AnswerType.FLOAT,
    TaskKind.NEIGHBOR: AnswerType.NODE_LIST,
    TaskKind.PAGERANK: AnswerType.INTEGER,
    TaskKind.PREDECESSOR: AnswerType.NODE_LIST,
    TaskKind.JACCARD: AnswerType.FLOAT,
    TaskKind.COMMON_NEIGHBOR: AnswerType.INTEGER,
    TaskKind.CONNECTIVITY: AnswerType.BOOLEAN,
    TaskKind.MAXIMUM_FLOW: AnswerType.INTEGER,
    TaskKind.BFS: AnswerType.NODE_LIST,
    TaskKind.CYCLE: AnswerType.BOOLEAN,
    TaskKind.DIAMETER: AnswerType.INTEGER,
    TaskKind.MST: AnswerType.INTEGER,
}

_ARITY = {
    TaskKind.DEGREE: 1,
    TaskKind.CLUSTERING_COEFFICIENT: 1,
    TaskKind.NEIGHBOR: 1,
    TaskKind.PAGERANK: 0,
    TaskKind.PREDECESSOR: 1,
    TaskKind.JACCARD: 2,
    TaskKind.COMMON_NEIGHBOR: 2,
    TaskKind.CONNECTIVITY: 2,
    TaskKind.MAXIMUM_FLOW: 2,
    TaskKind.BFS: 1,
    TaskKind.CYCLE: 0,
    TaskKind.DIAMETER: 0,
    TaskKind.MST: 0,
}

_DIRECTEDNESS = {
    TaskKind.MAXIMUM_FLOW: "directed",
    TaskKind.DIAMETER: "undirected",
    TaskKind.MST: "undirected",
}

#: tasks held out of PRM training in the evaluation split
OUT_OF_DOMAIN_TASKS = frozenset({TaskKind.NEIGHBOR, TaskKind.BFS, TaskKind.CYCLE})

PAGERANK_DAMPING = 0.85
PAGERANK_ITERATIONS = 3


@dataclass(frozen=True)
class TraceStep:
    tag: str
    payload: dict


@dataclass(frozen=True)
class ExecutionTrace:
    steps: tuple[TraceStep, ...]

    def __post_init__(self):
        if not self.steps:
            raise TaskError("trace must contain at least one step")

    @property
    def answer(self):
        return self.steps[-1].payload["answer"]

    @property
    def tags(self):
        return tuple(s.tag for s in self.steps)


@dataclass(frozen=True)
class TaskInstance:
    instance_id: str
    kind: TaskKind
    graph: Graph
    args: tuple[int, ...]
    gold: object
    prompt: str


def answer_to_text(value, answer_type=None):
    """Canonical text rendering of an answer value (what goes in the box)."""
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, float):
        return format(value, ".6g")
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(str(v) for v in value) + "]"
    return str(value)


_ARRAY_HINT = (
    " The answer should be in the form of an array that starts with'[' and ends"
    " with ']', separated by comma ','."
)

_PROMPT_BODIES = {
    TaskKind.DEGREE: (
        "What is the degree of node {u}? Please reason step by step, and put"
        " your final answer within \\boxed{{}}."
    ),
    TaskKind.CLUSTERING_COEFFICIENT: (
        "What is the clustering coefficient of node {u}? For a directed graph,"
        " we consider a node's successors as its neighbors. Please reason step"
        " by step, and put your final answer within \\boxed{{}}."
    ),
    TaskKind.NEIGHBOR: (
        "Which are the neighbor nodes of node {u}? Please reason step by step,"
        " and put your final answer within \\boxed{{}}." + _ARRAY_HINT
    ),
    TaskKind.PAGERANK: (
        "Which node has the largest PageRank value? The dampling factor is"
        " 0.85. The number of iterations is 3. The initial PageRank values for"
        " all nodes are initialized equally as 1/N, where N is the number of"
        " nodes. Please reason step by step, and put your final answer within"
        " \\boxed{{}}."
    ),
    TaskKind.PREDECESSOR: (
        "Which are the predecessor nodes of node {u}? A predecessor of n is a"
        " node m such that there exists a directed edge from m to n. Please"
        " reason step by step, and put your final answer within \\boxed{{}}."
        + _ARRAY_HINT
    ),
    TaskKind.JACCARD: (
        "Calculate the Jaccard coefficient of node {u} and node {v}. For a"
        " directed graph, we consider a node's successors as its neighbors."
        " Please reason step by step, and put your final answer within"
        " \\boxed{{}}."
    ),
    TaskKind.COMMON_NEIGHBOR: (
        "Calculate the number of common neighbors of node {u} and node {v}. In"
        " the context of a directed graph, we consider a node's successors as"
        " its neighbors. Please reason step by step, and put your final answer"
        " within \\boxed{{}}."
    ),
    TaskKind.CONNECTIVITY: (
        "Is there a path between node {u} and node {v}? Please reason step by"
        " step, and answer with \\boxed{{True}} or \\boxed{{False}}."
    ),
    TaskKind.MAXIMUM_FLOW: (
        "Calculate the maximum flow between node {u} and node {v} in this"
        " graph. Given a directed graph with capacities assigned to its edges,"
        " the maximum flow from a source node to a sink node is the maximum"
        " amount of flow that can be sent from the source to the sink,"
        " respecting the capacity constraints on each edge. The goal is to"
        " find the optimal way to route flow through the network to maximize"
        " the flow from source to sink. Please reason step by step, and put"
        " your final answer within \\boxed{{}}."
    ),
    TaskKind.BFS: (
        "Start from node {u}, output a sequence of traversal in breadth-first"
        " search (BFS) order. Please reason step by step, and put your final"
        " answer within \\boxed{{}}. The answer should be in the form of an"
        " array that starts with'[' and ends with ']', separated by comma ','"
    ),
    TaskKind.CYCLE: (
        "Does the graph have a cycle? For a directed graph, a cycle is a"
        " closed path that traverses through a sequence of nodes and directed"
        " edges, eventually returning to the starting node. Please reason step"
        " by step, and answer with \\boxed{{True}} or \\boxed{{False}}."
    ),
    TaskKind.DIAMETER: (
        "Calculate the diameter of the graph. The diameter is the maximum"
        " distance over all pairs of nodes in the graph. Please reason step by"
        " step, and put your final answer within \\boxed{{}}."
    ),
    TaskKind.MST: (
        "Output the total weight of the minimum spanning tree (MST) for this"
        " graph. Please reason step by step, and put your final answer within"
        " \\boxed{{}}."
    ),
}


def build_prompt(kind: TaskKind, graph: Graph, args=()) -> str:
    body = _PROMPT_BODIES[kind]
    if kind.arity == 1:
        body = body.format(u=args[0])
    elif kind.arity == 2:
        body = body.format(u=args[0], v=args[1])
    return f"Given {render_edgelist(graph)}. {body}"


def _check_inputs(kind, graph, args):
    if len(args) != kind.arity:
        raise TaskError(f"{kind.value} expects {kind.arity} node argument(s), got {len(args)}")
    for a in args:
        if not (0 <= a < graph.node_count):
            raise TaskError(f"node {a} out of range for {kind.value}")
    if kind.directedness == "directed" and not graph.directed:
        raise TaskError(f"{kind.value} requires a directed graph")
    if kind.directedness == "undirected" and graph.directed:
        raise TaskError(f"{kind.value} requires an undirected graph")
    if kind.weighted and not (graph.edges and graph.weighted):
        raise TaskError(f"{kind.value} requires edge weights")
    if kind == TaskKind.MAXIMUM_FLOW and args[0] == args[1]:
        raise TaskError("maximum flow requires distinct source and sink")


def solve(kind: TaskKind, graph: Graph, args=()):
    """Solve one task instance; returns (answer, ExecutionTrace)."""
    _check_inputs(kind, graph, tuple(args))
    return _SOLVERS[kind](graph, *args)


def _structure_step(g):
    return TraceStep(
        "structure_check",
        {"directed": g.directed, "node_count": g.node_count, "edge_count": g.edge_count},
    )


def _conclude(steps, value):
    steps.append(TraceStep("conclusion", {"answer": value, "answer_text": answer_to_text(value)}))
    return value, ExecutionTrace(tuple(steps))


def _solve_degree(g, u):
    steps = [_structure_step(g)]
    if g.directed:
        out, inc = g.successors(u), g.predecessors(u)
        steps.append(TraceStep(
            "neighbor_scan",
            {"node": u, "out_neighbors": list(out), "in_neighbors": list(inc)},
        ))
        total = len(out) + len(inc)
        steps.append(TraceStep(
            "degree_count",
            {"node": u, "in_degree": len(inc), "out_degree": len(out), "total": total},
        ))
        return _conclude(steps, total)
    nbrs = g.neighbors(u)
    steps.append(TraceStep("neighbor_scan", {"node": u, "neighbors": list(nbrs)}))
    steps.append(TraceStep("degree_count", {"node": u, "total": len(nbrs)}))
    return _conclude(steps, len(nbrs))


def _solve_clustering(g, u):
    steps = [_structure_step(g)]
    hood = g.successors(u) if g.directed else g.neighbors(u)
    d = len(hood)
    steps.append(TraceStep(
        "neighbor_scan",
        {"node": u, "neighborhood": list(hood), "directed": g.directed, "count": d},
    ))
    if d < 2:
        steps.append(TraceStep(
            "formula",
            {"task": "clustering", "degenerate": True, "d": d, "value": 0.0},
        ))
        return _conclude(steps, 0.0)
    if g.directed:
        links = [(a, b) for a in hood for b in hood if a != b and g.has_edge(a, b)]
        value = len(links) / (d * (d - 1))
    else:
        links = [(a, b) for i, a in enumerate(hood) for b in hood[i + 1:] if g.has_edge(a, b)]
        value = 2.0 * len(links) / (d * (d - 1))
    steps.append(TraceStep(
        "neighbor_links",
        {"node": u, "count": len(links), "pairs": links, "degree": d, "directed": g.directed},
    ))
    steps.append(TraceStep(
        "formula",
        {"task": "clustering", "directed": g.directed, "t": len(links), "d": d, "value": value},
    ))
    return _conclude(steps, value)


def _solve_neighbor(g, u):
    steps = [_structure_step(g)]
    if g.directed:
        out, inc = g.successors(u), g.predecessors(u)
        merged = sorted(set(out) | set(inc))
        steps.append(TraceStep(
            "neighbor_scan",
            {"node": u, "out_neighbors": list(out), "in_neighbors": list(inc),
             "neighbors": merged},
        ))
        return _conclude(steps, merged)
    nbrs = list(g.neighbors(u))
    steps.append(TraceStep("neighbor_scan", {"node": u, "neighbors": nbrs}))
    return _conclude(steps, nbrs)


def pagerank_history(g: Graph, damping=PAGERANK_DAMPING, iterations=PAGERANK_ITERATIONS):
    """Synchronous PageRank from uniform 1/N; dangling mass is spread
    uniformly over all nodes each iteration.  Returns the value vector after
    every iteration."""
    n = g.node_count
    values = [1.0 / n] * n
    history = []
    out_deg = {u: len(g.successors(u)) for u in range(n)}
    for _ in range(iterations):
        dangling = sum(values[u] for u in range(n) if out_deg[u] == 0)
        base = (1.0 - damping) / n + damping * dangling / n
        nxt = [base] * n
        for u in range(n):
            if out_deg[u] == 0:
                continue
            share = damping * values[u] / out_deg[u]
            for v in g.successors(u):
                nxt[v] += share
        values = nxt
        history.append(list(values))
    return history


def _solve_pagerank(g):
    steps = [_structure_step(g)]
    n = g.node_count
    steps.append(TraceStep("pagerank_init", {"node_count": n, "value": 1.0 / n}))
    history = pagerank_history(g)
    for i, vec in enumerate(history, start=1):
        steps.append(TraceStep("pagerank_iter", {"iteration": i, "values": vec}))
    final = history[-1]
    top = max(range(n), key=lambda i: final[i])  # first max wins ties
    steps.append(TraceStep("max_identify", {"node": top, "value": final[top]}))
    return _conclude(steps, top)


def pagerank_top_node(g: Graph):
    """Spec operation: (argmax node, per-node values after 3 iterations)."""
    value, trace = _solve_pagerank(g)
    values = [s for s in trace.steps if s.tag == "pagerank_iter"][-1].payload["values"]
    return value, values


def _solve_predecessor(g, u):
    steps = [_structure_step(g)]
    preds = sorted(g.predecessors(u))
    steps.append(TraceStep(
        "predecessor_scan", {"node": u, "predecessors": preds, "directed": g.directed}
    ))
    return _conclude(steps, preds)


def _jaccard_sets(g, u, v):
    # prompts declare successors as the directed neighbor convention
    if g.directed:
        return set(g.successors(u)), set(g.successors(v))
    return set(g.neighbors(u)), set(g.neighbors(v))


def _solve_jaccard(g, u, v):
    steps = [_structure_step(g)]
    set_u, set_v = _jaccard_sets(g, u, v)
    steps.append(TraceStep(
        "neighbor_scan",
        {"u": u, "v": v, "set_u": sorted(set_u), "set_v": sorted(set_v),
         "directed": g.directed},
    ))
    inter, union = sorted(set_u & set_v), sorted(set_u | set_v)
    steps.append(TraceStep("set_ops", {"intersection": inter, "union": union}))
    value = len(inter) / len(union) if union else 0.0
    steps.append(TraceStep(
        "formula",
        {"task": "jaccard", "inter_size": len(inter), "union_size": len(union),
         "value": value},
    ))
    return _conclude(steps, value)


def _solve_common_neighbor(g, u, v):
    steps = [_structure_step(g)]
    set_u, set_v = _jaccard_sets(g, u, v)
    steps.append(TraceStep(
        "neighbor_scan",
        {"u": u, "v": v, "set_u": sorted(set_u), "set_v": sorted(set_v),
         "directed": g.directed},
    ))
    common = sorted(set_u & set_v)
    steps.append(TraceStep("set_ops", {"u": u, "v": v, "common": common}))
    return _conclude(steps, len(common))


def _bfs_order(g, start):
    order = [start]
    seen = {start}
    layers = []
    frontier = [start]
    while frontier:
        nxt = []
        for node in frontier:
            for nb in g.successors(node):
                if nb not in seen:
                    seen.add(nb)
                    nxt.append(nb)
                    order.append(nb)
        if nxt:
            layers.append(nxt)
        frontier = nxt
    return order, layers


def _solve_connectivity(g, u, v):
    steps = [_structure_step(g)]
    order, _ = _bfs_order(g, u)
    reached = v in order
    steps.append(TraceStep(
        "traversal", {"start": u, "target": v, "order": order, "reached": reached}
    ))
    return _conclude(steps, reached)


def _solve_maximum_flow(g, s, t):
    steps = [_structure_step(g)]
    residual = {}
    for u, v, w in g.edges:
        residual[(u, v)] = residual.get((u, v), 0) + w
        residual.setdefault((v, u), residual.get((v, u), 0))
    adj = {u: set() for u in range(g.node_count)}
    for (u, v) in residual:
        adj[u].add(v)
        adj[v].add(u)
    adj = {u: sorted(vs) for u, vs in adj.items()}
    total = 0
    bottlenecks = []
    index = 0
    while True:
        parent = {s: None}
        queue = deque([s])
        while queue and t not in parent:
            u = queue.popleft()
            for v in adj[u]:
                if v not in parent and residual.get((u, v), 0) > 0:
                    parent[v] = u
                    queue.append(v)
        if t not in parent:
            break
        path = [t]
        while path[-1] != s:
            path.append(parent[path[-1]])
        path.reverse()
        bottleneck = min(residual[(path[i], path[i + 1])] for i in range(len(path) - 1))
        for i in range(len(path) - 1):
            u, v = path[i], path[i + 1]
            residual[(u, v)] -= bottleneck
            residual[(v, u)] = residual.get((v, u), 0) + bottleneck
        index += 1
        total += bottleneck
        bottlenecks.append(bottleneck)
        steps.append(TraceStep(
            "augment", {"index": index, "path": path, "bottleneck": bottleneck}
        ))
    steps.append(TraceStep("flow_sum", {"bottlenecks": bottlenecks, "total": total}))
    return _conclude(steps, total)


def max_flow(g: Graph, s, t):
    """Spec operation: maximum s-t flow value under edge capacities."""
    value, _ = solve(TaskKind.MAXIMUM_FLOW, g, (s, t))
    return value


def clustering_coefficient(g: Graph, u):
    """Spec operation: local clustering coefficient of node u."""
    value, _ = solve(TaskKind.CLUSTERING_COEFFICIENT, g, (u,))
    return value


def _solve_bfs(g, u):
    steps = [_structure_step(g)]
    order, layers = _bfs_order(g, u)
    for i, layer in enumerate(layers, start=1):
        steps.append(TraceStep("bfs_layer", {"layer": i, "nodes": layer}))
    steps.append(TraceStep("order_collect", {"order": order}))
    return _conclude(steps, order)


def _undirected_cycle(g):
    # DFS with parent-edge skipping; a visited non-parent neighbor closes a cycle
    seen = set()
    for root in range(g.node_count):
        if root in seen:
            continue
        stack = [(root, -1)]
        parent = {root: -1}
        while stack:
            node, par = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            for nb in g.successors(node):
                if nb == par:
                    continue
                if nb in seen:
                    return True, (node, nb)
                if nb not in parent:
                    parent[nb] = node
                    stack.append((nb, node))
    return False, None


def _directed_cycle(g):
    WHITE, GRAY, BLACK = 0, 1, 2
    color = [WHITE] * g.node_count
    for root in range(g.node_count):
        if color[root] != WHITE:
            continue
        stack = [(root, iter(g.successors(root)))]
        color[root] = GRAY
        while stack:
            node, it = stack[-1]
            advanced = False
            for nb in it:
                if color[nb] == GRAY:
                    return True, (node, nb)
                if color[nb] == WHITE:
                    color[nb] = GRAY
                    stack.append((nb, iter(g.successors(nb))))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()
    return False, None


def _solve_cycle(g):
    steps = [_structure_step(g)]
    found, back_edge = _directed_cycle(g) if g.directed else _undirected_cycle(g)
    steps.append(TraceStep(
        "cycle_scan",
        {"found": found, "back_edge": list(back_edge) if back_edge else None,
         "directed": g.directed},
    ))
    return _conclude(steps, found)


def _solve_diameter(g):
    steps = [_structure_step(g)]
    n = g.node_count
    rows = {}
    for src in range(n):
        dist = {src: 0}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in g.successors(u):
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        if len(dist) != n:
            raise DisconnectedGraphError("disconnected graph: diameter undefined")
        rows[src] = [dist[v] for v in range(n)]
    steps.append(TraceStep("shortest_paths", {"rows": rows}))
    ecc = [max(rows[src]) for src in range(n)]
    steps.append(TraceStep("distance_collect", {"eccentricities": ecc}))
    diameter = max(ecc)
    src = ecc.index(diameter)
    far = rows[src].index(diameter)
    steps.append(TraceStep("max_identify", {"value": diameter, "pair": [src, far]}))
    return _conclude(steps, diameter)


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def _solve_mst(g):
    steps = [_structure_step(g)]
    ordered = sorted(g.edges, key=lambda e: (e[2], e[0], e[1]))
    steps.append(TraceStep("edge_sort", {"edges": [[u, v, w] for u, v, w in ordered]}))
    uf = _UnionFind(g.node_count)
    accepted, rejected = [], []
    for u, v, w in ordered:
        if uf.union(u, v):
            accepted.append([u, v, w])
            if len(accepted) == g.node_count - 1:
                break
        else:
            rejected.append([u, v, w])
    if len(accepted) != g.node_count - 1:
        raise DisconnectedGraphError("disconnected graph: no spanning tree")
    steps.append(TraceStep("mst_grow", {"accepted": accepted, "rejected": rejected}))
    weights = [w for _, _, w in accepted]
    total = sum(weights)
    steps.append(TraceStep("weight_sum", {"weights": weights, "total": total}))
    return _conclude(steps, total)


_SOLVERS = {
    TaskKind.DEGREE: _solve_degree,
    TaskKind.CLUSTERING_COEFFICIENT: _solve_clustering,
    TaskKind.NEIGHBOR: _solve_neighbor,
    TaskKind.PAGERANK: _solve_pagerank,
    TaskKind.PREDECESSOR: _solve_predecessor,
    TaskKind.JACCARD: _solve_jaccard,
    TaskKind.COMMON_NEIGHBOR: _solve_common_neighbor,
    TaskKind.CONNECTIVITY: _solve_connectivity,
    TaskKind.MAXIMUM_FLOW: _solve_maximum_flow,
    TaskKind.BFS: _solve_bfs,
    TaskKind.CYCLE: _solve_cycle,
    TaskKind.DIAMETER: _solve_diameter,
    TaskKind.MST: _solve_mst,
}
