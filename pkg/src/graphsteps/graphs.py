"""Graph generation, inspection, and natural-language rendering.

Every task in the suite runs on small simple graphs (no self loops, no
duplicate edges, at most 35 nodes).  Three generator families are provided:
independent edge coin-flips ("random"), ring-rewire ("small-world"), and
preferential attachment ("scale-free").  Generation is a pure function of
the spec, including its seed.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from functools import cached_property

FAMILIES = ("random", "small-world", "scale-free")

#: size tier -> inclusive node-count range
TIER_RANGES = {
    "tiny": (5, 7),
    "small": (8, 15),
    "medium": (16, 25),
    "large": (26, 35),
}

#: default undirected-view edge density targeted by the random family,
#: picked per tier so typical instances land in the middle density band
RANDOM_EDGE_PROB = {"tiny": 0.5, "small": 0.5, "medium": 0.45, "large": 0.4}

WEIGHT_RANGE = (1, 10)


class GraphError(ValueError):
    """Invalid graph structure or parameters."""


class GenerationExhaustedError(RuntimeError):
    """Bounded retries could not produce an acceptable instance."""


class DensityError(ValueError):
    """Density is undefined for the given graph."""


Edge = tuple[int, int, "int | None"]


@dataclass(frozen=True)
class Graph:
    """A simple graph with integer node ids 0..node_count-1.

    Undirected graphs store each edge once with u < v; directed graphs store
    ordered arcs.  Weights are either present on every edge or on none.
    """

    node_count: int
    directed: bool
    edges: tuple[Edge, ...]

    def __post_init__(self):
        if self.node_count < 1:
            raise GraphError("graph needs at least one node")
        seen = set()
        weighted = None
        for u, v, w in self.edges:
            if not (0 <= u < self.node_count and 0 <= v < self.node_count):
                raise GraphError(f"edge ({u}, {v}) out of range")
            if u == v:
                raise GraphError(f"self-loop at node {u}")
            if not self.directed and u >= v:
                raise GraphError(f"undirected edge ({u}, {v}) must have u < v")
            if (u, v) in seen:
                raise GraphError(f"duplicate edge ({u}, {v})")
            seen.add((u, v))
            has_w = w is not None
            if weighted is None:
                weighted = has_w
            elif weighted != has_w:
                raise GraphError("weights must be present on all edges or none")
            if has_w and w <= 0:
                raise GraphError("weights must be positive integers")

    @classmethod
    def from_edges(cls, node_count, directed, edges):
        """Build a graph from loose (u, v) or (u, v, w) tuples."""
        norm = []
        for e in edges:
            u, v = e[0], e[1]
            w = e[2] if len(e) > 2 else None
            if not directed and u > v:
                u, v = v, u
            norm.append((u, v, w))
        return cls(node_count, directed, tuple(sorted(set(norm))))

    @property
    def edge_count(self):
        return len(self.edges)

    @property
    def weighted(self):
        return bool(self.edges) and self.edges[0][2] is not None

    @cached_property
    def _succ(self):
        adj = {u: [] for u in range(self.node_count)}
        for u, v, _ in self.edges:
            adj[u].append(v)
            if not self.directed:
                adj[v].append(u)
        return {u: tuple(sorted(vs)) for u, vs in adj.items()}

    @cached_property
    def _pred(self):
        if not self.directed:
            return self._succ
        adj = {u: [] for u in range(self.node_count)}
        for u, v, _ in self.edges:
            adj[v].append(u)
        return {u: tuple(sorted(vs)) for u, vs in adj.items()}

    @cached_property
    def _weights(self):
        table = {}
        for u, v, w in self.edges:
            table[(u, v)] = w
            if not self.directed:
                table[(v, u)] = w
        return table

    def successors(self, u):
        """Out-neighbors (all neighbors when undirected), ascending."""
        return self._succ[u]

    def predecessors(self, u):
        """In-neighbors (all neighbors when undirected), ascending."""
        return self._pred[u]

    def neighbors(self, u):
        """Union of in- and out-neighbors, ascending."""
        if not self.directed:
            return self._succ[u]
        return tuple(sorted(set(self._succ[u]) | set(self._pred[u])))

    def has_edge(self, u, v):
        """Arc u->v when directed; either orientation when undirected."""
        return (u, v) in self._weights

    def weight(self, u, v):
        return self._weights[(u, v)]

    def undirected_view(self):
        """Collapse arcs onto unordered pairs; weights are dropped on merge."""
        if not self.directed:
            return self
        pairs = sorted({(min(u, v), max(u, v)) for u, v, _ in self.edges})
        return Graph(self.node_count, False, tuple((u, v, None) for u, v in pairs))

    def as_directed_view(self):
        """Reinterpret stored undirected edges as one-way arcs (misreading)."""
        if self.directed:
            return self
        return Graph(self.node_count, True, self.edges)

    def is_connected(self):
        """Connectivity of the undirected view."""
        if self.node_count == 1:
            return True
        g = self.undirected_view() if self.directed else self
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in g.successors(u):
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.node_count

    def to_record(self):
        """JSON-ready form: edge list (triples when weighted) + directed flag."""
        if self.weighted:
            edges = [[u, v, w] for u, v, w in self.edges]
        else:
            edges = [[u, v] for u, v, _ in self.edges]
        return {"node_count": self.node_count, "directed": self.directed, "edges": edges}

    @classmethod
    def from_record(cls, rec):
        return cls.from_edges(rec["node_count"], rec["directed"], rec["edges"])


@dataclass(frozen=True)
class GraphSpec:
    """Everything generate_graph needs; same spec -> bit-identical graph."""

    family: str
    directed: bool
    size_tier: str
    weighted: bool = False
    seed: int = 0
    # family knobs; None means the per-tier default
    edge_prob: float | None = None
    rewire_prob: float = 0.3
    attachment: int = 2
    ring_neighbors: int = 4
    require_connected: bool = False
    max_tries: int = 200

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise GraphError(f"unknown family {self.family!r}")
        if self.size_tier not in TIER_RANGES:
            raise GraphError(f"unknown size tier {self.size_tier!r}")
        if self.attachment < 1:
            raise GraphError("attachment must be >= 1")


@dataclass(frozen=True)
class DensityReport:
    edge_density: float
    tier: str


def tier_for_count(n):
    """Size tier containing a node count (clamps to the outermost tiers)."""
    for tier, (lo, hi) in TIER_RANGES.items():
        if lo <= n <= hi:
            return tier
    return "tiny" if n < TIER_RANGES["tiny"][0] else "large"


def density(g: Graph) -> DensityReport:
    """Edge density x = 2|E| / (n(n-1)) of the undirected view, with its band.

    Bands follow the low (0, 0.33], middle (0.33, 0.67], high (0.67, 1]
    split; an empty graph is reported as low.
    """
    if g.node_count < 2:
        raise DensityError("undefined density for a single-node graph")
    m = g.undirected_view().edge_count if g.directed else g.edge_count
    x = 2.0 * m / (g.node_count * (g.node_count - 1))
    if x <= 0.33:
        tier = "low"
    elif x <= 0.67:
        tier = "middle"
    else:
        tier = "high"
    return DensityReport(edge_density=x, tier=tier)


def render_edgelist(g: Graph) -> str:
    """Deterministic natural-language edge listing.

    Distinct graphs always render to distinct text: directedness, every edge
    (ascending, with weights when present), and the node-id range all appear.
    """
    kind = "a directed graph" if g.directed else "an undirected graph"
    parts = []
    for u, v, w in g.edges:
        s = f"({u}, {v})"
        if w is not None:
            s += f" with weight {w}"
        parts.append(s)
    listing = "with edges: " + ", ".join(parts) if parts else "with no edges"
    return f"{kind} {listing}; nodes are labeled 0 through {g.node_count - 1}"


def generate_graph(spec: GraphSpec) -> Graph:
    """Draw a graph from the spec's family/tier, retrying until acceptable.

    Raises GenerationExhaustedError when spec.max_tries redraws cannot
    satisfy the structural requirements (currently: connectivity when
    spec.require_connected is set).
    """
    rng = random.Random(spec.seed)
    lo, hi = TIER_RANGES[spec.size_tier]
    for _ in range(spec.max_tries):
        n = rng.randint(lo, hi)
        if spec.family == "random":
            pairs = _random_edges(n, spec, rng)
        elif spec.family == "small-world":
            pairs = _small_world_edges(n, spec, rng)
        else:
            pairs = _scale_free_edges(n, spec, rng)
        if spec.directed and spec.family != "random":
            pairs = _orient(pairs, rng)
        edges = []
        for u, v in sorted(pairs):
            w = rng.randint(*WEIGHT_RANGE) if spec.weighted else None
            edges.append((u, v, w))
        g = Graph(n, spec.directed, tuple(edges))
        if spec.require_connected and not g.is_connected():
            continue
        return g
    raise GenerationExhaustedError(
        f"generation exhausted after {spec.max_tries} tries for {spec.family}/{spec.size_tier}"
    )


def _random_edges(n, spec, rng):
    p = spec.edge_prob if spec.edge_prob is not None else RANDOM_EDGE_PROB[spec.size_tier]
    if spec.directed:
        # per-arc probability chosen so the undirected view still targets p
        p_arc = 1.0 - math.sqrt(max(0.0, 1.0 - p))
        return {
            (u, v)
            for u in range(n)
            for v in range(n)
            if u != v and rng.random() < p_arc
        }
    return {(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p}


def _small_world_edges(n, spec, rng):
    # ring lattice with k nearest neighbors, then random rewiring
    k = min(spec.ring_neighbors, n - 1 if (n - 1) % 2 == 0 else n - 2)
    k = max(2, k - (k % 2))
    pairs = set()
    for u in range(n):
        for off in range(1, k // 2 + 1):
            v = (u + off) % n
            if u != v:
                pairs.add((min(u, v), max(u, v)))
    adjacency = {u: set() for u in range(n)}
    for u, v in pairs:
        adjacency[u].add(v)
        adjacency[v].add(u)
    rewired = set(pairs)
    for u, v in sorted(pairs):
        if rng.random() >= spec.rewire_prob:
            continue
        candidates = [w for w in range(n) if w != u and w not in adjacency[u]]
        if not candidates:
            continue
        w = rng.choice(candidates)
        rewired.discard((u, v))
        adjacency[u].discard(v)
        adjacency[v].discard(u)
        rewired.add((min(u, w), max(u, w)))
        adjacency[u].add(w)
        adjacency[w].add(u)
    return rewired


def _scale_free_edges(n, spec, rng):
    # preferential attachment: seed clique of m nodes, then m links per newcomer
    m = min(spec.attachment, max(1, n - 1))
    pairs = {(u, v) for u in range(m) for v in range(u + 1, m)}
    endpoints = [u for p in sorted(pairs) for u in p]
    for new in range(m, n):
        targets = set()
        guard = 0
        while len(targets) < min(m, new):
            if endpoints and guard < 50 * m:
                cand = rng.choice(endpoints)
            else:
                cand = rng.randrange(new)
            guard += 1
            if cand != new:
                targets.add(cand)
        for t in sorted(targets):
            pairs.add((min(new, t), max(new, t)))
            endpoints.extend((new, t))
    return pairs


def _orient(pairs, rng):
    return {(u, v) if rng.random() < 0.5 else (v, u) for u, v in sorted(pairs)}
