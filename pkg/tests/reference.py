"""Independent brute-force references for every task solver.

These deliberately use different algorithms than the package: Floyd-Warshall
instead of per-source BFS, transitive closure instead of search, spanning-tree
enumeration instead of Kruskal, s-t cut enumeration instead of augmenting
paths, dense matrix power iteration instead of sparse accumulation, Kahn's
algorithm / union-find instead of DFS coloring.
"""

from __future__ import annotations

import itertools
from collections import deque

import numpy as np

from graphsteps.graphs import Graph

INF = float("inf")


def all_undirected_graphs(n):
    """Every labeled simple undirected graph on n nodes."""
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    for mask in range(1 << len(pairs)):
        edges = [pairs[i] for i in range(len(pairs)) if mask >> i & 1]
        yield Graph.from_edges(n, False, edges)


def random_directed_graph(rng, n_max=6, weighted=False):
    n = rng.randint(2, n_max)
    edges = []
    for u in range(n):
        for v in range(n):
            if u != v and rng.random() < 0.4:
                edges.append((u, v, rng.randint(1, 10) if weighted else None))
    return Graph(n, True, tuple(sorted(edges)))


def adjacency_matrix(g):
    mat = [[0] * g.node_count for _ in range(g.node_count)]
    for u, v, _ in g.edges:
        mat[u][v] = 1
        if not g.directed:
            mat[v][u] = 1
    return mat


def floyd_warshall(g):
    n = g.node_count
    dist = [[0 if i == j else INF for j in range(n)] for i in range(n)]
    for u, v, _ in g.edges:
        dist[u][v] = 1
        if not g.directed:
            dist[v][u] = 1
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if dist[i][k] + dist[k][j] < dist[i][j]:
                    dist[i][j] = dist[i][k] + dist[k][j]
    return dist


def diameter(g):
    dist = floyd_warshall(g)
    flat = [d for row in dist for d in row]
    if any(d == INF for d in flat):
        return None
    return int(max(flat))


def connectivity(g, u, v):
    """Reachability via boolean transitive closure."""
    n = g.node_count
    reach = [[i == j for j in range(n)] for i in range(n)]
    for a, b, _ in g.edges:
        reach[a][b] = True
        if not g.directed:
            reach[b][a] = True
    for k in range(n):
        for i in range(n):
            if reach[i][k]:
                for j in range(n):
                    if reach[k][j]:
                        reach[i][j] = True
    return reach[u][v]


def mst_weight(g):
    """Minimum total weight over all spanning edge subsets."""
    n = g.node_count
    if n == 1:
        return 0
    best = None
    for subset in itertools.combinations(g.edges, n - 1):
        parent = list(range(n))

        def find(x):
            while parent[x] != x:
                x = parent[x]
            return x

        ok = True
        for u, v, _ in subset:
            ru, rv = find(u), find(v)
            if ru == rv:
                ok = False
                break
            parent[ru] = rv
        if ok:
            weight = sum(w for _, _, w in subset)
            if best is None or weight < best:
                best = weight
    return best


def spanning_tree_weights(g):
    n = g.node_count
    out = []
    for subset in itertools.combinations(g.edges, n - 1):
        parent = list(range(n))

        def find(x):
            while parent[x] != x:
                x = parent[x]
            return x

        ok = True
        for u, v, _ in subset:
            ru, rv = find(u), find(v)
            if ru == rv:
                ok = False
                break
            parent[ru] = rv
        if ok:
            out.append(sum(w for _, _, w in subset))
    return sorted(out)


def min_cut(g, s, t):
    """Minimum s-t cut capacity by enumerating all vertex bipartitions."""
    others = [x for x in range(g.node_count) if x not in (s, t)]
    best = None
    for r in range(len(others) + 1):
        for chosen in itertools.combinations(others, r):
            side = {s, *chosen}
            cap = sum(w for u, v, w in g.edges if u in side and v not in side)
            if best is None or cap < best:
                best = cap
    return best


def pagerank_vectors(g, damping=0.85, iterations=3):
    """Dense column-stochastic power iteration with uniform dangling fix."""
    n = g.node_count
    mat = np.zeros((n, n))
    out_deg = np.zeros(n)
    for u in range(n):
        succ = g.successors(u)
        out_deg[u] = len(succ)
        for v in succ:
            mat[v, u] = 1.0
    for u in range(n):
        if out_deg[u] > 0:
            mat[:, u] /= out_deg[u]
        else:
            mat[:, u] = 1.0 / n
    v = np.full(n, 1.0 / n)
    history = []
    for _ in range(iterations):
        v = (1 - damping) / n + damping * (mat @ v)
        history.append(v.copy())
    return history


def pagerank_top(g):
    final = pagerank_vectors(g)[-1]
    return int(np.flatnonzero(final == final.max())[0])


def neighbor_set(g, u):
    out = {v for a, v, _ in g.edges if a == u}
    inc = {a for a, v, _ in g.edges if v == u}
    if g.directed:
        return out | inc
    return out | inc


def successor_set(g, u):
    if g.directed:
        return {v for a, v, _ in g.edges if a == u}
    return neighbor_set(g, u)


def predecessor_set(g, u):
    if g.directed:
        return {a for a, v, _ in g.edges if v == u}
    return neighbor_set(g, u)


def degree(g, u):
    if g.directed:
        return sum(1 for a, v, _ in g.edges if a == u or v == u)
    return len(neighbor_set(g, u))


def clustering(g, u):
    hood = sorted(successor_set(g, u))
    d = len(hood)
    if d < 2:
        return 0.0
    if g.directed:
        arcs = {(a, b) for a, b, _ in g.edges}
        t = sum(1 for a in hood for b in hood if a != b and (a, b) in arcs)
        return t / (d * (d - 1))
    pairs = {(min(a, b), max(a, b)) for a, b, _ in g.edges}
    t = sum(
        1 for i, a in enumerate(hood) for b in hood[i + 1:]
        if (min(a, b), max(a, b)) in pairs
    )
    return 2.0 * t / (d * (d - 1))


def jaccard(g, u, v):
    su, sv = successor_set(g, u), successor_set(g, v)
    union = su | sv
    return len(su & sv) / len(union) if union else 0.0


def common_neighbors(g, u, v):
    return len(successor_set(g, u) & successor_set(g, v))


def bfs_order(g, start):
    seen = {start}
    order = []
    queue = deque([start])
    while queue:
        node = queue.popleft()
        order.append(node)
        for nb in sorted(successor_set(g, node) if g.directed else neighbor_set(g, node)):
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return order


def has_cycle(g):
    if g.directed:
        # Kahn's algorithm: a cycle exists iff the topological order is short
        indeg = [0] * g.node_count
        for _, v, _ in g.edges:
            indeg[v] += 1
        queue = deque([u for u in range(g.node_count) if indeg[u] == 0])
        seen = 0
        while queue:
            u = queue.popleft()
            seen += 1
            for a, b, _ in g.edges:
                if a == u:
                    indeg[b] -= 1
                    if indeg[b] == 0:
                        queue.append(b)
        return seen < g.node_count
    parent = list(range(g.node_count))

    def find(x):
        while parent[x] != x:
            x = parent[x]
        return x

    for u, v, _ in g.edges:
        ru, rv = find(u), find(v)
        if ru == rv:
            return True
        parent[ru] = rv
    return False
