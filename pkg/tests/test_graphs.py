import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphsteps.graphs import (
    FAMILIES, TIER_RANGES, DensityError, GenerationExhaustedError, Graph,
    GraphError, GraphSpec, density, generate_graph, render_edgelist,
)


class TestGraphType:
    def test_rejects_self_loop(self):
        with pytest.raises(GraphError):
            Graph(3, False, ((1, 1, None),))

    def test_rejects_duplicate(self):
        with pytest.raises(GraphError):
            Graph(3, True, ((0, 1, None), (0, 1, None)))

    def test_undirected_normalization(self):
        g = Graph.from_edges(3, False, [(2, 0), (1, 2)])
        assert g.edges == ((0, 2, None), (1, 2, None))

    def test_mixed_weights_rejected(self):
        with pytest.raises(GraphError):
            Graph(3, False, ((0, 1, 5), (1, 2, None)))

    def test_record_round_trip(self):
        g = Graph.from_edges(4, True, [(0, 1, 3), (2, 0, 7)])
        assert Graph.from_record(g.to_record()) == g

    def test_directed_adjacency(self):
        g = Graph.from_edges(3, True, [(0, 1), (2, 1)])
        assert g.successors(0) == (1,)
        assert g.predecessors(1) == (0, 2)
        assert g.neighbors(1) == (0, 2)


class TestGenerate:
    def test_tiny_random_node_count_in_range(self):
        # [PAPER] tiny means 5-7 nodes
        g = generate_graph(GraphSpec("random", False, "tiny", seed=7))
        assert 5 <= g.node_count <= 7

    def test_determinism(self):
        spec = GraphSpec("small-world", True, "small", weighted=True, seed=99)
        assert generate_graph(spec) == generate_graph(spec)

    def test_scale_free_attachment_degree(self):
        # [DERIVED] every node after the seed clique attaches with m=2 edges
        spec = GraphSpec("scale-free", False, "small", seed=3, attachment=2)
        g = generate_graph(spec)
        for node in range(2, g.node_count):
            assert len(g.neighbors(node)) >= 2

    @pytest.mark.parametrize("family", FAMILIES)
    @pytest.mark.parametrize("tier", list(TIER_RANGES))
    def test_all_families_and_tiers(self, family, tier):
        g = generate_graph(GraphSpec(family, False, tier, seed=5))
        lo, hi = TIER_RANGES[tier]
        assert lo <= g.node_count <= hi

    def test_weights_in_range(self):
        g = generate_graph(GraphSpec("random", True, "small", weighted=True, seed=1))
        assert all(1 <= w <= 10 for _, _, w in g.edges)

    def test_connected_flag_respected(self):
        spec = GraphSpec("random", False, "tiny", seed=13, require_connected=True)
        assert generate_graph(spec).is_connected()

    def test_generation_exhausted(self):
        spec = GraphSpec(
            "random", False, "large", seed=3, edge_prob=0.001,
            require_connected=True, max_tries=5,
        )
        with pytest.raises(GenerationExhaustedError):
            generate_graph(spec)

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_undirected_adjacency_symmetric(self, seed):
        g = generate_graph(GraphSpec("random", False, "tiny", seed=seed))
        for u in range(g.node_count):
            for v in g.neighbors(u):
                assert u in g.neighbors(v)


class TestDensity:
    def test_low_band(self):
        g = Graph.from_edges(5, False, [(0, 1), (1, 2), (2, 3)])
        report = density(g)
        assert report.edge_density == pytest.approx(0.30)
        assert report.tier == "low"

    def test_complete_graph_high(self):
        edges = [(u, v) for u in range(5) for v in range(u + 1, 5)]
        report = density(Graph.from_edges(5, False, edges))
        assert report.edge_density == pytest.approx(1.0)
        assert report.tier == "high"

    def test_formula_substitution(self):
        g = Graph.from_edges(6, False, [(0, 1), (1, 2), (2, 3), (3, 4)])
        report = density(g)
        assert report.edge_density == pytest.approx(4 * 2 / 30)
        assert report.tier == "low"

    def test_single_node_undefined(self):
        with pytest.raises(DensityError):
            density(Graph(1, False, ()))

    def test_directed_uses_undirected_view(self):
        g = Graph.from_edges(3, True, [(0, 1), (1, 0), (1, 2)])
        assert density(g).edge_density == pytest.approx(2 * 2 / 6)

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_density_in_unit_interval(self, seed):
        g = generate_graph(GraphSpec("scale-free", False, "tiny", seed=seed))
        assert 0.0 <= density(g).edge_density <= 1.0


class TestRenderEdgelist:
    def test_declared_template(self):
        g = Graph.from_edges(3, False, [(0, 1), (1, 2)])
        text = render_edgelist(g)
        assert text.startswith("an undirected graph with edges: (0, 1), (1, 2)")

    def test_directed_edge_order_preserved(self):
        g = Graph.from_edges(3, True, [(2, 0)])
        text = render_edgelist(g)
        assert "(2, 0)" in text
        assert "directed" in text

    def test_weighted_edge(self):
        g = Graph.from_edges(2, False, [(0, 1, 5)])
        assert "(0, 1) with weight 5" in render_edgelist(g)

    def test_injective_on_node_count(self):
        a = Graph.from_edges(3, False, [(0, 1)])
        b = Graph.from_edges(4, False, [(0, 1)])
        assert render_edgelist(a) != render_edgelist(b)

    def test_injective_over_small_graph_family(self):
        from reference import all_undirected_graphs

        seen = {}
        for g in all_undirected_graphs(4):
            text = render_edgelist(g)
            assert text not in seen
            seen[text] = g
