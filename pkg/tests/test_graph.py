import json

import numpy as np
import pytest

from flni.graph import (
    GraphError,
    OrderGraph,
    build_chain_graph,
    build_grid_graph,
    from_edge_list,
    incidence_matrix,
    parse_graph_spec,
    validate_acyclic,
)

FIGURE_CHAIN_D = np.array(
    [
        [1, -1, 0, 0, 0],
        [0, 1, -1, 0, 0],
        [0, 0, 1, -1, 0],
        [0, 0, 0, 1, -1],
    ],
    dtype=float,
)


class TestChain:
    def test_five_vertices(self):
        g = build_chain_graph(5)
        assert g.edges == ((0, 1), (1, 2), (2, 3), (3, 4))
        D = incidence_matrix(g)
        np.testing.assert_array_equal(D.toarray(), FIGURE_CHAIN_D)

    def test_single_vertex(self):
        g = build_chain_graph(1)
        assert g.n_edges == 0
        assert incidence_matrix(g).shape == (0, 1)

    def test_two_vertices(self):
        D = incidence_matrix(build_chain_graph(2))
        np.testing.assert_array_equal(D.toarray(), [[1.0, -1.0]])

    @pytest.mark.parametrize("bad", [0, -3, 2.5, True])
    def test_rejects_bad_length(self, bad):
        with pytest.raises(GraphError):
            build_chain_graph(bad)


class TestGrid:
    def test_three_by_four(self):
        g = build_grid_graph(3, 4)
        D = incidence_matrix(g)
        assert g.n_vertices == 12
        assert D.shape == (17, 12)
        dense = D.toarray()
        assert np.all((dense == 1).sum(axis=1) == 1)
        assert np.all((dense == -1).sum(axis=1) == 1)
        # Displayed rows: first row edge, and the first column edge at row 9.
        np.testing.assert_array_equal(dense[0, :3], [1, -1, 0])
        assert dense[9, 0] == 1 and dense[9, 4] == -1

    def test_two_by_two_by_hand(self):
        assert build_grid_graph(2, 2).edges == ((0, 1), (2, 3), (0, 2), (1, 3))

    @pytest.mark.parametrize("n", [1, 2, 7])
    def test_single_row_is_chain(self, n):
        assert incidence_matrix(build_grid_graph(1, n)) == incidence_matrix(build_chain_graph(n))

    def test_edge_count_exhaustive(self):
        for n1 in range(1, 9):
            for n2 in range(1, 9):
                g = build_grid_graph(n1, n2)
                assert g.n_edges == n1 * (n2 - 1) + (n1 - 1) * n2

    def test_rejects_zero(self):
        with pytest.raises(GraphError):
            build_grid_graph(0, 3)


class TestEdgeList:
    def test_v_order(self):
        g = from_edge_list(3, [(0, 2), (1, 2)])
        assert g == OrderGraph(3, ((0, 2), (1, 2)))

    def test_self_loop(self):
        with pytest.raises(GraphError, match="self-loop at edge 0") as exc:
            from_edge_list(3, [(1, 1)])
        assert exc.value.edge_index == 0

    def test_duplicate(self):
        with pytest.raises(GraphError, match="duplicate edge at index 1") as exc:
            from_edge_list(2, [(0, 1), (0, 1)])
        assert exc.value.edge_index == 1

    def test_out_of_range(self):
        with pytest.raises(GraphError, match="out of range") as exc:
            from_edge_list(2, [(0, 1), (1, 2)])
        assert exc.value.edge_index == 1

    def test_preserves_order(self):
        edges = [(2, 0), (0, 1), (2, 1)]
        D = incidence_matrix(from_edge_list(3, edges))
        assert list(zip(D.sources.tolist(), D.targets.tolist())) == edges


class TestAcyclic:
    def test_chain(self):
        assert validate_acyclic(build_chain_graph(4))

    def test_two_cycle(self):
        assert not validate_acyclic(from_edge_list(2, [(0, 1), (1, 0)]))

    def test_grid(self):
        assert validate_acyclic(build_grid_graph(2, 3))

    def test_longer_cycle(self):
        assert not validate_acyclic(from_edge_list(4, [(0, 1), (1, 2), (2, 3), (3, 1)]))


@pytest.mark.parametrize(
    "g",
    [build_chain_graph(6), build_grid_graph(3, 4), from_edge_list(4, [(0, 3), (2, 1), (1, 3)])],
)
def test_rows_annihilate_constants(g):
    D = incidence_matrix(g)
    np.testing.assert_array_equal(D.matvec(np.ones(g.n_vertices)), 0.0)
    for (s, a), (t, b) in D.rows():
        assert (a, b) == (1, -1) and s != t


def test_incidence_is_deterministic():
    a = incidence_matrix(build_grid_graph(4, 5))
    b = incidence_matrix(build_grid_graph(4, 5))
    assert a.sources.tobytes() == b.sources.tobytes()
    assert a.targets.tobytes() == b.targets.tobytes()
    assert a.tocsr().data.tobytes() == b.tocsr().data.tobytes()


def test_matvec_matches_dense():
    rng = np.random.default_rng(3)
    g = build_grid_graph(3, 4)
    D = g.incidence
    beta, nu = rng.normal(size=12), rng.normal(size=17)
    np.testing.assert_allclose(D.matvec(beta), D.toarray() @ beta)
    np.testing.assert_allclose(D.rmatvec(nu), D.toarray().T @ nu)


def test_incidence_arrays_are_read_only():
    D = build_chain_graph(3).incidence
    with pytest.raises(ValueError):
        D.sources[0] = 2


class TestSpecStrings:
    def test_chain(self):
        assert parse_graph_spec("chain:4") == build_chain_graph(4)

    def test_grid(self):
        assert parse_graph_spec("grid:3x4") == build_grid_graph(3, 4)

    def test_edges_json(self, tmp_path):
        path = tmp_path / "g.json"
        path.write_text(json.dumps({"n": 3, "edges": [[0, 2], [1, 2]]}))
        assert parse_graph_spec(f"edges:{path}") == from_edge_list(3, [(0, 2), (1, 2)])

    def test_unknown(self):
        with pytest.raises(GraphError):
            parse_graph_spec("tree:5")
