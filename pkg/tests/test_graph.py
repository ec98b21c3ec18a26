import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphstack.errors import FileParseError, IntegrityError
from graphstack.graph import Graph, read_edge_list, write_edge_list


class TestConstruction:
    def test_single_edge(self):
        g = Graph.from_edges(2, [(0, 1)])
        assert g.num_nodes == 2
        assert g.num_edges == 1
        assert g.degrees.tolist() == [1, 1]

    def test_directed_input_symmetrized(self):
        g = Graph.from_edges(3, [(0, 1)])
        h = Graph.from_edges(3, [(1, 0)])
        assert np.array_equal(g.indices, h.indices)
        assert np.array_equal(g.indptr, h.indptr)

    def test_duplicates_merged(self):
        g = Graph.from_edges(3, [(0, 1), (0, 1), (1, 0)])
        assert g.num_edges == 1

    def test_self_loops_dropped(self):
        g = Graph.from_edges(3, [(0, 0), (0, 1), (2, 2)])
        assert g.num_edges == 1
        assert g.degrees.tolist() == [1, 1, 0]

    def test_out_of_range_rejected(self):
        with pytest.raises(IntegrityError):
            Graph.from_edges(2, [(0, 5)])

    def test_asymmetric_csr_rejected(self):
        indptr = np.array([0, 1, 1])
        indices = np.array([1])
        with pytest.raises(IntegrityError):
            Graph(2, indptr, indices)

    def test_empty_graph(self):
        g = Graph.from_edges(4, [])
        assert g.num_edges == 0
        assert g.degrees.tolist() == [0, 0, 0, 0]


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.data())
def test_random_edge_lists_build_valid_graphs(n, data):
    pairs = data.draw(st.lists(
        st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)),
        max_size=40))
    g = Graph.from_edges(n, pairs)
    # symmetric, sorted, deduplicated, no self-loops
    stored = set()
    for u in range(n):
        row = g.neighbors(u)
        assert np.all(np.diff(row) > 0) if row.size > 1 else True
        assert u not in row
        stored.update((u, int(v)) for v in row)
    for (u, v) in stored:
        assert (v, u) in stored
    expected = {(a, b) for (a, b) in ((min(p), max(p)) for p in pairs)
                if a != b}
    assert len(stored) == 2 * len(expected)


class TestEdgeListIO:
    def test_round_trip(self, tmp_path):
        g = Graph.from_edges(5, [(0, 1), (1, 2), (3, 4), (0, 4)])
        path = tmp_path / "edges.txt"
        write_edge_list(g, path)
        h = read_edge_list(path, num_nodes=5)
        assert np.array_equal(g.indices, h.indices)
        assert np.array_equal(g.indptr, h.indptr)

    def test_comments_and_whitespace(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("# a comment\n0 1\n\n  1   2  \n")
        g = read_edge_list(path)
        assert g.num_nodes == 3
        assert g.num_edges == 2

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("0 1\n0 1 2\n")
        with pytest.raises(FileParseError) as err:
            read_edge_list(path)
        assert err.value.line == 2

    def test_non_integer_rejected(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("0 x\n")
        with pytest.raises(FileParseError):
            read_edge_list(path)
