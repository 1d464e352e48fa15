import numpy as np
import pytest
from hypothesis import given

from bgcr.errors import DuplicateLeafError, MissingValueError, MultifurcationError, ParseError
from bgcr.phylo import internal_nodes_by_depth, parse_newick, to_annotated_newick, to_newick

from conftest import trees


def test_balanced_four_leaves():
    t = parse_newick("((A,B),(C,D));")
    assert t.n_leaves == 4
    assert t.n_internal == 3
    assert t.depth[t.node_by_name("A")] == 2
    assert t.root == 0 and t.parent[0] == -1


def test_annotations_are_ignored():
    t = parse_newick("((A:0.1,B:0.2)n1:0.3,C:0.5);")
    assert (t.n_leaves, t.n_internal) == (3, 2)
    assert t.topology() == parse_newick("((A,B),C);").topology()


def test_quoted_labels_and_comments():
    t = parse_newick("(('x y',B)[a comment],'it''s');")
    assert sorted(t.leaf_names) == ["B", "it's", "x y"]
    assert parse_newick(to_newick(t)).topology() == t.topology()


@pytest.mark.parametrize("text, exc", [
    ("(A,B,C);", MultifurcationError),
    ("((A),B);", MultifurcationError),
    ("((A,B),C;", ParseError),
    ("((A,B),C)", ParseError),
    ("((A,B),C));", ParseError),
    ("(,B);", ParseError),
    ("(A,B);(C,D);", ParseError),
    ("(A,A);", DuplicateLeafError),
    ("(A:x,B);", ParseError),
])
def test_rejects_malformed(text, exc):
    with pytest.raises(exc):
        parse_newick(text)


def test_depth_order_examples():
    t = parse_newick("((A,B),(C,D));")
    order = internal_nodes_by_depth(t)
    assert [int(t.depth[i]) for i in order] == [1, 1, 0]
    assert order[:2] == sorted(order[:2]) and order[-1] == t.root

    cat = parse_newick("((((A,B),C),D),E);")
    assert [int(cat.depth[i]) for i in internal_nodes_by_depth(cat)] == [3, 2, 1, 0]
    assert internal_nodes_by_depth(parse_newick("(A,B);")) == [0]


def test_sibling_and_sides():
    t = parse_newick("((A,B),C);")
    a, b = t.node_by_name("A"), t.node_by_name("B")
    assert t.sibling(a) == b and t.sibling(b) == a
    assert t.is_left_child(a) and not t.is_left_child(b)
    assert sorted(t.names[i] for i in t.leaf_descendants(t.root)) == ["A", "B", "C"]


def test_annotated_newick():
    t = parse_newick("(A,B);")
    assert to_annotated_newick(t, {0: 0.5}) == "(A,B)0.5000;"
    t4 = parse_newick("((A,B),(C,D));")
    text = to_annotated_newick(t4, {i: 0.0 for i in t4.internal_nodes})
    assert text.count("0.0000") == 3
    with pytest.raises(MissingValueError):
        to_annotated_newick(t4, {0: 0.1})


@given(trees(max_leaves=30))
def test_leaf_internal_counts(t):
    assert t.n_internal == t.n_leaves - 1
    assert len(t.leaves) + len(t.internal_nodes) == t.n_nodes
    for node in range(1, t.n_nodes):
        assert t.depth[node] == t.depth[t.parent[node]] + 1


@given(trees(max_leaves=30))
def test_newick_roundtrip(t):
    assert parse_newick(to_newick(t)).topology() == t.topology()
    vals = np.linspace(0, 1, t.n_nodes)
    assert parse_newick(to_annotated_newick(t, vals)).topology() == t.topology()


@given(trees(max_leaves=30))
def test_depth_order_is_bottom_up(t):
    seen = set()
    for node in internal_nodes_by_depth(t):
        for child in (t.left[node], t.right[node]):
            assert t.is_leaf(child) or child in seen
        seen.add(node)
    assert seen == set(t.internal_nodes)
