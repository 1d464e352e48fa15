"""Rooted full-binary phylogenetic trees: Newick parsing, indexing, output.

Node ids are dense integers assigned in preorder while parsing, so the root
is always node 0. All per-node arrays elsewhere in the package are indexed by
these ids.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DuplicateLeafError, MissingValueError, MultifurcationError, ParseError

__all__ = [
    "PhyloTree",
    "parse_newick",
    "read_newick",
    "internal_nodes_by_depth",
    "to_newick",
    "to_annotated_newick",
]

_TOKEN = re.compile(r"\s*(?:(?P<punct>[(),:;])|'(?P<quoted>(?:[^']|'')*)'|(?P<bare>[^\s(),:;']+))")
_NEEDS_QUOTE = re.compile(r"[\s(),:;'\[\]]")


@dataclass(frozen=True)
class PhyloTree:
    """Immutable rooted full binary tree.

    Leaves have ``left == right == -1``; the root has ``parent == -1``.
    """

    left: np.ndarray
    right: np.ndarray
    parent: np.ndarray
    depth: np.ndarray
    names: tuple  # leaf name or None for internal nodes

    def __post_init__(self):
        for arr in (self.left, self.right, self.parent, self.depth):
            arr.setflags(write=False)

    @classmethod
    def from_children(cls, children: list, names: list) -> "PhyloTree":
        """Build from a preorder list of ``(left, right)`` pairs (``None`` for leaves)."""
        n = len(children)
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        parent = np.full(n, -1, dtype=np.int64)
        for i, ch in enumerate(children):
            if ch is not None:
                left[i], right[i] = ch
                parent[ch[0]] = i
                parent[ch[1]] = i
        depth = np.zeros(n, dtype=np.int64)
        for i in range(1, n):
            # preorder: parents precede children
            depth[i] = depth[parent[i]] + 1
        tree = cls(left, right, parent, depth, tuple(names))
        tree._validate()
        return tree

    def _validate(self):
        n = self.n_nodes
        if n == 0:
            raise ParseError("empty tree")
        if int(np.sum(self.parent == -1)) != 1 or self.parent[0] != -1:
            raise ParseError("tree must have a single root at index 0")
        leaves = [self.names[i] for i in range(n) if self.is_leaf(i)]
        if any(not name for name in leaves):
            raise ParseError("leaf without a name")
        if len(set(leaves)) != len(leaves):
            dup = sorted({x for x in leaves if leaves.count(x) > 1})
            raise DuplicateLeafError(f"duplicate leaf names: {dup}")
        if self.n_internal != self.n_leaves - 1:
            raise MultifurcationError("tree is not full binary")

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    @property
    def root(self) -> int:
        return 0

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0

    @property
    def leaves(self) -> list[int]:
        return [i for i in range(self.n_nodes) if self.left[i] < 0]

    @property
    def internal_nodes(self) -> list[int]:
        return [i for i in range(self.n_nodes) if self.left[i] >= 0]

    @property
    def leaf_names(self) -> list[str]:
        """Leaf names in left-to-right reading order."""
        return [self.names[i] for i in self.leaves]

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.left < 0))

    @property
    def n_internal(self) -> int:
        return self.n_nodes - self.n_leaves

    def sibling(self, node: int) -> int:
        p = self.parent[node]
        if p < 0:
            return -1
        return int(self.right[p] if self.left[p] == node else self.left[p])

    def is_left_child(self, node: int) -> bool:
        p = self.parent[node]
        return p >= 0 and self.left[p] == node

    def leaf_descendants(self, node: int) -> list[int]:
        """Leaf ids below ``node`` (inclusive), in reading order."""
        out, stack = [], [node]
        while stack:
            i = stack.pop()
            if self.left[i] < 0:
                out.append(i)
            else:
                stack.append(int(self.right[i]))
                stack.append(int(self.left[i]))
        return out

    def node_by_name(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def topology(self):
        """Hashable nested-tuple form using leaf names; equal iff same rooted ordered topology."""

        def rec(i):
            if self.left[i] < 0:
                return self.names[i]
            return (rec(self.left[i]), rec(self.right[i]))

        return rec(0)


def _tokenize(text: str):
    pos, n = 0, len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        if text[pos] == "[":  # Newick comment
            end = text.find("]", pos)
            if end < 0:
                raise ParseError("unterminated comment")
            pos = end + 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character at offset {pos}")
        pos = m.end()
        if m.group("punct") is not None:
            yield m.group("punct"), None
        elif m.group("quoted") is not None:
            yield "label", m.group("quoted").replace("''", "'")
        else:
            yield "label", m.group("bare")


def parse_newick(text: str) -> PhyloTree:
    """Parse a single ``;``-terminated Newick tree.

    Branch lengths and internal-node labels are accepted and discarded.
    """
    tokens = list(_tokenize(text))
    if not tokens or tokens[-1][0] != ";":
        raise ParseError("Newick string must end with ';'")
    if any(kind == ";" for kind, _ in tokens[:-1]):
        raise ParseError("multiple trees in input")
    tokens = tokens[:-1]
    children: list = []
    names: list = []
    pos = 0

    def peek():
        return tokens[pos][0] if pos < len(tokens) else None

    def annotations():
        # optional label then optional ':length'
        nonlocal pos
        label = None
        if peek() == "label":
            label = tokens[pos][1]
            pos += 1
        if peek() == ":":
            pos += 1
            if peek() != "label":
                raise ParseError("missing branch length after ':'")
            try:
                float(tokens[pos][1])
            except ValueError:
                raise ParseError(f"bad branch length {tokens[pos][1]!r}") from None
            pos += 1
        return label

    def subtree() -> int:
        nonlocal pos
        idx = len(children)
        children.append(None)
        names.append(None)
        if peek() == "(":
            pos += 1
            if peek() in (")", ","):
                raise ParseError("empty clade")
            kids = [subtree()]
            while peek() == ",":
                pos += 1
                if peek() in (")", ",", None):
                    raise ParseError("empty clade")
                kids.append(subtree())
            if peek() != ")":
                raise ParseError("unbalanced parentheses")
            pos += 1
            if len(kids) != 2:
                raise MultifurcationError(f"node with {len(kids)} children; tree must be full binary")
            children[idx] = (kids[0], kids[1])
            annotations()
        else:
            label = annotations()
            if not label:
                raise ParseError("leaf without a name")
            names[idx] = label
        return idx

    subtree()
    if pos != len(tokens):
        raise ParseError("unbalanced parentheses or trailing tokens")
    return PhyloTree.from_children(children, names)


def read_newick(path) -> PhyloTree:
    with open(path, encoding="utf-8") as fh:
        return parse_newick(fh.read())


def internal_nodes_by_depth(tree: PhyloTree) -> list[int]:
    """Internal nodes ordered deepest first; equal depths keep id order.

    Every internal node comes after its internal children, so this is the
    collection order; reverse it for top-down passes.
    """
    internal = tree.internal_nodes
    return sorted(internal, key=lambda i: (-int(tree.depth[i]), i))


def _quote(name: str) -> str:
    if _NEEDS_QUOTE.search(name):
        return "'" + name.replace("'", "''") + "'"
    return name


def _serialize(tree: PhyloTree, label) -> str:
    def rec(i):
        if tree.is_leaf(i):
            return _quote(tree.names[i])
        return f"({rec(tree.left[i])},{rec(tree.right[i])}){label(i)}"

    return rec(tree.root) + ";"


def to_newick(tree: PhyloTree) -> str:
    return _serialize(tree, lambda i: "")


def to_annotated_newick(tree: PhyloTree, values: Mapping[int, float]) -> str:
    """Newick text with every internal node labelled by its value (4 decimals).

    ``values`` is a mapping from node id, or an array indexed by node id in
    which NaN marks a missing entry.
    """
    if not isinstance(values, Mapping):
        arr = np.asarray(values, dtype=float)
        values = {i: arr[i] for i in range(len(arr)) if not np.isnan(arr[i])}
    missing = [i for i in tree.internal_nodes if i not in values]
    if missing:
        raise MissingValueError(f"no value for internal nodes {missing}")
    return _serialize(tree, lambda i: f"{float(values[i]):.4f}")
