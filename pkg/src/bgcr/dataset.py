"""OTU tables, covariates and tree-aggregated node counts."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    HeaderMismatch,
    KTooLarge,
    LeafNameMismatch,
    NegativeCount,
    NonBinaryGroup,
    NonIntegerCell,
    NonNumericColumn,
    SampleIdMismatch,
    UnknownColumn,
    ZeroVarianceColumn,
)
from .phylo import PhyloTree

MISSING = ("", "NA")


@dataclass(frozen=True)
class OtuTable:
    sample_ids: tuple
    otu_names: tuple
    counts: np.ndarray  # (n_samples, K) int64

    def __post_init__(self):
        self.counts.setflags(write=False)

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def n_samples(self) -> int:
        return len(self.sample_ids)

    def subset_samples(self, ids) -> "OtuTable":
        index = {s: i for i, s in enumerate(self.sample_ids)}
        rows = [index[s] for s in ids]
        return OtuTable(tuple(ids), self.otu_names, self.counts[rows].copy())

    def to_tsv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["sample", *self.otu_names])
            for sid, row in zip(self.sample_ids, self.counts):
                w.writerow([sid, *(int(v) for v in row)])


@dataclass(frozen=True)
class Covariates:
    """Design rows with a leading intercept column, plus group indicators."""

    sample_ids: tuple
    columns: tuple  # names, first is "intercept"
    matrix: np.ndarray  # (n, p+1)
    group: np.ndarray  # (n,) int 0/1
    group_levels: tuple = ("0", "1")  # label coded 0, label coded 1
    n_dropped: int = 0
    level_codes: dict = field(default_factory=dict)  # column -> (level0, level1)
    scaling: dict = field(default_factory=dict)  # column -> (mean, sd)

    @property
    def p(self) -> int:
        return self.matrix.shape[1] - 1

    def select(self, names) -> "Covariates":
        """Keep the intercept plus the named adjustment columns, in the given order."""
        for name in names:
            if name not in self.columns:
                raise UnknownColumn(name)
        idx = [0] + [self.columns.index(nm) for nm in names]
        return replace(
            self,
            columns=tuple(self.columns[i] for i in idx),
            matrix=self.matrix[:, idx],
            level_codes={k: v for k, v in self.level_codes.items() if k in names},
            scaling={k: v for k, v in self.scaling.items() if k in names},
        )

    def subset_samples(self, ids) -> "Covariates":
        index = {s: i for i, s in enumerate(self.sample_ids)}
        rows = [index[s] for s in ids]
        return replace(self, sample_ids=tuple(ids), matrix=self.matrix[rows], group=self.group[rows])


@dataclass(frozen=True)
class NodeData:
    """Counts for one local beta-binomial regression.

    ``left`` is the count routed to the left child, ``total`` the node count;
    ``X`` the design rows and ``z`` the group indicators.
    """

    left: np.ndarray
    total: np.ndarray
    X: np.ndarray
    z: np.ndarray

    @property
    def right(self) -> np.ndarray:
        return self.total - self.left

    def design(self, hypothesis: int) -> np.ndarray:
        if hypothesis == 0:
            return self.X
        return np.column_stack([self.X, self.z])


@dataclass(frozen=True)
class AlignedDataset:
    sample_ids: tuple
    node_counts: np.ndarray  # (n_samples, n_nodes), every tree node
    X: np.ndarray
    z: np.ndarray
    columns: tuple
    tree: PhyloTree
    group_levels: tuple = ("0", "1")

    def node_data(self, node: int) -> NodeData:
        t = self.tree
        return NodeData(
            left=self.node_counts[:, t.left[node]],
            total=self.node_counts[:, node],
            X=self.X,
            z=self.z,
        )

    def with_design(self, X: np.ndarray, columns) -> "AlignedDataset":
        return replace(self, X=X, columns=tuple(columns))


def _parse_count(cell: str, row: int, col: str) -> int:
    text = cell.strip()
    try:
        value = int(text)
    except ValueError:
        raise NonIntegerCell(f"row {row}, column {col!r}: {cell!r} is not an integer") from None
    if value < 0:
        raise NegativeCount(f"row {row}, column {col!r}: negative count {value}")
    return value


def load_counts(path) -> OtuTable:
    """Read a TSV count table: header ``sample<TAB>otu1<TAB>...``, one row per sample."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise HeaderMismatch("empty count table")
    header = [h.strip() for h in rows[0]]
    otus = header[1:]
    if not otus:
        raise HeaderMismatch("no OTU columns")
    if len(set(otus)) != len(otus) or any(not o for o in otus):
        raise HeaderMismatch("OTU names must be unique and non-empty")
    ids, data = [], []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise HeaderMismatch(f"row {r} has {len(row)} fields, header has {len(header)}")
        ids.append(row[0].strip())
        data.append([_parse_count(c, r, otus[k]) for k, c in enumerate(row[1:])])
    if len(set(ids)) != len(ids):
        raise HeaderMismatch("duplicate sample ids")
    counts = np.array(data, dtype=np.int64).reshape(len(ids), len(otus))
    return OtuTable(tuple(ids), tuple(otus), counts)


def _code_binary(values, name, exc):
    levels = sorted(set(values))
    if len(levels) != 2:
        raise exc(f"column {name!r} has {len(levels)} distinct values {levels}; need exactly 2")
    return np.array([levels.index(v) for v in values], dtype=np.int64), tuple(levels)


def load_covariates(path, group_col: str, adjust_cols=()) -> Covariates:
    """Read a CSV of per-sample covariates (first column is the sample id).

    Rows with a missing value (empty or ``NA``) in the group column or any
    adjustment column are dropped; ``n_dropped`` records how many. Two-level
    columns are coded 0/1 by lexicographic order of their labels.
    """
    adjust_cols = list(adjust_cols)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        rows = list(reader)
    if not fields:
        raise UnknownColumn("covariate file has no header")
    id_col = fields[0]
    for col in [group_col, *adjust_cols]:
        if col not in fields:
            raise UnknownColumn(f"column {col!r} not in covariate file")
    selected = [group_col, *adjust_cols]
    keep = [r for r in rows if all((r[c] or "").strip() not in MISSING for c in selected)]
    n_dropped = len(rows) - len(keep)
    ids = tuple(r[id_col].strip() for r in keep)
    if len(set(ids)) != len(ids):
        raise SampleIdMismatch("duplicate sample ids in covariate file")
    group, group_levels = _code_binary([r[group_col].strip() for r in keep], group_col, NonBinaryGroup)

    cols = [np.ones(len(keep))]
    level_codes = {}
    for col in adjust_cols:
        raw = [r[col].strip() for r in keep]
        try:
            cols.append(np.array([float(v) for v in raw]))
        except ValueError:
            coded, levels = _code_binary(raw, col, NonNumericColumn)
            cols.append(coded.astype(float))
            level_codes[col] = levels
    return Covariates(
        sample_ids=ids,
        columns=("intercept", *adjust_cols),
        matrix=np.column_stack(cols),
        group=group,
        group_levels=group_levels,
        n_dropped=n_dropped,
        level_codes=level_codes,
    )


def filter_top_k(table: OtuTable, k: int) -> OtuTable:
    """Keep the ``k`` OTUs with the largest total counts (ties by name)."""
    K = len(table.otu_names)
    if k < 1 or k > K:
        raise KTooLarge(f"k={k} outside [1, {K}]")
    totals = table.counts.sum(axis=0)
    order = sorted(range(K), key=lambda j: (-int(totals[j]), table.otu_names[j]))
    kept = sorted(order[:k])
    return OtuTable(table.sample_ids, tuple(table.otu_names[j] for j in kept), table.counts[:, kept].copy())


def standardize(cov: Covariates) -> Covariates:
    """Center and scale continuous columns (three or more distinct values).

    Uses the sample standard deviation (divisor n - 1). Binary columns and the
    intercept are left alone.
    """
    M = cov.matrix.astype(float).copy()
    scaling = dict(cov.scaling)
    for j, name in enumerate(cov.columns):
        if j == 0:
            continue
        col = M[:, j]
        distinct = np.unique(col)
        if len(distinct) < 2:
            raise ZeroVarianceColumn(f"column {name!r} is constant")
        if len(distinct) < 3:
            continue
        mean = col.mean()
        sd = col.std(ddof=1)
        M[:, j] = (col - mean) / sd
        scaling[name] = (float(mean), float(sd))
    return replace(cov, matrix=M, scaling=scaling)


def aggregate(table: OtuTable, tree: PhyloTree, cov: Covariates | None = None, groups=None) -> AlignedDataset:
    """Aggregate leaf counts up the tree and align samples with the design.

    With ``cov`` given, samples are matched by id (the table may contain
    samples dropped from the covariates by complete-case filtering; they are
    excluded). Without it, ``groups`` supplies indicators in table order and
    the design is intercept-only.
    """
    if set(table.otu_names) != set(tree.leaf_names):
        only_t = sorted(set(table.otu_names) - set(tree.leaf_names))
        only_tree = sorted(set(tree.leaf_names) - set(table.otu_names))
        raise LeafNameMismatch(f"table-only OTUs {only_t[:5]}, tree-only leaves {only_tree[:5]}")
    if cov is not None:
        missing = [s for s in cov.sample_ids if s not in set(table.sample_ids)]
        if missing:
            raise SampleIdMismatch(f"covariate samples missing from count table: {missing[:5]}")
        table = table.subset_samples(cov.sample_ids)
        X, z, columns, levels = cov.matrix, cov.group, cov.columns, cov.group_levels
    else:
        if groups is None:
            raise SampleIdMismatch("need covariates or group indicators")
        z = np.asarray(groups, dtype=np.int64)
        if z.shape != (table.n_samples,):
            raise SampleIdMismatch("group vector length does not match sample count")
        if not set(np.unique(z)) <= {0, 1}:
            raise NonBinaryGroup("group indicators must be 0/1")
        X = np.ones((table.n_samples, 1))
        columns, levels = ("intercept",), ("0", "1")

    n = table.n_samples
    node_counts = np.zeros((n, tree.n_nodes), dtype=np.int64)
    col_of = {name: j for j, name in enumerate(table.otu_names)}
    for leaf in tree.leaves:
        node_counts[:, leaf] = table.counts[:, col_of[tree.names[leaf]]]
    for node in sorted(tree.internal_nodes, key=lambda i: -int(tree.depth[i])):
        node_counts[:, node] = node_counts[:, tree.left[node]] + node_counts[:, tree.right[node]]
    node_counts.setflags(write=False)
    return AlignedDataset(
        sample_ids=table.sample_ids,
        node_counts=node_counts,
        X=np.asarray(X, dtype=float),
        z=np.asarray(z, dtype=np.int64),
        columns=tuple(columns),
        tree=tree,
        group_levels=tuple(levels),
    )
