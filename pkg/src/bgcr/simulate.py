"""Synthetic two-group datasets from the Dirichlet-tree multinomial model.

Random numbers come from numpy's ``Generator(PCG64(seed))`` throughout, so a
seed pins a dataset exactly for a given numpy release.

Scenarios perturb a simulated base table:

* ``null``: random split into two groups, nothing changed.
* ``I``: one OTU scaled by ``1 + p/100`` in the second group.
* ``II``: eight OTUs scaled likewise.
* ``III``: three OTUs under a chain of nested nodes scaled by
  ``0.33p``, ``0.67p`` and ``p`` percent in the second group.
* ``IV``: a binary confounder ("male") boosts one OTU by 175% and is
  assigned unevenly (4:1 vs 1:4) across groups; ``p > 0`` additionally
  scales a second OTU in the second group.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import OtuTable
from .errors import UnknownTarget
from .phylo import PhyloTree, parse_newick, to_newick

SCENARIOS = ("null", "I", "II", "III", "IV")
CHAIN_FRACTIONS = (0.33, 0.67, 1.0)


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def random_tree(n_leaves: int, rng: np.random.Generator, prefix: str = "OTU") -> PhyloTree:
    """Random full binary tree from uniform recursive splits of a shuffled leaf list."""
    names = [f"{prefix}{i + 1}" for i in range(n_leaves)]
    order = list(rng.permutation(n_leaves))

    def build(items):
        if len(items) == 1:
            return names[items[0]]
        cut = int(rng.integers(1, len(items)))
        return f"({build(items[:cut])},{build(items[cut:])})"

    return parse_newick(build(order) + ";")


def _as_node_array(tree: PhyloTree, value, what: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(tree.n_nodes, float(arr))
    if arr.shape != (tree.n_nodes,):
        raise ValueError(f"{what} must be a scalar or have one entry per tree node")
    return arr


def generate_base(tree: PhyloTree, theta, nu, n: int, totals=(500, 2000), seed=0) -> OtuTable:
    """Draw ``n`` samples: per-sample totals, then beta-binomial splits top-down.

    ``theta`` and ``nu`` are scalars or per-node arrays (leaf entries unused).
    ``totals`` is an inclusive integer range ``(low, high)`` or a callable
    ``(rng, n) -> array``.
    """
    rng = make_rng(seed)
    theta = _as_node_array(tree, theta, "theta")
    nu = _as_node_array(tree, nu, "nu")
    internal = tree.internal_nodes
    if np.any(~((theta[internal] > 0) & (theta[internal] < 1))) or np.any(~(nu[internal] > 0)):
        raise ValueError("need theta in (0, 1) and nu > 0 at every internal node")
    if callable(totals):
        N = np.asarray(totals(rng, n), dtype=np.int64)
    else:
        lo, hi = totals
        N = rng.integers(lo, hi + 1, size=n)
    counts = np.zeros((n, tree.n_nodes), dtype=np.int64)
    counts[:, tree.root] = N
    for node in range(tree.n_nodes):  # preorder ids: parents first
        if tree.is_leaf(node):
            continue
        split = rng.beta(theta[node] * nu[node], (1.0 - theta[node]) * nu[node], size=n)
        left = rng.binomial(counts[:, node], split)
        counts[:, tree.left[node]] = left
        counts[:, tree.right[node]] = counts[:, node] - left
    leaves = tree.leaves
    ids = tuple(f"S{j + 1}" for j in range(n))
    return OtuTable(ids, tuple(tree.names[i] for i in leaves), counts[:, leaves].copy())


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: str = "null"
    p: float = 0.0
    targets: tuple | None = None  # OTU names; chosen at random when None
    n0: int = 40
    n1: int = 40
    seed: int = 0
    confounder_boost: float = 175.0
    confounder_target: str | None = None  # scenario IV only
    male_share_group0: float = 0.8

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.p < 0:
            raise ValueError("percentage increase must be non-negative")


@dataclass
class ScenarioData:
    table: OtuTable
    base: OtuTable  # same sample order, before any count changes
    group: np.ndarray
    covariates: dict = field(default_factory=dict)  # name -> per-sample array
    targets: dict = field(default_factory=dict)


def scale_counts(counts: np.ndarray, percent: float) -> np.ndarray:
    """Multiply by ``1 + percent/100`` and round half up."""
    return np.floor(counts * (1.0 + percent / 100.0) + 0.5).astype(np.int64)


def _middle_otus(table: OtuTable, share: float = 0.8) -> list:
    means = table.counts.mean(axis=0)
    lo, hi = np.quantile(means, [(1 - share) / 2, 1 - (1 - share) / 2])
    return [j for j in range(len(means)) if lo <= means[j] <= hi]


def default_chain(tree: PhyloTree) -> tuple:
    """Three leaves whose relative scaling perturbs a chain of three nested nodes.

    Prefers a node ``A`` (not the root) with a cherry on one side and a leaf
    on the other; returns ``(cherry leaf, cherry leaf, lone leaf)``.
    """
    fallback = None
    for node in tree.internal_nodes:
        if node == tree.root:
            continue
        kids = (tree.left[node], tree.right[node])
        for cherry, other in (kids, kids[::-1]):
            if tree.is_leaf(cherry) or not (tree.is_leaf(tree.left[cherry]) and tree.is_leaf(tree.right[cherry])):
                continue
            a, b = tree.names[tree.left[cherry]], tree.names[tree.right[cherry]]
            lone = tree.names[tree.leaf_descendants(other)[0]]
            if tree.is_leaf(other):
                return a, b, lone
            fallback = fallback or (a, b, lone)
    if fallback is None:
        raise UnknownTarget("tree has no chain of three nested internal nodes")
    return fallback


def _col(table: OtuTable, name: str) -> int:
    try:
        return table.otu_names.index(name)
    except ValueError:
        raise UnknownTarget(f"OTU {name!r} not in table") from None


def apply_scenario(base: OtuTable, spec: ScenarioSpec, tree: PhyloTree | None = None) -> ScenarioData:
    """Assign groups and perturb counts per ``spec``; see the module docstring."""
    n = base.n_samples
    if spec.n0 + spec.n1 != n:
        raise ValueError(f"group sizes {spec.n0}+{spec.n1} do not match {n} samples")
    rng = make_rng([spec.seed, 1])
    counts = base.counts.copy()
    covariates = {}
    targets = {}

    if spec.scenario == "IV":
        n_male = n // 2
        sex = np.zeros(n, dtype=np.int64)
        sex[rng.permutation(n)[:n_male]] = 1
        males_g0 = int(round(spec.male_share_group0 * spec.n0))
        females_g0 = spec.n0 - males_g0
        male_idx = np.flatnonzero(sex == 1)
        female_idx = np.flatnonzero(sex == 0)
        if males_g0 > len(male_idx) or females_g0 > len(female_idx):
            raise ValueError("group sizes incompatible with the confounder split")
        male_idx = rng.permutation(male_idx)
        female_idx = rng.permutation(female_idx)
        group = np.ones(n, dtype=np.int64)
        group[male_idx[:males_g0]] = 0
        group[female_idx[:females_g0]] = 0
        middle = _middle_otus(base)
        if spec.confounder_target is not None:
            conf = _col(base, spec.confounder_target)
        else:
            conf = int(rng.choice(middle))
        counts[sex == 1, conf] = scale_counts(counts[sex == 1, conf], spec.confounder_boost)
        covariates["male"] = sex
        targets["confounder"] = [base.otu_names[conf]]
        if spec.p > 0:
            if spec.targets:
                sig = _col(base, spec.targets[0])
            else:
                sig = int(rng.choice([j for j in middle if j != conf]))
            rows = group == 1
            counts[rows, sig] = scale_counts(counts[rows, sig], spec.p)
            targets["signal"] = [base.otu_names[sig]]
    else:
        group = np.ones(n, dtype=np.int64)
        group[rng.permutation(n)[:spec.n0]] = 0
        rows = group == 1
        if spec.scenario in ("I", "II"):
            k = 1 if spec.scenario == "I" else 8
            if spec.targets:
                cols = [_col(base, t) for t in spec.targets]
            else:
                middle = _middle_otus(base)
                cols = [int(c) for c in rng.choice(middle, size=min(k, len(middle)), replace=False)]
            for c in cols:
                counts[rows, c] = scale_counts(counts[rows, c], spec.p)
            targets["signal"] = [base.otu_names[c] for c in cols]
        elif spec.scenario == "III":
            if spec.targets:
                names = tuple(spec.targets)
            elif tree is not None:
                names = default_chain(tree)
            else:
                raise UnknownTarget("scenario III needs chain targets or a tree")
            if len(names) != 3:
                raise UnknownTarget("scenario III needs exactly three chain OTUs")
            for name, frac in zip(names, CHAIN_FRACTIONS):
                c = _col(base, name)
                counts[rows, c] = scale_counts(counts[rows, c], frac * spec.p)
            targets["signal"] = list(names)

    table = OtuTable(base.sample_ids, base.otu_names, counts)
    return ScenarioData(table, base, group, covariates, targets)


def simulate_dataset(tree: PhyloTree, spec: ScenarioSpec, theta=0.5, nu=20.0, totals=(500, 2000)) -> ScenarioData:
    base = generate_base(tree, theta, nu, spec.n0 + spec.n1, totals, seed=[spec.seed, 0])
    return apply_scenario(base, spec, tree)


def write_scenario(data: ScenarioData, tree: PhyloTree, outdir, spec: ScenarioSpec | None = None) -> dict:
    """Write counts.tsv, base_counts.tsv, covariates.csv, tree.nwk and manifest.json."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    data.table.to_tsv(out / "counts.tsv")
    data.base.to_tsv(out / "base_counts.tsv")
    names = ["group", *data.covariates]
    with open(out / "covariates.csv", "w", encoding="utf-8") as fh:
        fh.write(",".join(["sample", *names]) + "\n")
        for j, sid in enumerate(data.table.sample_ids):
            vals = [str(int(data.group[j]))] + [str(int(data.covariates[c][j])) for c in data.covariates]
            fh.write(",".join([sid, *vals]) + "\n")
    (out / "tree.nwk").write_text(to_newick(tree) + "\n", encoding="utf-8")
    manifest = {"targets": data.targets, "spec": asdict(spec) if spec else None,
                "rng": "numpy.random.Generator(PCG64)"}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return {k: str(out / k) for k in ("counts.tsv", "base_counts.tsv", "covariates.csv", "tree.nwk", "manifest.json")}
