"""Replicated simulation studies shared by the scripts and the acceptance suite."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import partial

import numpy as np

from .dataset import Covariates, aggregate
from .message_passing import run_bgcr
from .node_model import PriorSpec
from .phylo import PhyloTree
from .simulate import ScenarioSpec, default_chain, make_rng, random_tree, simulate_dataset

FIXED_TREE_SEED = 2024


def balanced_theta(tree: PhyloTree) -> np.ndarray:
    """Split proportions giving every OTU the same expected share."""
    theta = np.full(tree.n_nodes, np.nan)
    for node in tree.internal_nodes:
        nl = len(tree.leaf_descendants(tree.left[node]))
        theta[node] = nl / len(tree.leaf_descendants(node))
    return theta


def fixed_tree(n_leaves: int = 32, seed: int = FIXED_TREE_SEED) -> PhyloTree:
    """Seeded random tree that contains a cherry-plus-leaf chain."""
    rng = make_rng(seed)
    while True:
        tree = random_tree(n_leaves, rng)
        a, b, c = default_chain(tree)
        node = tree.parent[tree.node_by_name(c)]
        if tree.parent[tree.node_by_name(a)] in (tree.left[node], tree.right[node]):
            return tree


@dataclass
class Replicate:
    pjap: float
    pjap_bcr: float
    tau: float


def run_replicate(tree: PhyloTree, spec: ScenarioSpec, *, adjust=(), nu: float = 20.0, totals=(500, 2000),
                  prior: PriorSpec = PriorSpec(), tau_max: float = 6.0) -> Replicate:
    data = simulate_dataset(tree, spec, theta=balanced_theta(tree), nu=nu, totals=totals)
    cols = [np.ones(len(data.group))] + [data.covariates[c].astype(float) for c in adjust]
    cov = Covariates(sample_ids=data.table.sample_ids, columns=("intercept", *adjust),
                     matrix=np.column_stack(cols), group=data.group)
    aligned = aggregate(data.table, tree, cov)
    rep = run_bgcr(aligned, tree, prior, "fit", tau_max=tau_max)
    return Replicate(rep.pjap, rep.bcr_pjap, rep.tau)


def run_study(tree: PhyloTree, spec: ScenarioSpec, n_rep: int, seed0: int = 0, n_jobs: int = 1, **kwargs):
    specs = [replace(spec, seed=seed0 + k) for k in range(n_rep)]
    if n_jobs == 1:
        return [run_replicate(tree, s, **kwargs) for s in specs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(partial(run_replicate, tree, **kwargs), specs))
