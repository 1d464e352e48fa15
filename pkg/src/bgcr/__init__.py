"""Bayesian graphical compositional regression for two-group comparisons of tree-structured counts."""
from .dataset import AlignedDataset, Covariates, OtuTable, aggregate, load_counts, load_covariates, standardize
from .decision import DecisionConfig, decide_global, significant_nodes
from .graph_prior import ArParams, solve_alpha, solve_tau_max
from .message_passing import PosteriorReport, brute_force_posterior, infer, run_bgcr
from .node_model import NodeEvidence, PriorSpec, compute_evidence, node_evidence
from .phylo import PhyloTree, parse_newick, read_newick
from .select import enumerate_models

__version__ = "0.1.0"

__all__ = [
    "AlignedDataset", "ArParams", "Covariates", "DecisionConfig", "NodeEvidence", "OtuTable", "PhyloTree",
    "PosteriorReport", "PriorSpec", "aggregate", "brute_force_posterior", "compute_evidence", "decide_global",
    "enumerate_models", "infer", "load_counts", "load_covariates", "node_evidence", "parse_newick",
    "read_newick", "run_bgcr", "significant_nodes", "solve_alpha", "solve_tau_max", "standardize",
]
