"""Exact posterior inference on the clique tree.

Messages ``log_phi[A, i]`` are the log prior predictive probabilities of the
data in the subtree under ``A`` given that ``A``'s parent clique is in state
``i``. Collection runs deepest-first, distribution turns each node's
transition matrix into its posterior counterpart, and a top-down sweep
accumulates posterior clique marginals. Everything is kept in log space.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .dataset import AlignedDataset
from .errors import TreeTooLarge, ZeroMessage
from .graph_prior import (
    CLIQUE_STATES,
    DEFAULT_TAU_MAX,
    ArParams,
    all_transitions,
    ar_conditional,
    solve_alpha,
)
from .node_model import NodeEvidence, PriorSpec, compute_evidence
from .phylo import PhyloTree, internal_nodes_by_depth

TAU_STEP = 0.05
# profile values closer than this count as ties (resolved toward smaller tau)
TIE_TOL = 1e-9

_SELF = CLIQUE_STATES[:, 0]
_ACTIVE = _SELF == 1


@dataclass
class Posterior:
    pmap: np.ndarray  # (n_nodes,), NaN at leaves
    pjap: float
    log_marginal: float
    log_phi: np.ndarray = field(repr=False)  # (n_nodes, 8)
    xi_post: np.ndarray = field(repr=False)  # (n_nodes, 8, 8)
    clique_marginals: np.ndarray = field(repr=False)  # (n_nodes, 8)


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def _node_terms(tree, node, log_xi, log_m, log_phi):
    """terms[i, i'] = log xi + log M_{self(i')} + child messages at i'."""
    col = log_m[node][_SELF].copy()
    for child in (tree.left[node], tree.right[node]):
        if not tree.is_leaf(child):
            col += log_phi[child]
    return log_xi[node] + col[None, :]


def collect(tree: PhyloTree, evidence: NodeEvidence, transitions: np.ndarray):
    """Collection pass. Returns ``(log_phi, log marginal likelihood)``."""
    log_m = np.stack([evidence.log_m0, evidence.log_m1], axis=1)
    log_xi = _log(transitions)
    log_phi = np.zeros((tree.n_nodes, 8))
    for node in internal_nodes_by_depth(tree):
        log_phi[node] = special.logsumexp(_node_terms(tree, node, log_xi, log_m, log_phi), axis=1)
    return log_phi, float(log_phi[tree.root, 0])


def distribute(tree: PhyloTree, evidence: NodeEvidence, transitions: np.ndarray, log_phi: np.ndarray) -> np.ndarray:
    """Posterior transition matrices, shape ``(n_nodes, 8, 8)``."""
    log_m = np.stack([evidence.log_m0, evidence.log_m1], axis=1)
    log_xi = _log(transitions)
    out = np.zeros((tree.n_nodes, 8, 8))
    for node in tree.internal_nodes:
        if not np.all(np.isfinite(log_phi[node])):
            raise ZeroMessage(f"message of node {node} vanished")
        terms = _node_terms(tree, node, log_xi, log_m, log_phi)
        out[node] = np.exp(terms - log_phi[node][:, None])
    return out


def summarize(tree: PhyloTree, xi_post: np.ndarray):
    """PMAPs, PJAP and posterior clique marginals from posterior transitions."""
    marg = np.zeros((tree.n_nodes, 8))
    pmap = np.full(tree.n_nodes, np.nan)
    for node in reversed(internal_nodes_by_depth(tree)):
        if node == tree.root:
            # imaginary parent clique, uniform over its 8 states
            marg[node] = xi_post[node].mean(axis=0)
        else:
            marg[node] = marg[tree.parent[node]] @ xi_post[node]
        pmap[node] = min(1.0, marg[node][_ACTIVE].sum())
    internal = tree.internal_nodes
    with np.errstate(divide="ignore"):
        log_all_null = float(np.sum(np.log(xi_post[internal, 0, 0])))
    pjap = float(-np.expm1(log_all_null))
    return pmap, pjap, marg


def infer(tree: PhyloTree, evidence: NodeEvidence, params: ArParams) -> Posterior:
    transitions = all_transitions(tree, params)
    log_phi, log_ml = collect(tree, evidence, transitions)
    xi_post = distribute(tree, evidence, transitions, log_phi)
    pmap, pjap, marg = summarize(tree, xi_post)
    return Posterior(pmap, pjap, log_ml, log_phi, xi_post, marg)


def log_marginal_likelihood(tree: PhyloTree, evidence: NodeEvidence, params: ArParams) -> float:
    return collect(tree, evidence, all_transitions(tree, params))[1]


# -- empirical Bayes on tau -------------------------------------------------------

def tau_grid(tau_max: float, step: float = TAU_STEP) -> np.ndarray:
    """0, step, 2*step, ... up to and including ``tau_max``."""
    n = int(np.floor(tau_max / step + 1e-9))
    grid = step * np.arange(n + 1)
    if tau_max - grid[-1] > 1e-9:
        grid = np.append(grid, tau_max)
    return grid


def _kappa(kappa_mode: str, tau: float) -> float:
    if kappa_mode not in ("zero", "tau"):
        raise ValueError(f"kappa mode must be 'zero' or 'tau', got {kappa_mode!r}")
    return tau if kappa_mode == "tau" else 0.0


def tau_profile(tree, evidence, alpha, kappa_mode="zero", tau_max=DEFAULT_TAU_MAX):
    grid = tau_grid(tau_max)
    prof = np.array([log_marginal_likelihood(tree, evidence, ArParams(alpha, t, _kappa(kappa_mode, t)))
                     for t in grid])
    return grid, prof


def _argmax_smallest(grid, prof):
    best = prof.max()
    return float(grid[np.flatnonzero(prof >= best - TIE_TOL)[0]])


def fit_tau_eb(tree, evidence, alpha, kappa_mode="zero", tau_max=DEFAULT_TAU_MAX):
    """Grid-maximise the marginal likelihood over tau. Returns ``(tau_hat, grid, profile)``."""
    grid, prof = tau_profile(tree, evidence, alpha, kappa_mode, tau_max)
    return _argmax_smallest(grid, prof), grid, prof


def tau_posterior_and_bf(tree, evidence, alpha, kappa_mode="zero", tau_max=DEFAULT_TAU_MAX, profile=None):
    """Posterior density of tau under a Uniform(0, tau_max) prior, and BF of tau != 0 vs tau = 0.

    Returns ``(grid, density, log_bf10)``.
    """
    if profile is None:
        grid, prof = tau_profile(tree, evidence, alpha, kappa_mode, tau_max)
    else:
        grid, prof = profile
    rel = np.exp(prof - prof.max())
    area = integrate.trapezoid(rel, grid)
    density = rel / area
    log_bf10 = float(np.log(area) + prof.max() - prof[0] - np.log(grid[-1] - grid[0]))
    return grid, density, log_bf10


# -- full pipeline ------------------------------------------------------------------

@dataclass
class PosteriorReport:
    pmap: np.ndarray
    pjap: float
    log_marginal: float
    tau: float
    alpha: float
    kappa: float
    log_m0: np.ndarray
    log_m1: np.ndarray
    warnings: tuple = ()
    kappa_mode: str = "zero"
    tau_max: float | None = None
    tau_grid: np.ndarray | None = None
    tau_profile: np.ndarray | None = None
    tau_density: np.ndarray | None = None
    log_bf10: float | None = None
    bcr_pmap: np.ndarray | None = None
    bcr_pjap: float | None = None
    posterior: Posterior | None = field(default=None, repr=False)


def run_bgcr(data: AlignedDataset, tree: PhyloTree | None = None, prior: PriorSpec = PriorSpec(), ar="fit", *,
             prjap: float = 0.5, kappa_mode: str = "zero", tau_max: float = DEFAULT_TAU_MAX,
             evidence: NodeEvidence | None = None, threads: int = 1, with_bcr: bool = True) -> PosteriorReport:
    """End-to-end test: node evidence, then the graphical prior with given or fitted tau.

    ``ar`` is an :class:`ArParams`, a number (tau, with alpha from ``prjap``),
    or ``"fit"`` for empirical Bayes over ``[0, tau_max]``.
    """
    tree = data.tree if tree is None else tree
    if evidence is None:
        evidence = compute_evidence(data, prior, threads=threads)
    alpha = solve_alpha(prjap, tree.n_internal)
    grid = prof = density = log_bf = None
    if isinstance(ar, ArParams):
        params = ar
    elif isinstance(ar, str):
        if ar != "fit":
            raise ValueError(f"unknown tau mode {ar!r}")
        tau_hat, grid, prof = fit_tau_eb(tree, evidence, alpha, kappa_mode, tau_max)
        _, density, log_bf = tau_posterior_and_bf(tree, evidence, alpha, kappa_mode, tau_max, profile=(grid, prof))
        params = ArParams(alpha, tau_hat, _kappa(kappa_mode, tau_hat))
    else:
        tau = float(ar)
        params = ArParams(alpha, tau, _kappa(kappa_mode, tau))
    post = infer(tree, evidence, params)
    report = PosteriorReport(
        pmap=post.pmap, pjap=post.pjap, log_marginal=post.log_marginal,
        tau=params.tau, alpha=params.alpha, kappa=params.kappa,
        log_m0=evidence.log_m0, log_m1=evidence.log_m1, warnings=tuple(evidence.warnings),
        kappa_mode=kappa_mode, tau_max=tau_max if grid is not None else None,
        tau_grid=grid, tau_profile=prof, tau_density=density, log_bf10=log_bf, posterior=post,
    )
    if with_bcr:
        bcr = post if params.tau == 0 and params.kappa == 0 else infer(tree, evidence, ArParams(params.alpha))
        report.bcr_pmap, report.bcr_pjap = bcr.pmap, bcr.pjap
    return report


# -- brute force oracle -------------------------------------------------------------

MAX_BRUTE_FORCE = 20


def enumerate_log_joint(tree: PhyloTree, params: ArParams, evidence: NodeEvidence | None = None):
    """All 2**|I| state configurations with their log prior (plus log evidence if given).

    Returns ``(internal ids, configs (2**|I|, |I|) int, log weight (2**|I|,))``.
    """
    internal = tree.internal_nodes
    if len(internal) > MAX_BRUTE_FORCE:
        raise TreeTooLarge(f"{len(internal)} internal nodes; brute force limited to {MAX_BRUTE_FORCE}")
    col = {node: j for j, node in enumerate(internal)}
    configs = np.array(list(itertools.product((0, 1), repeat=len(internal))), dtype=np.int64)
    cond = np.array([[ar_conditional(params, a, b) for b in (0, 1)] for a in (0, 1)])
    logw = np.zeros(len(configs))
    zeros = np.zeros(len(configs), dtype=np.int64)
    for node in internal:
        sl = configs[:, col[tree.left[node]]] if not tree.is_leaf(tree.left[node]) else zeros
        sr = configs[:, col[tree.right[node]]] if not tree.is_leaf(tree.right[node]) else zeros
        p1 = cond[sl, sr]
        s = configs[:, col[node]]
        logw += np.log(np.where(s == 1, p1, 1.0 - p1))
        if evidence is not None:
            logw += np.where(s == 1, evidence.log_m1[node], evidence.log_m0[node])
    return internal, configs, logw


def brute_force_posterior(tree: PhyloTree, evidence: NodeEvidence, ar: ArParams):
    """Exact PMAPs, PJAP and log marginal likelihood by enumeration. Test oracle."""
    internal, configs, logw = enumerate_log_joint(tree, ar, evidence)
    log_ml = float(special.logsumexp(logw))
    post = np.exp(logw - log_ml)
    pmap = np.full(tree.n_nodes, np.nan)
    pmap[internal] = post @ configs
    all_null = post[np.all(configs == 0, axis=1)].sum()
    return pmap, float(1.0 - all_null), log_ml
