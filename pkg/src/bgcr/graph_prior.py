"""Bottom-up autoregressive prior on the node states and its clique-tree form.

Each internal node carries a binary state ``S`` (local alternative active).
A node's state depends on its children's states through a logistic model
with baseline ``alpha``, a boost ``tau`` when at least one child is active
and an extra ``kappa`` when both are. Leaf children are always inactive.

Cliques are the triples ``(S(A), S(A_l), S(A_r))``; clique state ``i`` in
0..7 decodes to the binary digits of ``i`` (most significant first), so
state 0 is all-inactive and state 7 all-active.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .errors import BudgetTooSmall, DegenerateMarginal
from .phylo import PhyloTree, internal_nodes_by_depth

# decoded clique states, row i = (self, left, right)
CLIQUE_STATES = np.array([[(i >> 2) & 1, (i >> 1) & 1, i & 1] for i in range(8)], dtype=np.int64)

DEFAULT_TAU_MAX = 6.0


@dataclass(frozen=True)
class ArParams:
    alpha: float
    tau: float = 0.0
    kappa: float = 0.0

    def __post_init__(self):
        if self.tau < 0 or self.kappa < 0:
            raise ValueError("tau and kappa must be non-negative")


def decode_state(i: int) -> tuple:
    """Clique index (0-based) to its ``(self, left, right)`` states."""
    return tuple(int(v) for v in CLIQUE_STATES[i])


def encode_state(s, sl, sr) -> int:
    return 4 * int(s) + 2 * int(sl) + int(sr)


def ar_conditional(params: ArParams, s_l: int, s_r: int) -> float:
    """P(S(A) = 1 | S(A_l) = s_l, S(A_r) = s_r)."""
    k = int(s_l) + int(s_r)
    eta = params.alpha + params.tau * (k >= 1) + params.kappa * (k == 2)
    return float(special.expit(eta))


def _cond_table(params: ArParams) -> np.ndarray:
    """cond[s_l, s_r] = P(S = 1 | children)."""
    return np.array([[ar_conditional(params, a, b) for b in (0, 1)] for a in (0, 1)])


def prior_marginals(tree: PhyloTree, params: ArParams) -> np.ndarray:
    """Prior P(S(A) = 1) for every node (0 at leaves).

    The two children of a node head disjoint subtrees, so their states are
    independent a priori.
    """
    cond = _cond_table(params)
    pr = np.zeros(tree.n_nodes)
    for node in internal_nodes_by_depth(tree):
        pl = pr[tree.left[node]]
        prr = pr[tree.right[node]]
        wl = np.array([1.0 - pl, pl])
        wr = np.array([1.0 - prr, prr])
        pr[node] = float(wl @ cond @ wr)
    return pr


def _clique_prior(tree: PhyloTree, params: ArParams, marginals: np.ndarray, node: int) -> np.ndarray:
    """Joint prior P(C(A) = c) over the 8 clique states."""
    cond = _cond_table(params)
    pl = marginals[tree.left[node]]
    pr = marginals[tree.right[node]]
    out = np.empty(8)
    for i, (s, sl, sr) in enumerate(CLIQUE_STATES):
        p_children = (pl if sl else 1.0 - pl) * (pr if sr else 1.0 - pr)
        p_self = cond[sl, sr] if s else 1.0 - cond[sl, sr]
        out[i] = p_children * p_self
    return out


def clique_transition(tree: PhyloTree, params: ArParams, marginals: np.ndarray, node: int) -> np.ndarray:
    """8x8 prior transition matrix P(C(A) = c' | C(A_p) = c).

    Given its parent clique, A's clique depends only on the parent clique's
    slot for S(A); the children's states follow from Bayes inversion of the
    bottom-up conditional. For the root, every row is the clique prior.
    """
    joint = _clique_prior(tree, params, marginals, node)
    if node == tree.root:
        return np.tile(joint, (8, 1))
    p_self = marginals[node]
    if not 0.0 < p_self < 1.0:
        raise DegenerateMarginal(f"prior marginal of node {node} is {p_self}")
    slot = 1 if tree.is_left_child(node) else 2
    own = CLIQUE_STATES[:, 0]
    xi = np.zeros((8, 8))
    for i in range(8):
        s = CLIQUE_STATES[i, slot]
        ps = p_self if s else 1.0 - p_self
        xi[i] = np.where(own == s, joint / ps, 0.0)
    return xi


def all_transitions(tree: PhyloTree, params: ArParams, marginals=None) -> np.ndarray:
    """Stacked transition matrices, shape ``(n_nodes, 8, 8)``; leaves are zero."""
    if marginals is None:
        marginals = prior_marginals(tree, params)
    out = np.zeros((tree.n_nodes, 8, 8))
    for node in tree.internal_nodes:
        out[node] = clique_transition(tree, params, marginals, node)
    return out


def prior_joint_alternative(alpha: float, n_internal: int) -> float:
    """PrJAP = 1 - P(all states inactive) = 1 - (1 - expit(alpha))**|I|."""
    return float(-math.expm1(n_internal * math.log(special.expit(-alpha))))


def solve_alpha(prjap_target: float, n_internal: int) -> float:
    """Baseline log-odds giving the requested prior joint alternative probability."""
    if not 0.0 < prjap_target < 1.0:
        raise ValueError("target must lie in (0, 1)")
    if n_internal < 1:
        raise ValueError("need at least one internal node")
    # 1 - (1 - target)**(1/|I|), computed without cancellation
    rho = -math.expm1(math.log1p(-prjap_target) / n_internal)
    return float(special.logit(rho))


def solve_tau_max(tree: PhyloTree, alpha: float, kappa_mode: str = "zero", budget: float | None = None,
                  tol: float = 1e-8) -> float:
    """Upper bound for tau so that the prior expected number of alternatives equals ``budget``.

    ``kappa_mode`` is ``"zero"`` or ``"tau"``. With no budget the default 6 is
    returned.
    """
    if budget is None:
        return DEFAULT_TAU_MAX

    def total(tau):
        kappa = tau if kappa_mode == "tau" else 0.0
        return float(prior_marginals(tree, ArParams(alpha, tau, kappa)).sum())

    lo_val = total(0.0)
    if budget <= lo_val:
        raise BudgetTooSmall(f"budget {budget} does not exceed the tau=0 total {lo_val:.6g}")
    hi = 50.0
    if total(hi) < budget:
        raise BudgetTooSmall(f"budget {budget} unreachable for tau <= {hi}")
    return float(optimize.brentq(lambda t: total(t) - budget, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps,
                                 maxiter=500))
