import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from bgcr.dataset import aggregate, OtuTable
from bgcr.errors import TreeTooLarge
from bgcr.graph_prior import ArParams, all_transitions, prior_marginals, solve_alpha
from bgcr.message_passing import (
    MAX_BRUTE_FORCE,
    brute_force_posterior,
    collect,
    enumerate_log_joint,
    fit_tau_eb,
    infer,
    run_bgcr,
    tau_grid,
    tau_posterior_and_bf,
)
from bgcr.node_model import NodeEvidence, bcr_pmap
from bgcr.phylo import parse_newick
from bgcr.simulate import make_rng, random_tree

from conftest import random_evidence, tree_with_internal


def _params(rng):
    tau = rng.uniform(0, 6)
    return ArParams(rng.uniform(-5, 1), tau, tau if rng.random() < 0.5 else 0.0)


def _flat_evidence(tree, value=-7.0):
    v = np.full(tree.n_internal, value)
    return NodeEvidence.from_arrays(tree, v, v)


def test_single_node_collection_and_summary():
    tree = parse_newick("(A,B);")
    ev = NodeEvidence.from_arrays(tree, [-3.0], [-1.5])
    params = ArParams(-0.4)
    log_phi, log_ml = collect(tree, ev, all_transitions(tree, params))
    rho = special.expit(-0.4)
    expected = np.log((1 - rho) * np.exp(-3.0) + rho * np.exp(-1.5))
    np.testing.assert_allclose(log_phi[0], expected, atol=1e-14)
    post = infer(tree, ev, ArParams(-0.4, 3.0))
    assert post.pmap[0] == pytest.approx(bcr_pmap(-3.0, -1.5, rho), abs=1e-14)
    assert post.pjap == pytest.approx(post.pmap[0], abs=1e-14)


def test_state_independent_evidence():
    tree = tree_with_internal(6, seed=9)
    ev = _flat_evidence(tree, -4.0)
    params = ArParams(-1.0, 2.5, 1.0)
    post = infer(tree, ev, params)
    assert post.log_marginal == pytest.approx(-4.0 * tree.n_internal, abs=1e-12)
    np.testing.assert_allclose(post.xi_post[tree.internal_nodes], all_transitions(tree, params)[tree.internal_nodes],
                               atol=1e-14)
    pr = prior_marginals(tree, params)
    np.testing.assert_allclose(post.pmap[tree.internal_nodes], pr[tree.internal_nodes], atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_three_node_tree_against_enumeration(seed):
    rng = np.random.default_rng(seed)
    tree = parse_newick("((A,B),(C,D));")
    ev = random_evidence(tree, rng)
    params = _params(rng)
    post = infer(tree, ev, params)
    pmap, pjap, log_ml = brute_force_posterior(tree, ev, params)
    assert post.log_marginal == pytest.approx(log_ml, abs=1e-10)
    np.testing.assert_allclose(post.pmap[tree.internal_nodes], pmap[tree.internal_nodes], atol=1e-10)
    assert post.pjap == pytest.approx(pjap, abs=1e-10)


def _conditional_from_enumeration(tree, ev, params, node):
    """P(C(A) = j | C(parent) = i, Y) from the enumerated joint posterior."""
    internal, configs, logw = enumerate_log_joint(tree, params, ev)
    col = {n: k for k, n in enumerate(internal)}

    def s(n):
        return configs[:, col[n]] if n in col else np.zeros(len(configs), dtype=np.int64)

    def clique(n):
        return 4 * s(n) + 2 * s(tree.left[n]) + s(tree.right[n])

    w = np.exp(logw - logw.max())
    own, parent = clique(node), clique(tree.parent[node])
    out = np.full((8, 8), np.nan)
    for i in range(8):
        mass = w[parent == i].sum()
        if mass > 0:
            out[i] = [w[(parent == i) & (own == j)].sum() / mass for j in range(8)]
    return out


def test_posterior_transitions_against_enumeration():
    rng = np.random.default_rng(12)
    tree = parse_newick("(((A,B),C),((D,E),F));")
    ev = random_evidence(tree, rng, -5, 5)
    params = ArParams(-1.0, 2.0, 0.5)
    post = infer(tree, ev, params)
    for node in tree.internal_nodes:
        if node == tree.root:
            continue
        ref = _conditional_from_enumeration(tree, ev, params, node)
        rows = ~np.isnan(ref[:, 0])
        np.testing.assert_allclose(post.xi_post[node][rows], ref[rows], atol=1e-10)


@given(st.integers(1, 10), st.integers(0, 2**31))
def test_oracle_equivalence(n_internal, seed):
    rng = np.random.default_rng(seed)
    tree = tree_with_internal(n_internal, seed)
    ev = random_evidence(tree, rng)
    params = _params(rng)
    rep = run_bgcr(None, tree, ar=params, evidence=ev, with_bcr=False)
    pmap, pjap, log_ml = brute_force_posterior(tree, ev, params)
    np.testing.assert_allclose(rep.pmap[tree.internal_nodes], pmap[tree.internal_nodes], atol=1e-10)
    assert rep.pjap == pytest.approx(pjap, abs=1e-10)
    assert rep.log_marginal == pytest.approx(log_ml, abs=1e-9)
    post = rep.posterior
    for node in tree.internal_nodes:
        np.testing.assert_allclose(post.xi_post[node].sum(axis=1), 1.0, atol=1e-10)
        assert post.clique_marginals[node].sum() == pytest.approx(1.0, abs=1e-10)
    assert np.all(rep.pjap >= rep.pmap[tree.internal_nodes] - 1e-10)
    all_null = np.prod(post.xi_post[tree.internal_nodes, 0, 0])
    assert 1 - all_null == pytest.approx(pjap, abs=1e-10)


@given(st.integers(1, 8), st.integers(0, 2**31), st.floats(-50, 50))
def test_evidence_shift_invariance(n_internal, seed, shift):
    rng = np.random.default_rng(seed)
    tree = tree_with_internal(n_internal, seed)
    ev = random_evidence(tree, rng)
    node = tree.internal_nodes[int(rng.integers(n_internal))]
    m0, m1 = ev.log_m0.copy(), ev.log_m1.copy()
    m0[node] += shift
    m1[node] += shift
    params = _params(rng)
    a = infer(tree, ev, params)
    b = infer(tree, NodeEvidence(m0, m1), params)
    np.testing.assert_allclose(a.pmap[tree.internal_nodes], b.pmap[tree.internal_nodes], atol=1e-10)
    assert a.pjap == pytest.approx(b.pjap, abs=1e-10)
    assert b.log_marginal - a.log_marginal == pytest.approx(shift, abs=1e-9)


@given(st.integers(1, 10), st.integers(0, 2**31))
def test_tau_zero_is_independent_bcr(n_internal, seed):
    rng = np.random.default_rng(seed)
    tree = tree_with_internal(n_internal, seed)
    ev = random_evidence(tree, rng)
    alpha = rng.uniform(-5, 1)
    rep = run_bgcr(None, tree, ar=ArParams(alpha), evidence=ev)
    for node in tree.internal_nodes:
        expected = bcr_pmap(ev.log_m0[node], ev.log_m1[node], special.expit(alpha))
        assert rep.pmap[node] == pytest.approx(expected, abs=1e-10)
    np.testing.assert_allclose(rep.bcr_pmap, rep.pmap, atol=0, equal_nan=True)


def test_extreme_evidence_stays_finite():
    tree = tree_with_internal(10, seed=1)
    m0 = np.linspace(-5000, -10, tree.n_internal)
    ev = NodeEvidence.from_arrays(tree, m0, m0 + np.linspace(-300, 300, tree.n_internal))
    post = infer(tree, ev, ArParams(-3.0, 6.0, 6.0))
    assert np.all(np.isfinite(post.pmap[tree.internal_nodes]))
    assert 0 <= post.pjap <= 1 and np.isfinite(post.log_marginal)


def test_brute_force_limits():
    tree = random_tree(MAX_BRUTE_FORCE + 2, make_rng(0))
    with pytest.raises(TreeTooLarge):
        brute_force_posterior(tree, _flat_evidence(tree), ArParams(-1.0))


def test_tau_grid():
    grid = tau_grid(6.0)
    assert len(grid) == 121 and grid[0] == 0 and grid[-1] == pytest.approx(6.0)
    assert tau_grid(0.12)[-1] == 0.12 and len(tau_grid(0.12)) == 4


def _chain_evidence(tree, boost=3.0):
    """logM1 - logM0 = boost on three nested nodes, 0 elsewhere."""
    chain = [tree.root]
    while len(chain) < 3:
        node = chain[-1]
        chain.append(tree.left[node] if not tree.is_leaf(tree.left[node]) else tree.right[node])
    m0 = np.zeros(tree.n_nodes)
    m1 = np.zeros(tree.n_nodes)
    m1[chain] = boost
    return NodeEvidence.from_arrays(tree, m0, m1), chain


def test_tau_eb_flat_profile():
    tree = tree_with_internal(7, seed=3)
    alpha = solve_alpha(0.5, tree.n_internal)
    tau_hat, grid, prof = fit_tau_eb(tree, _flat_evidence(tree), alpha)
    assert tau_hat == 0.0
    np.testing.assert_allclose(prof, prof[0], atol=1e-12)
    _, density, log_bf = tau_posterior_and_bf(tree, _flat_evidence(tree), alpha, profile=(grid, prof))
    np.testing.assert_allclose(density, 1 / 6.0, atol=1e-12)
    assert log_bf == pytest.approx(0.0, abs=1e-12)


def test_tau_eb_chain_evidence():
    tree = parse_newick("((((A,B),C),D),(E,F));")
    ev, chain = _chain_evidence(tree)
    alpha = solve_alpha(0.5, tree.n_internal)
    tau_hat, grid, prof = fit_tau_eb(tree, ev, alpha)
    assert 0 < tau_hat <= 6.0
    _, _, log_bf = tau_posterior_and_bf(tree, ev, alpha, profile=(grid, prof))
    assert log_bf > 0
    # chained configurations gain prior mass as tau grows
    internal, configs, logw0 = enumerate_log_joint(tree, ArParams(alpha, 0.0))
    _, _, logw3 = enumerate_log_joint(tree, ArParams(alpha, 3.0))
    col = [internal.index(n) for n in chain]
    chained = np.all(configs[:, col] == 1, axis=1) & (configs.sum(axis=1) == 3)
    assert np.exp(logw3[chained]).sum() > np.exp(logw0[chained]).sum()


def test_decreasing_profile_gives_bf_below_one():
    tree = tree_with_internal(5, seed=8)
    m0 = np.zeros(tree.n_nodes)
    m1 = np.full(tree.n_nodes, -6.0)
    ev = NodeEvidence.from_arrays(tree, m0, m1)
    alpha = solve_alpha(0.5, tree.n_internal)
    tau_hat, grid, prof = fit_tau_eb(tree, ev, alpha)
    assert np.all(np.diff(prof) < 0)
    assert tau_hat == 0.0
    assert tau_posterior_and_bf(tree, ev, alpha, profile=(grid, prof))[2] < 0


def _toy_data(seed=0, k=6, n=16):
    tree = random_tree(k, make_rng(seed))
    rng = np.random.default_rng(seed)
    counts = rng.integers(0, 40, size=(n, k))
    table = OtuTable(tuple(f"s{i}" for i in range(n)), tuple(tree.leaf_names), counts)
    return tree, aggregate(table, tree, groups=np.arange(n) % 2)


def test_run_bgcr_modes_and_determinism():
    tree, data = _toy_data()
    fit = run_bgcr(data, tree)
    again = run_bgcr(data, tree)
    assert fit.pjap == again.pjap and np.array_equal(fit.pmap, again.pmap, equal_nan=True)
    assert fit.tau_grid is not None and 0 <= fit.tau <= 6
    assert fit.alpha == pytest.approx(solve_alpha(0.5, tree.n_internal))
    fixed = run_bgcr(data, tree, ar=0.0, evidence=NodeEvidence(fit.log_m0, fit.log_m1))
    np.testing.assert_allclose(fixed.pmap, fixed.bcr_pmap, atol=1e-12, equal_nan=True)
    assert fixed.tau_grid is None
    kt = run_bgcr(data, tree, ar=1.5, kappa_mode="tau", evidence=NodeEvidence(fit.log_m0, fit.log_m1))
    assert kt.kappa == 1.5
    with pytest.raises(ValueError):
        run_bgcr(data, tree, ar="nope")
    with pytest.raises(ValueError):
        run_bgcr(data, tree, ar=1.0, kappa_mode="both", evidence=NodeEvidence(fit.log_m0, fit.log_m1))


def test_enumerate_log_joint_is_normalized():
    tree = tree_with_internal(5, seed=0)
    _, configs, logw = enumerate_log_joint(tree, ArParams(-1.0, 2.0, 1.0))
    assert len(configs) == 2**5
    assert special.logsumexp(logw) == pytest.approx(0.0, abs=1e-12)
    assert {tuple(c) for c in configs} == set(itertools.product((0, 1), repeat=5))
