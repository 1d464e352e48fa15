import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bgcr.dataset import aggregate, load_counts
from bgcr.errors import UnknownTarget
from bgcr.experiments import balanced_theta, fixed_tree
from bgcr.phylo import parse_newick, to_newick
from bgcr.simulate import (
    CHAIN_FRACTIONS,
    ScenarioSpec,
    apply_scenario,
    default_chain,
    generate_base,
    make_rng,
    random_tree,
    scale_counts,
    simulate_dataset,
    write_scenario,
)

from conftest import trees

TREE = random_tree(16, make_rng(1))


def test_near_degenerate_beta_concentrates():
    # with totals this large the binomial layer adds < 1e-4 of noise, so the spread is the Beta draw
    tree = parse_newick("(((A,B),C),(D,E));")
    base = generate_base(tree, 0.3, 1e9, 200, totals=(10**10, 10**10), seed=0)
    data = aggregate(base, tree, groups=np.zeros(200, int))
    for node in tree.internal_nodes:
        nd = data.node_data(node)
        frac = nd.left / nd.total
        assert np.std(frac) < 1e-3
        assert abs(np.mean(frac) - 0.3) < 1e-3


def test_fair_splits_have_equal_leaf_means():
    tree = parse_newick("((A,B),(C,D));")
    n, N = 4000, 1000
    base = generate_base(tree, 0.5, 20.0, n, totals=(N, N), seed=2)
    means = base.counts.mean(axis=0)
    se = base.counts.std(axis=0, ddof=1) / np.sqrt(n)
    assert np.all(np.abs(means - N / 4) < 3 * se)


def test_generate_base_is_seeded():
    a = generate_base(TREE, 0.5, 20.0, 10, seed=5)
    b = generate_base(TREE, 0.5, 20.0, 10, seed=5)
    c = generate_base(TREE, 0.5, 20.0, 10, seed=6)
    assert np.array_equal(a.counts, b.counts)
    assert not np.array_equal(a.counts, c.counts)
    with pytest.raises(ValueError):
        generate_base(TREE, 1.0, 20.0, 10)


def test_scale_counts():
    assert scale_counts(np.array([7]), 100).tolist() == [14]
    assert scale_counts(np.array([1, 3, 5]), 50).tolist() == [2, 5, 8]  # 1.5 -> 2, 4.5 -> 5, 7.5 -> 8
    assert scale_counts(np.array([4]), 0).tolist() == [4]


def _changed_columns(data):
    return [j for j in range(data.table.counts.shape[1])
            if not np.array_equal(data.table.counts[:, j], data.base.counts[:, j])]


def test_null_and_zero_p_leave_counts():
    for scen in ("null", "I", "II", "III"):
        data = simulate_dataset(TREE, ScenarioSpec(scen, 0.0, n0=10, n1=12, seed=3))
        assert _changed_columns(data) == []
        assert (data.group == 0).sum() == 10 and (data.group == 1).sum() == 12


def test_scenario_one_doubles_target():
    data = simulate_dataset(TREE, ScenarioSpec("I", 100.0, targets=("OTU3",), n0=5, n1=5, seed=0))
    j = data.table.otu_names.index("OTU3")
    rows = data.group == 1
    np.testing.assert_array_equal(data.table.counts[rows, j], 2 * data.base.counts[rows, j])
    np.testing.assert_array_equal(data.table.counts[~rows, j], data.base.counts[~rows, j])
    assert _changed_columns(data) == [j]


def test_scenario_two_targets_eight():
    data = simulate_dataset(TREE, ScenarioSpec("II", 80.0, n0=20, n1=20, seed=4))
    assert len(data.targets["signal"]) == 8
    changed = {data.table.otu_names[j] for j in _changed_columns(data)}
    assert changed <= set(data.targets["signal"])


def test_scenario_three_chain_scaling():
    tree = fixed_tree(32)
    chain = default_chain(tree)
    data = simulate_dataset(tree, ScenarioSpec("III", 75.0, n0=20, n1=20, seed=9), theta=balanced_theta(tree))
    rows = data.group == 1
    assert [round(1 + f * 75 / 100, 4) for f in CHAIN_FRACTIONS] == [1.2475, 1.5025, 1.75]
    for name, frac in zip(chain, CHAIN_FRACTIONS):
        j = data.table.otu_names.index(name)
        expected = np.floor(data.base.counts[rows, j] * (1 + frac * 0.75) + 0.5)
        np.testing.assert_array_equal(data.table.counts[rows, j], expected)
    assert {data.table.otu_names[j] for j in _changed_columns(data)} <= set(chain)
    # the chain touches three nested internal nodes
    a, b, c = (tree.node_by_name(x) for x in chain)
    assert tree.parent[a] == tree.parent[b]
    assert tree.parent[tree.parent[a]] == tree.parent[c]


def test_scenario_three_needs_chain():
    with pytest.raises(UnknownTarget):
        default_chain(parse_newick("(A,B);"))
    base = generate_base(TREE, 0.5, 20.0, 10)
    with pytest.raises(UnknownTarget):
        apply_scenario(base, ScenarioSpec("III", 50.0, n0=5, n1=5))


def test_scenario_four_confounder_design():
    n0 = n1 = 100
    data = simulate_dataset(TREE, ScenarioSpec("IV", 0.0, n0=n0, n1=n1, seed=2))
    male = data.covariates["male"]
    assert male.sum() == (n0 + n1) // 2
    assert ((male == 1) & (data.group == 0)).sum() == 80
    assert ((male == 0) & (data.group == 0)).sum() == 20
    assert ((male == 1) & (data.group == 1)).sum() == 20
    conf = data.table.otu_names.index(data.targets["confounder"][0])
    assert _changed_columns(data) == [conf]
    np.testing.assert_array_equal(data.table.counts[male == 0, conf], data.base.counts[male == 0, conf])
    expected = np.floor(data.base.counts[male == 1, conf] * 2.75 + 0.5)
    np.testing.assert_array_equal(data.table.counts[male == 1, conf], expected)


@given(st.sampled_from(["null", "I", "II", "III", "IV"]), st.floats(0, 300), st.integers(0, 10**6))
def test_only_targets_change(scenario, p, seed):
    tree = fixed_tree(32)
    data = simulate_dataset(tree, ScenarioSpec(scenario, p, n0=10, n1=10, seed=seed), totals=(50, 100))
    allowed = {t for names in data.targets.values() for t in names}
    changed = {data.table.otu_names[j] for j in _changed_columns(data)}
    assert changed <= allowed
    assert np.all(data.table.counts >= data.base.counts)


@given(trees(min_leaves=4, max_leaves=40))
def test_roundtrip_of_simulated_trees(t):
    assert parse_newick(to_newick(t)).topology() == t.topology()


def test_write_scenario(tmp_path):
    spec = ScenarioSpec("IV", 50.0, n0=10, n1=10, seed=1)
    data = simulate_dataset(TREE, spec)
    paths = write_scenario(data, TREE, tmp_path / "a", spec)
    write_scenario(simulate_dataset(TREE, spec), TREE, tmp_path / "b", spec)
    for name in paths:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert load_counts(paths["counts.tsv"]).counts.tolist() == data.table.counts.tolist()
    header = (tmp_path / "a" / "covariates.csv").read_text().splitlines()[0]
    assert header == "sample,group,male"
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert set(manifest["targets"]) == {"confounder", "signal"}
