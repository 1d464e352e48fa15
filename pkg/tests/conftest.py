from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from bgcr.dataset import NodeData
from bgcr.node_model import NodeEvidence
from bgcr.simulate import make_rng, random_tree

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = Path(__file__).parent / "data"


@st.composite
def trees(draw, min_leaves=2, max_leaves=10):
    k = draw(st.integers(min_leaves, max_leaves))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_tree(k, make_rng(seed))


def tree_with_internal(n_internal: int, seed: int):
    return random_tree(n_internal + 1, make_rng(seed))


def random_evidence(tree, rng, lo=-20.0, hi=20.0):
    k = tree.n_internal
    return NodeEvidence.from_arrays(tree, rng.uniform(lo, hi, k), rng.uniform(lo, hi, k))


def random_node(rng, n=6, n_cov=0, max_total=30):
    total = rng.integers(0, max_total + 1, size=n)
    left = rng.binomial(total, rng.uniform(0.2, 0.8))
    X = np.column_stack([np.ones(n)] + [rng.normal(size=n) for _ in range(n_cov)])
    z = (np.arange(n) % 2).astype(np.int64)
    return NodeData(left=left, total=total, X=X, z=z)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# criterion number -> (title, passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}: {detail}")
