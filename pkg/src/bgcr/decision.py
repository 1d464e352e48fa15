"""Decision rules on posterior alternative probabilities."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DecisionConfig:
    """Global threshold ``c`` and node threshold ``L``.

    Passing ``fd_weight`` (the relative cost ``t`` of a false discovery
    against a false negative) sets ``L = t / (t + 1)``.
    """

    c: float = 0.5
    L: float = 0.5
    fd_weight: float | None = None

    def __post_init__(self):
        if self.fd_weight is not None:
            if self.fd_weight < 0:
                raise ValueError("fd_weight must be non-negative")
            object.__setattr__(self, "L", self.fd_weight / (self.fd_weight + 1.0))
        if not 0.0 < self.c < 1.0:
            raise ValueError(f"global threshold c={self.c} outside (0, 1)")
        # L = 0 is reachable through fd_weight = 0
        if not 0.0 <= self.L < 1.0:
            raise ValueError(f"node threshold L={self.L} outside [0, 1)")


@dataclass(frozen=True)
class NodeDecisions:
    rejected: tuple  # node keys with PMAP > L
    expected_fd: float
    expected_fn: float


def decide_global(pjap: float, config: DecisionConfig = DecisionConfig()) -> bool:
    """Reject the global null iff PJAP > c (strictly)."""
    return bool(pjap > config.c)


def significant_nodes(pmaps, config: DecisionConfig = DecisionConfig()) -> NodeDecisions:
    """Nodes with PMAP > L, plus posterior expected false discoveries and false negatives.

    ``pmaps`` is a mapping ``node -> PMAP`` or a sequence (NaN entries, e.g.
    leaves, are skipped and keys are positions).
    """
    if not hasattr(pmaps, "items"):
        pmaps = {i: float(v) for i, v in enumerate(np.asarray(pmaps, dtype=float)) if not np.isnan(v)}
    rejected = tuple(k for k, v in pmaps.items() if v > config.L)
    fd = float(sum(1.0 - pmaps[k] for k in rejected))
    fn = float(sum(v for k, v in pmaps.items() if not v > config.L))
    return NodeDecisions(rejected, fd, fn)
