"""Spike-and-slab comparison of covariate subsets by exhaustive enumeration.

Each adjustment covariate is in or out of every node's regression together;
the group indicator always stays in. Model ``r`` gets prior
``prod q_l**r_l (1 - q_l)**(1 - r_l)`` and posterior proportional to the prior
times the tree-level marginal likelihood from the message-passing pass.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import special

from .dataset import AlignedDataset
from .errors import InputError, TooManyCovariates
from .message_passing import run_bgcr
from .node_model import PriorSpec

MAX_COVARIATES = 12

CONFOUNDING_WARNING = (
    "WARNING: covariate selection ranks models by fit, not by confounding. A confounder that "
    "tracks the group labels adds little fit beyond the group indicator and is routinely dropped, "
    "which turns confounding into false positives. Use this table as a diagnostic; do not drop "
    "suspected confounders from the test on its basis."
)


@dataclass
class ModelPosterior:
    columns: tuple  # candidate adjustment columns
    inclusion: np.ndarray  # (2**p, p) 0/1
    log_prior: np.ndarray
    log_marginal: np.ndarray
    posterior: np.ndarray
    tau: np.ndarray
    warning: str = CONFOUNDING_WARNING

    def included(self, k: int) -> tuple:
        return tuple(c for c, r in zip(self.columns, self.inclusion[k]) if r)


def enumerate_models(data: AlignedDataset, tree=None, prior: PriorSpec = PriorSpec(), ar="fit", q=None, *,
                     slab_variance: float | None = None, threads: int = 1, **bgcr_kwargs) -> ModelPosterior:
    """Posterior over all subsets of the adjustment columns of ``data``.

    ``q`` gives each column's prior inclusion probability (default 0.5); with
    ``ar="fit"`` tau is fitted separately for every subset. ``slab_variance``
    overrides the prior variance of included adjustment coefficients.
    """
    tree = data.tree if tree is None else tree
    columns = tuple(data.columns[1:])
    p = len(columns)
    if p > MAX_COVARIATES:
        raise TooManyCovariates(f"{p} covariates; enumeration limited to {MAX_COVARIATES}")
    q = np.full(p, 0.5) if q is None else np.asarray(q, dtype=float).reshape(-1)
    if q.shape != (p,):
        raise InputError(f"need {p} inclusion probabilities, got {q.size}")
    if np.any(~((q > 0) & (q <= 1))):
        raise InputError("inclusion probabilities must lie in (0, 1]")
    slab = prior.sigma_beta2 if slab_variance is None else float(slab_variance)

    inclusion = np.array(list(itertools.product((0, 1), repeat=p)), dtype=np.int64).reshape(2**p, p)
    with np.errstate(divide="ignore"):
        log_prior = np.where(inclusion == 1, np.log(q), np.log1p(-q)).sum(axis=1)
    log_ml = np.full(len(inclusion), -np.inf)
    taus = np.full(len(inclusion), np.nan)
    for k, r in enumerate(inclusion):
        if not np.isfinite(log_prior[k]):
            continue  # excluded a priori (q_l = 1)
        keep = [0] + [j + 1 for j in range(p) if r[j]]
        sub = data.with_design(data.X[:, keep], [data.columns[j] for j in keep])
        variances = (prior.sigma_beta2,) + (slab,) * (len(keep) - 1)
        sub_prior = replace(prior, coef_variances=variances)
        rep = run_bgcr(sub, tree, sub_prior, ar, threads=threads, with_bcr=False, **bgcr_kwargs)
        log_ml[k] = rep.log_marginal
        taus[k] = rep.tau
    log_post = log_prior + log_ml
    posterior = np.exp(log_post - special.logsumexp(log_post))
    return ModelPosterior(columns, inclusion, log_prior, log_ml, posterior, taus)


def format_table(mp: ModelPosterior) -> str:
    """TSV table of models, preceded by the confounding warning as comment lines."""
    lines = [f"# {mp.warning}", "\t".join(["model", "covariates", "prior", "log_marginal", "tau", "posterior"])]
    for k in range(len(mp.inclusion)):
        names = ",".join(mp.included(k)) or "none"
        prior = math.exp(mp.log_prior[k])
        lines.append("\t".join([
            str(k), names, f"{prior:.12g}", f"{mp.log_marginal[k]:.12g}", f"{mp.tau[k]:.12g}",
            f"{mp.posterior[k]:.12g}",
        ]))
    return "\n".join(lines) + "\n"
