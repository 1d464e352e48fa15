"""Marginal likelihoods of the node-local beta-binomial regression.

For a node with left-child counts ``t`` out of totals ``y``, design rows
``x`` and logit-linked mean ``theta = expit(x @ beta)``, the per-sample
likelihood is the beta-binomial ``log B(theta*nu + t, (1-theta)*nu + y - t)
- log B(theta*nu, (1-theta)*nu)``. The coefficients are integrated out by a
Laplace approximation at the Newton-Raphson MAP for each dispersion on a
log10 grid, and the dispersion by a midpoint Riemann sum.

Fits for all grid dispersions of one node run as a single batched Newton
iteration (arrays shaped ``(M, ...)``), which is what makes whole-tree
evidence cheap enough for simulation studies.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .dataset import AlignedDataset, NodeData
from .errors import ConvergenceError, DomainError

LOG_2PI = math.log(2.0 * math.pi)

GRAD_TOL = 1e-8
REL_TOL = 1e-12
MAX_ITER = 100
MAX_HALVINGS = 50
# relative size of value changes indistinguishable from rounding in h
ROUNDOFF = 1e-10
MIN_GRID_SUCCESS = 0.9


# -- special functions -------------------------------------------------------

def _check_positive(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("argument must be positive")
    return x


def log_gamma(x):
    x = _check_positive(x)
    return special.gammaln(x)


def digamma(x):
    x = _check_positive(x)
    return special.digamma(x)


def trigamma(x):
    x = _check_positive(x)
    return _trigamma(x)


# Bernoulli-number coefficients of the asymptotic trigamma series in 1/x**2
_TRIGAMMA_SERIES = (1.0 / 6, -1.0 / 30, 1.0 / 42, -1.0 / 30, 5.0 / 66, -691.0 / 2730, 7.0 / 6)


def _trigamma(x):
    # scipy's polygamma(1, .) is ~20x slower than digamma; the Hessian needs
    # four trigamma evaluations per sample and grid point.
    x = np.array(x, dtype=float, copy=True)
    acc = np.zeros_like(x)
    small = x < 10.0
    while small.any():
        xs = x[small]
        acc[small] += 1.0 / (xs * xs)
        x[small] = xs + 1.0
        small = x < 10.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = 0.0
    for c in reversed(_TRIGAMMA_SERIES):
        series = series * inv2 + c
    return acc + inv + 0.5 * inv2 + inv * inv2 * series


# -- likelihood pieces --------------------------------------------------------

def log_betabinom(theta, nu, y1, y2):
    """Log beta-binomial likelihood of ``y1`` left / ``y2`` right counts.

    ``nu = inf`` gives the binomial limit ``theta**y1 * (1-theta)**y2``. No
    binomial coefficient is included.
    """
    theta = np.asarray(theta, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    positive = (y1 + y2) > 0
    if np.any(positive & ~((theta > 0) & (theta < 1))):
        raise DomainError("theta must lie in (0, 1) when counts are positive")
    if np.isinf(nu):
        out = special.xlogy(y1, theta) + special.xlog1py(y2, -theta)
    else:
        if not nu > 0:
            raise DomainError("nu must be positive")
        a = theta * nu
        b = (1.0 - theta) * nu
        with np.errstate(invalid="ignore"):
            out = (special.gammaln(a + y1) - special.gammaln(a)
                   + special.gammaln(b + y2) - special.gammaln(b)
                   - special.gammaln(nu + y1 + y2) + special.gammaln(nu))
    out = np.where(positive, out, 0.0)
    return out[()] if out.ndim == 0 else out


def dm_log_marginal(counts, pi, nu: float) -> float:
    """Log Dirichlet-multinomial likelihood of one sample (no multinomial coefficient)."""
    counts = np.asarray(counts, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if pi.shape != counts.shape or np.any(pi <= 0) or abs(pi.sum() - 1.0) > 1e-10:
        raise DomainError("composition must be strictly positive and sum to 1")
    if not nu > 0:
        raise DomainError("nu must be positive")
    a = nu * pi
    return float(special.gammaln(nu) - special.gammaln(nu + counts.sum())
                 + np.sum(special.gammaln(a + counts) - special.gammaln(a)))


def bcr_pmap(log_m0, log_m1, rho):
    """Posterior probability of the local alternative under prior probability ``rho``."""
    if rho <= 0:
        return np.zeros_like(np.asarray(log_m0, dtype=float))[()]
    if rho >= 1:
        return np.ones_like(np.asarray(log_m0, dtype=float))[()]
    log_odds = math.log(rho) - math.log1p(-rho) + np.asarray(log_m1, float) - np.asarray(log_m0, float)
    return special.expit(log_odds)[()]


# -- priors -------------------------------------------------------------------

@dataclass(frozen=True)
class PriorSpec:
    """Priors of the local regression.

    ``coef_variances`` optionally overrides the normal-prior variance of each
    design column (intercept first); otherwise every column gets
    ``sigma_beta2``.
    """

    sigma_beta2: float = 16.0
    sigma_gamma2: float = 10.0
    n_grid: int = 50
    log10_nu_range: tuple = (-1.0, 4.0)
    coef_variances: tuple | None = None

    def __post_init__(self):
        if not (self.sigma_beta2 > 0 and self.sigma_gamma2 > 0):
            raise ValueError("prior variances must be positive")
        if self.n_grid < 2:
            raise ValueError("need at least two grid points")
        lo, hi = self.log10_nu_range
        if not lo < hi:
            raise ValueError("empty dispersion range")

    def nu_grid(self) -> np.ndarray:
        """Midpoints of ``n_grid`` equal cells in log10(nu)."""
        lo, hi = self.log10_nu_range
        width = (hi - lo) / self.n_grid
        return 10.0 ** (lo + width * (np.arange(self.n_grid) + 0.5))

    def variances(self, n_cols: int, hypothesis: int) -> np.ndarray:
        if self.coef_variances is not None:
            if len(self.coef_variances) != n_cols:
                raise ValueError("coef_variances length does not match design")
            v = np.asarray(self.coef_variances, dtype=float)
        else:
            v = np.full(n_cols, self.sigma_beta2)
        if hypothesis == 1:
            v = np.append(v, self.sigma_gamma2)
        return v


@dataclass
class FitResult:
    beta: np.ndarray
    value: float  # h at beta
    neg_hess_logdet: float
    converged: bool
    iterations: int
    gradient: np.ndarray = field(repr=False, default=None)


# -- batched objective -------------------------------------------------------

class _Objective:
    """Log posterior ``h_nu(beta)`` for a stack of dispersions.

    Rows with zero total count contribute nothing and are dropped up front.
    """

    def __init__(self, X, t, y, variances):
        keep = np.asarray(y) > 0
        self.X = np.asarray(X, dtype=float)[keep]
        self.t = np.asarray(t, dtype=float)[keep]
        self.y = np.asarray(y, dtype=float)[keep]
        self.r = self.y - self.t
        self.inv_var = 1.0 / np.asarray(variances, dtype=float)
        self.log_prior_const = -0.5 * np.sum(LOG_2PI + np.log(variances))

    def _prior(self, beta):
        return self.log_prior_const - 0.5 * np.sum(beta * beta * self.inv_var, axis=-1)

    def value(self, beta, nu):
        """beta (M, d), nu (M,) -> (M,)"""
        if self.X.shape[0] == 0:
            return self._prior(beta)
        eta = beta @ self.X.T
        nu_c = nu[:, None]
        a = special.expit(eta) * nu_c
        b = special.expit(-eta) * nu_c
        ll = (special.gammaln(a + self.t) - special.gammaln(a)
              + special.gammaln(b + self.r) - special.gammaln(b))
        ll = ll.sum(axis=1) - np.sum(special.gammaln(nu_c + self.y) - special.gammaln(nu_c), axis=1)
        return ll + self._prior(beta)

    def all(self, beta, nu):
        """Value, gradient (M, d) and Hessian (M, d, d)."""
        d = beta.shape[1]
        prior_h = -np.diag(self.inv_var)
        if self.X.shape[0] == 0:
            grad = -beta * self.inv_var
            hess = np.broadcast_to(prior_h, (beta.shape[0], d, d)).copy()
            return self._prior(beta), grad, hess
        X = self.X
        eta = beta @ X.T
        nu_c = nu[:, None]
        th = special.expit(eta)
        om = special.expit(-eta)
        a = th * nu_c
        b = om * nu_c
        at, br = a + self.t, b + self.r
        ll = (special.gammaln(at) - special.gammaln(a) + special.gammaln(br) - special.gammaln(b)).sum(axis=1)
        ll -= np.sum(special.gammaln(nu_c + self.y) - special.gammaln(nu_c), axis=1)
        # differences taken pairwise so empty cells cancel exactly
        da = (special.digamma(at) - special.digamma(a)) - (special.digamma(br) - special.digamma(b))
        db = (_trigamma(at) - _trigamma(a)) + (_trigamma(br) - _trigamma(b))
        zz = th * om
        grad = (nu_c * da * zz) @ X - beta * self.inv_var
        w = nu_c * (nu_c * db * zz * zz + da * zz * (om - th))
        hess = np.einsum("mn,ni,nj->mij", w, X, X) + prior_h
        return ll + self._prior(beta), grad, hess


def _newton_step(neg_hess, grad):
    """Solve ``neg_hess @ step = grad``, shifting eigenvalues where not positive definite."""
    evals, evecs = np.linalg.eigh(neg_hess)
    scale = np.maximum(np.abs(evals).max(axis=1, keepdims=True), 1e-12)
    floor = 1e-8 * scale
    evals = np.where(evals > floor, evals, np.abs(evals) + scale * 1e-3 + floor)
    coef = np.einsum("mji,mj->mi", evecs, grad) / evals
    return np.einsum("mij,mj->mi", evecs, coef)


def _fit_batch(obj: _Objective, nu: np.ndarray, d: int, beta0=None):
    """Damped Newton ascent of h_nu for every dispersion in ``nu`` at once."""
    M = len(nu)
    beta = np.zeros((M, d)) if beta0 is None else np.array(beta0, dtype=float)
    val, grad, hess = obj.all(beta, nu)
    converged = np.zeros(M, dtype=bool)
    iterations = np.zeros(M, dtype=np.int64)
    active = np.ones(M, dtype=bool)
    calm = np.zeros(M, dtype=np.int64)  # consecutive iterations with negligible change
    for _ in range(MAX_ITER):
        done = np.max(np.abs(grad), axis=1) < GRAD_TOL
        converged |= done & active
        active &= ~done
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        iterations[idx] += 1
        step = _newton_step(-hess[idx], grad[idx])
        old = val[idx]
        slack = ROUNDOFF * np.maximum(np.abs(old), 1.0)
        # predicted gain below rounding: judge the full step by gradient, not by h
        near = 0.5 * np.sum(grad[idx] * step, axis=1) <= slack
        size = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        new_beta = beta[idx].copy()
        new_val = old.copy()
        for _ in range(MAX_HALVINGS):
            p = np.flatnonzero(pending)
            trial = beta[idx[p]] + size[p, None] * step[p]
            with np.errstate(over="ignore", invalid="ignore"):
                v = obj.value(trial, nu[idx[p]])
            ok = np.isfinite(v) & ((v >= old[p]) | (near[p] & (size[p] == 1.0) & (v >= old[p] - slack[p])))
            new_beta[p[ok]] = trial[ok]
            new_val[p[ok]] = v[ok]
            pending[p[ok]] = False
            if not pending.any():
                break
            size[pending] *= 0.5
        # a step that cannot increase h at any size means we sit at the optimum up to rounding
        stalled = pending
        rel = np.abs(new_val - old) <= REL_TOL * np.maximum(np.abs(old), 1.0)
        moved = idx[~stalled]
        beta[moved] = new_beta[~stalled]
        if moved.size:
            val[moved], grad[moved], hess[moved] = obj.all(beta[moved], nu[moved])
        # two calm steps in a row: the second one is already a quadratically small polish
        calm[idx] = np.where(rel, calm[idx] + 1, 0)
        finished = idx[stalled | (calm[idx] >= 2)]
        converged[finished] = True
        active[finished] = False
    done = np.max(np.abs(grad), axis=1) < GRAD_TOL
    converged |= done
    return beta, val, grad, hess, converged, iterations


def _neg_hess_logdet(hess):
    evals = np.linalg.eigvalsh(-hess)
    with np.errstate(divide="ignore", invalid="ignore"):
        logdet = np.where(np.all(evals > 0, axis=1), np.sum(np.log(np.abs(evals)), axis=1), np.nan)
    return logdet


# -- public per-node API --------------------------------------------------------

def _objective(node: NodeData, prior: PriorSpec, hypothesis: int):
    X = node.design(hypothesis)
    return _Objective(X, node.left, node.total, prior.variances(node.X.shape[1], hypothesis)), X.shape[1]


def log_posterior_grad_hess(beta, nu: float, node: NodeData, prior: PriorSpec, hypothesis: int):
    """``h_nu(beta)`` with its gradient and Hessian (prior terms included)."""
    obj, d = _objective(node, prior, hypothesis)
    beta = np.asarray(beta, dtype=float).reshape(1, d)
    v, g, h = obj.all(beta, np.array([float(nu)]))
    return float(v[0]), g[0], h[0]


def newton_raphson_map(node: NodeData, nu: float, prior: PriorSpec, hypothesis: int) -> FitResult:
    obj, d = _objective(node, prior, hypothesis)
    beta, val, grad, hess, conv, iters = _fit_batch(obj, np.array([float(nu)]), d)
    logdet = _neg_hess_logdet(hess)[0]
    return FitResult(beta[0], float(val[0]), float(logdet), bool(conv[0]), int(iters[0]), grad[0])


def laplace_log_marginal(fit: FitResult, d: int | None = None) -> float:
    """Laplace estimate of ``log \\int exp(h)``: ``h + d/2 log 2pi - 1/2 log|-H|``."""
    if d is None:
        d = len(fit.beta)
    if not np.isfinite(fit.neg_hess_logdet):
        raise ConvergenceError("negative Hessian is not positive definite at the mode")
    return fit.value + 0.5 * d * LOG_2PI - 0.5 * fit.neg_hess_logdet


def grid_log_laplace(node: NodeData, prior: PriorSpec, hypothesis: int):
    """Laplace log-integrals over the dispersion grid.

    Returns ``(nu, log_L, converged)``; failed grid points carry NaN.
    """
    obj, d = _objective(node, prior, hypothesis)
    nu = prior.nu_grid()
    beta, val, grad, hess, conv, _ = _fit_batch(obj, nu, d)
    log_l = val + 0.5 * d * LOG_2PI - 0.5 * _neg_hess_logdet(hess)
    return nu, log_l, conv


def node_evidence(node: NodeData, prior: PriorSpec, hypothesis: int, return_info: bool = False):
    """Log marginal likelihood ``log M_s`` of one node under hypothesis ``s``.

    The dispersion prior is uniform on log10(nu), so every midpoint carries
    weight ``1/M``. Grid points whose fit fails are skipped (and the weights
    renormalised) as long as at least 90% succeed.
    """
    nu, log_l, conv = grid_log_laplace(node, prior, hypothesis)
    ok = np.isfinite(log_l)
    notes = []
    if ok.mean() < MIN_GRID_SUCCESS:
        raise ConvergenceError(f"Laplace approximation failed at {int((~ok).sum())} of {len(nu)} grid points")
    if not ok.all():
        notes.append(f"H{hypothesis}: skipped {int((~ok).sum())} dispersion grid points")
    if not conv[ok].all():
        notes.append(f"H{hypothesis}: Newton-Raphson hit the iteration cap at {int((~conv[ok]).sum())} grid points")
    value = float(special.logsumexp(log_l[ok]) - math.log(ok.sum()))
    if return_info:
        return value, notes
    for note in notes:
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    return value


# -- whole-tree evidence --------------------------------------------------------

@dataclass(frozen=True)
class NodeEvidence:
    """Per-node log marginal likelihoods, indexed by node id (NaN at leaves)."""

    log_m0: np.ndarray
    log_m1: np.ndarray
    warnings: tuple = ()

    @classmethod
    def from_arrays(cls, tree, log_m0, log_m1) -> "NodeEvidence":
        """Place values given in ``tree.internal_nodes`` order (or full-length arrays)."""
        m0 = np.full(tree.n_nodes, np.nan)
        m1 = np.full(tree.n_nodes, np.nan)
        internal = tree.internal_nodes
        if len(log_m0) == tree.n_nodes:
            m0[internal] = np.asarray(log_m0, float)[internal]
            m1[internal] = np.asarray(log_m1, float)[internal]
        else:
            m0[internal] = log_m0
            m1[internal] = log_m1
        return cls(m0, m1)


def _evidence_job(args):
    node, prior, node_id = args
    m0, n0 = node_evidence(node, prior, 0, return_info=True)
    m1, n1 = node_evidence(node, prior, 1, return_info=True)
    return node_id, m0, m1, [f"node {node_id}: {x}" for x in n0 + n1]


def compute_evidence(data: AlignedDataset, prior: PriorSpec = PriorSpec(), threads: int = 1) -> NodeEvidence:
    tree = data.tree
    jobs = [(data.node_data(i), prior, i) for i in tree.internal_nodes]
    if threads > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_evidence_job, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    else:
        results = [_evidence_job(j) for j in jobs]
    m0 = np.full(tree.n_nodes, np.nan)
    m1 = np.full(tree.n_nodes, np.nan)
    notes = []
    for node_id, a, b, w in results:
        m0[node_id], m1[node_id] = a, b
        notes.extend(w)
    return NodeEvidence(m0, m1, tuple(notes))
