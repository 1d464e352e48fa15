"""Command-line interface: ``bgcr test | simulate | select``.

Exit status 0 means the run completed (whatever the test decided), 2 an
input problem and 3 a numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import aggregate, load_counts, load_covariates, standardize
from .decision import DecisionConfig, decide_global, significant_nodes
from .errors import InputError, NumericError
from .message_passing import run_bgcr
from .node_model import PriorSpec
from .phylo import read_newick, to_annotated_newick
from .select import enumerate_models, format_table
from .simulate import SCENARIOS, ScenarioSpec, make_rng, random_tree, simulate_dataset, write_scenario

log = logging.getLogger("bgcr")

EXIT_INPUT = 2
EXIT_NUMERIC = 3


def _num(x):
    """Round to 12 significant digits for serialization; None/NaN become null."""
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(f"{x:.12g}")


def _nums(xs):
    return None if xs is None else [_num(v) for v in xs]


def _digest(path) -> dict:
    h = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return {"file": Path(path).name, "sha256": h}


def _tau_arg(text: str):
    if text == "fit":
        return "fit"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("--tau takes 'fit' or a non-negative number") from None
    if value < 0:
        raise argparse.ArgumentTypeError("--tau must be non-negative")
    return value


def _comma_list(text: str):
    return [t.strip() for t in text.split(",") if t.strip()]


def _add_data_args(p):
    p.add_argument("--counts", required=True, help="TSV count table (sample x OTU)")
    p.add_argument("--tree", required=True, help="Newick tree over the OTUs")
    p.add_argument("--covariates", required=True, help="CSV with sample id, group and covariates")
    p.add_argument("--group", required=True, help="binary group column")
    p.add_argument("--adjust", type=_comma_list, default=[], help="comma-separated adjustment columns")
    p.add_argument("--top-k", type=int, default=None, help="keep only the k most abundant OTUs")
    p.add_argument("--no-standardize", action="store_true", help="use continuous covariates as given")
    p.add_argument("--prjap", type=float, default=0.5, help="prior joint alternative probability")
    p.add_argument("--kappa", choices=("zero", "tau"), default="zero")
    p.add_argument("--tau", type=_tau_arg, default="fit", help="'fit' (empirical Bayes) or a fixed value")
    p.add_argument("--tau-max", type=float, default=6.0)
    p.add_argument("--nu-grid", type=int, default=50, help="number of dispersion grid points")
    p.add_argument("--sigma-beta2", type=float, default=16.0)
    p.add_argument("--sigma-gamma2", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0, help="recorded only; inference is deterministic")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bgcr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"bgcr {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="test for a two-group difference")
    _add_data_args(t)
    t.add_argument("--threshold-L", type=float, default=0.5, help="node threshold on PMAP")
    t.add_argument("--threshold-c", type=float, default=0.5, help="global threshold on PJAP")
    t.add_argument("--out", required=True, help="output directory")
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("simulate", help="write a synthetic dataset")
    s.add_argument("--scenario", choices=SCENARIOS, default="null")
    s.add_argument("--p", type=float, default=0.0, help="percentage increase")
    s.add_argument("--tree", default=None, help="Newick tree; a random tree is drawn when omitted")
    s.add_argument("--leaves", type=int, default=32, help="leaf count of the random tree")
    s.add_argument("--targets", type=_comma_list, default=None, help="OTU names to perturb")
    s.add_argument("--n0", type=int, default=40)
    s.add_argument("--n1", type=int, default=40)
    s.add_argument("--nu", type=float, default=20.0, help="dispersion of the base model")
    s.add_argument("--totals", type=_comma_list, default=["500", "2000"], help="low,high sample totals")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("select", help="posterior over covariate subsets")
    _add_data_args(m)
    m.add_argument("--q", type=_comma_list, default=None, help="inclusion probabilities (one, or one per column)")
    m.add_argument("--slab-variance", type=float, default=None)
    m.add_argument("--out", required=True, help="output directory")
    m.set_defaults(func=cmd_select)
    return parser


def _prior_from(args) -> PriorSpec:
    return PriorSpec(sigma_beta2=args.sigma_beta2, sigma_gamma2=args.sigma_gamma2, n_grid=args.nu_grid)


def _load(args):
    for name in ("counts", "tree", "covariates"):
        if not Path(getattr(args, name)).is_file():
            raise InputError(f"--{name}: no such file {getattr(args, name)!r}")
    tree = read_newick(args.tree)
    table = load_counts(args.counts)
    if args.top_k is not None:
        raise InputError("--top-k prunes OTUs and needs a matching tree; filter the table and tree beforehand")
    cov = load_covariates(args.covariates, args.group, args.adjust)
    if not args.no_standardize and cov.p > 0:
        cov = standardize(cov)
    if cov.n_dropped:
        log.info("dropped %d samples with missing covariates", cov.n_dropped)
    data = aggregate(table, tree, cov)
    return tree, table, cov, data


def _check_ranges(args):
    if not 0 < args.prjap < 1:
        raise InputError("--prjap must lie in (0, 1)")
    if args.tau_max <= 0:
        raise InputError("--tau-max must be positive")
    if args.nu_grid < 2:
        raise InputError("--nu-grid must be at least 2")
    if args.sigma_beta2 <= 0 or args.sigma_gamma2 <= 0:
        raise InputError("prior variances must be positive")


def build_report(args, tree, cov, data, rep, decisions: DecisionConfig) -> dict:
    nodes_dec = significant_nodes(rep.pmap, decisions)
    rejected = set(nodes_dec.rejected)
    nodes = []
    for node in tree.internal_nodes:
        nodes.append({
            "id": node,
            "depth": int(tree.depth[node]),
            "n_leaves": len(tree.leaf_descendants(node)),
            "pmap": _num(rep.pmap[node]),
            "bcr_pmap": _num(rep.bcr_pmap[node]) if rep.bcr_pmap is not None else None,
            "log_m0": _num(rep.log_m0[node]),
            "log_m1": _num(rep.log_m1[node]),
            "decision": node in rejected,
        })
    tau_block = None
    if rep.tau_grid is not None:
        tau_block = {
            "tau": _nums(rep.tau_grid),
            "log_marginal": _nums(rep.tau_profile),
            "posterior_density": _nums(rep.tau_density),
        }
    return {
        "schema_version": 1,
        "tool": f"bgcr {__version__}",
        "generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "inputs": {
            "counts": _digest(args.counts),
            "tree": _digest(args.tree),
            "covariates": _digest(args.covariates),
        },
        "settings": {
            "group_column": args.group,
            "adjust": list(args.adjust),
            "standardize": not args.no_standardize,
            "prjap": _num(args.prjap),
            "kappa_mode": args.kappa,
            "tau": args.tau if args.tau == "fit" else _num(args.tau),
            "tau_max": _num(args.tau_max),
            "nu_grid": args.nu_grid,
            "sigma_beta2": _num(args.sigma_beta2),
            "sigma_gamma2": _num(args.sigma_gamma2),
            "threshold_L": _num(decisions.L),
            "threshold_c": _num(decisions.c),
            "seed": args.seed,
        },
        "group_coding": {"0": cov.group_levels[0], "1": cov.group_levels[1]},
        "design": {
            "columns": list(data.columns),
            "n_dropped": cov.n_dropped,
            "scaling": {k: [_num(m), _num(s)] for k, (m, s) in sorted(cov.scaling.items())},
            "binary_coding": {k: list(v) for k, v in sorted(cov.level_codes.items())},
        },
        "n_samples": int(data.X.shape[0]),
        "n_leaves": tree.n_leaves,
        "pjap": _num(rep.pjap),
        "reject_global_null": decide_global(rep.pjap, decisions),
        "alpha": _num(rep.alpha),
        "tau": _num(rep.tau),
        "kappa": _num(rep.kappa),
        "log_marginal_likelihood": _num(rep.log_marginal),
        "bcr_pjap": _num(rep.bcr_pjap),
        "tau_profile": tau_block,
        "log_bf10": _num(rep.log_bf10),
        "expected_false_discoveries": _num(nodes_dec.expected_fd),
        "expected_false_negatives": _num(nodes_dec.expected_fn),
        "nodes": nodes,
        "warnings": list(rep.warnings),
    }


def cmd_test(args) -> int:
    _check_ranges(args)
    decisions = DecisionConfig(c=args.threshold_c, L=args.threshold_L)
    tree, table, cov, data = _load(args)
    rep = run_bgcr(data, tree, _prior_from(args), args.tau, prjap=args.prjap, kappa_mode=args.kappa,
                   tau_max=args.tau_max, threads=args.threads)
    report = build_report(args, tree, cov, data, rep, decisions)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    with open(out / "pmaps.tsv", "w", encoding="utf-8") as fh:
        fh.write("node\tdepth\tpmap\tbcr_pmap\tlog_m0\tlog_m1\tdecision\n")
        for nd in report["nodes"]:
            fh.write(f"{nd['id']}\t{nd['depth']}\t{nd['pmap']!r}\t{nd['bcr_pmap']!r}\t"
                     f"{nd['log_m0']!r}\t{nd['log_m1']!r}\t{int(nd['decision'])}\n")
    (out / "pmaps.nwk").write_text(to_annotated_newick(tree, rep.pmap) + "\n", encoding="utf-8")
    log.info("PJAP=%.4f tau=%.2f", rep.pjap, rep.tau)
    return 0


def cmd_simulate(args) -> int:
    if len(args.totals) != 2:
        raise InputError("--totals takes low,high")
    lo, hi = (int(v) for v in args.totals)
    if args.tree:
        if not Path(args.tree).is_file():
            raise InputError(f"--tree: no such file {args.tree!r}")
        tree = read_newick(args.tree)
    else:
        tree = random_tree(args.leaves, make_rng([args.seed, 2]))
    spec = ScenarioSpec(args.scenario, args.p, tuple(args.targets) if args.targets else None,
                        args.n0, args.n1, args.seed)
    from .experiments import balanced_theta

    data = simulate_dataset(tree, spec, theta=balanced_theta(tree), nu=args.nu, totals=(lo, hi))
    write_scenario(data, tree, args.out, spec)
    return 0


def cmd_select(args) -> int:
    _check_ranges(args)
    tree, table, cov, data = _load(args)
    p = cov.p
    if args.q is None:
        q = None
    else:
        try:
            q = [float(v) for v in args.q]
        except ValueError:
            raise InputError("--q takes numbers") from None
        if len(q) == 1:
            q = q * p
        if any(not 0 < v <= 1 for v in q):
            raise InputError("--q values must lie in (0, 1]")
    mp = enumerate_models(data, tree, _prior_from(args), args.tau, q, slab_variance=args.slab_variance,
                          threads=args.threads, prjap=args.prjap, kappa_mode=args.kappa, tau_max=args.tau_max)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "models.tsv").write_text(format_table(mp), encoding="utf-8")
    print(mp.warning, file=sys.stderr)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, OSError, ValueError) as exc:
        print(f"bgcr: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"bgcr: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
