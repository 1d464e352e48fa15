"""Regenerate the golden CLI report for the committed 8-leaf fixture.

The report is written only after its PMAPs and PJAP have been reproduced by
brute-force enumeration from the report's own evidence and fitted tau.

    python scripts/make_golden.py
"""
import json
import sys
import tempfile
from pathlib import Path

from bgcr.cli import main
from bgcr.dataset import aggregate, load_counts, load_covariates, standardize
from bgcr.graph_prior import ArParams
from bgcr.message_passing import brute_force_posterior
from bgcr.node_model import compute_evidence
from bgcr.phylo import read_newick

FIXTURE = Path(__file__).resolve().parents[1] / "tests" / "data" / "golden8"
ARGS = ["--group", "group", "--adjust", "male", "--threads", "1"]


def fixture_args(out):
    return ["test", "--counts", str(FIXTURE / "counts.tsv"), "--tree", str(FIXTURE / "tree.nwk"),
            "--covariates", str(FIXTURE / "covariates.csv"), *ARGS, "--out", str(out)]


def check_against_oracle(report, tree):
    table = load_counts(FIXTURE / "counts.tsv")
    cov = standardize(load_covariates(FIXTURE / "covariates.csv", "group", ["male"]))
    evidence = compute_evidence(aggregate(table, tree, cov))
    params = ArParams(report["alpha"], report["tau"], report["kappa"])
    pmap, pjap, _ = brute_force_posterior(tree, evidence, params)
    worst = max(abs(nd["pmap"] - pmap[nd["id"]]) for nd in report["nodes"])
    worst = max(worst, abs(report["pjap"] - pjap))
    if worst > 1e-10:
        raise SystemExit(f"oracle mismatch: max error {worst:.3g}")
    return worst


def main_script():
    with tempfile.TemporaryDirectory() as tmp:
        if main(fixture_args(tmp)) != 0:
            raise SystemExit("CLI run failed")
        text = (Path(tmp) / "report.json").read_text()
    report = json.loads(text)
    worst = check_against_oracle(report, read_newick(FIXTURE / "tree.nwk"))
    (FIXTURE / "report.golden.json").write_text(text)
    print(f"golden written; oracle agreement {worst:.2e}", file=sys.stderr)


if __name__ == "__main__":
    main_script()
