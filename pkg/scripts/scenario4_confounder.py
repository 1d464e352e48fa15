#!/usr/bin/env python3
"""False positives from an unbalanced binary confounder, with and without adjustment.

    python scripts/scenario4_confounder.py --reps 100 --out results/s4.csv
"""
import numpy as np

from bgcr.experiments import fixed_tree, run_study
from bgcr.simulate import ScenarioSpec

from _common import parser, tagged, write_rows


def main():
    p = parser(__doc__.splitlines()[0])
    p.add_argument("--p", type=float, default=0.0, help="true effect on a second OTU (0 = null)")
    args = p.parse_args()
    tree = fixed_tree(args.leaves)
    spec = ScenarioSpec("IV", args.p, n0=args.n, n1=args.n)
    rows = []
    for adjust in ((), ("male",)):
        runs = run_study(tree, spec, args.reps, args.seed0, args.jobs, adjust=adjust, nu=args.nu)
        label = "adjusted" if adjust else "unadjusted"
        pjap = np.array([r.pjap for r in runs])
        print(f"{label:>10}: P(PJAP > 0.5) = {np.mean(pjap > 0.5):.3f}, mean PJAP = {pjap.mean():.3f}")
        rows += tagged(runs, scenario="IV", p=args.p, adjusted=bool(adjust))
    write_rows(args.out, rows)


if __name__ == "__main__":
    main()
