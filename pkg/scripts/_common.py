"""Shared argument handling and output for the simulation scripts."""
import argparse
import csv
import os
from dataclasses import asdict
from pathlib import Path


def parser(description, reps=100):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--reps", type=int, default=reps, help="replicates per setting")
    p.add_argument("--seed0", type=int, default=0, help="seed of the first replicate")
    p.add_argument("--leaves", type=int, default=32)
    p.add_argument("--n", type=int, default=40, help="samples per group")
    p.add_argument("--nu", type=float, default=20.0, help="dispersion of the base model")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", type=Path, default=None, help="CSV of per-replicate results")
    return p


def write_rows(path, rows):
    if path is None or not rows:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def tagged(runs, **tags):
    return [{**tags, "replicate": k, **asdict(r)} for k, r in enumerate(runs)]
