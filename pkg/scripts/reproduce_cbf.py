"""Small CBF study: accuracy, PGD attack success and local Lipschitz medians.

Trains the full KAN, MLP_I and the spline-only KANs (G=1, G=50) for each seed,
then prints one table row per (variant, seed). Uses $KANTSC_DATA/CBF when
present, otherwise a generated CBF set.

    python scripts/reproduce_cbf.py --seeds 0 1 2 --out cbf_study.csv
"""

import argparse
import csv
import os
import time
from pathlib import Path

import numpy as np

from kantsc.data import load_dataset, make_cbf, preprocess
from kantsc.models import ModelConfig, build_model
from kantsc.robust import PAPER_EPS, AttackConfig, LipschitzConfig, attack_success_rate, lipschitz_dataset_summary
from kantsc.train import TrainConfig, train

VARIANTS = {
    "kan": dict(arch="KAN"),
    "mlp1": dict(arch="MLP_I"),
    "kan_spline_g1": dict(arch="KAN", use_base=False, grid_size=1),
    "kan_spline_g50": dict(arch="KAN", use_base=False, grid_size=50),
}


def load_cbf():
    root = os.environ.get("KANTSC_DATA")
    if root and (Path(root) / "CBF").is_dir():
        return load_dataset(root, "CBF")
    return preprocess(make_cbf(seed=0))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=1000)
    ap.add_argument("--variants", nargs="+", default=list(VARIANTS), choices=list(VARIANTS))
    ap.add_argument("--lipschitz-points", type=int, default=64)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    ds = load_cbf()
    rows = []
    for name in args.variants:
        for seed in args.seeds:
            t0 = time.perf_counter()
            model = build_model(ModelConfig(d=ds.d, m=ds.m, seed=seed, **VARIANTS[name]))
            model, hist = train(model, ds, TrainConfig(epochs=args.epochs, seed=seed, eval_every=100))
            row = {"variant": name, "seed": seed, "test_acc": hist.test_acc[-1], "train_acc": hist.train_acc[-1]}
            if name in ("kan", "mlp1"):
                for eps in PAPER_EPS:
                    row[f"asr_{eps}"] = attack_success_rate(model, ds, AttackConfig(eps))[0]
                summary = lipschitz_dataset_summary(model, ds, LipschitzConfig(), max_points=args.lipschitz_points)
                row["lipschitz_median"] = summary.median
            row["seconds"] = round(time.perf_counter() - t0, 1)
            rows.append(row)
            print("  ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()),
                  flush=True)

    if args.out:
        fields = sorted({k for r in rows for k in r}, key=lambda k: list(rows[0]).index(k) if k in rows[0] else 99)
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    for name in args.variants:
        accs = [r["test_acc"] for r in rows if r["variant"] == name]
        print(f"{name}: median test accuracy {np.median(accs):.4f} over {len(accs)} seeds")


if __name__ == "__main__":
    main()
