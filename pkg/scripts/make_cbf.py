"""Write a cylinder-bell-funnel dataset in UCR2018 layout.

    python scripts/make_cbf.py --root data/UCR --seed 0
"""

import argparse

from kantsc.data import make_cbf, write_ucr_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--root", required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-train", type=int, default=30)
    ap.add_argument("--n-test", type=int, default=900)
    ap.add_argument("--length", type=int, default=128)
    args = ap.parse_args()
    print(write_ucr_dataset(args.root, make_cbf(args.n_train, args.n_test, args.length, args.seed)))


if __name__ == "__main__":
    main()
