#!/usr/bin/env python3
"""Train model variants on one synthetic dataset and print a comparison
table: full model, attention off, fixed task weights, single domains.

Generates the dataset into the run directory first if it is not already
there, then delegates to `cdad ablate`, which trains each variant in its
own `variant-<name>/` subdirectory and writes `ablation_report.csv`.

Example:
    python scripts/run_ablations.py --out runs/ablate0 --seed 0 \
        --variants full,no-attention,physical-only,network-only
"""

import argparse
import os
import sys

from cdad import cli

DEFAULT_VARIANTS = "full,no-attention,static-0.5,static-0.25,static-0.75"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, help="run directory (created if missing)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--variants", default=DEFAULT_VARIANTS)
    args = ap.parse_args()

    if not os.path.exists(os.path.join(args.out, "train_physical.csv")):
        code = cli.main(["synth", "--out", args.out, "--seed", str(args.seed)])
        if code != 0:
            return code
    return cli.main(
        ["ablate", "--out", args.out, "--seed", str(args.seed), "--variants", args.variants]
    )


if __name__ == "__main__":
    sys.exit(main())
