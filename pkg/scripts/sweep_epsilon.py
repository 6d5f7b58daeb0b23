#!/usr/bin/env python3
"""Sweep the anonymization strength epsilon against the direct attack.

Runs configs/direct_nosplit.json over an epsilon grid at fixed k and writes
the trend table + chart under results/epsilon/.  The direct-attack success
should fall monotonically as epsilon pushes the released secondary
probabilities toward the top-1 mass.
"""

import argparse
import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from vfllab.experiments import config_from_dict, sweep  # noqa: E402

ROOT = os.path.join(os.path.dirname(__file__), "..")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=os.path.join(ROOT, "results", "epsilon"))
    parser.add_argument("--values", default="0.25,0.45,0.66")
    parser.add_argument("--fast", action="store_true", help="2 seeds instead of 5")
    args = parser.parse_args()

    with open(os.path.join(ROOT, "configs", "direct_nosplit.json")) as fh:
        doc = json.load(fh)
    if args.fast:
        doc["seeds"] = doc["seeds"][:2]
    values = [float(v) for v in args.values.split(",")]
    _, trend = sweep(config_from_dict(doc), "defense.kdk.epsilon", values, out_dir=args.out)
    for row in trend:
        print(
            f"epsilon {row['value']:<5g} model {row['model_top1']:.3f} "
            f"direct asr {row['asr_direct']:.3f}"
        )
    print(f"wrote {os.path.join(args.out, 'trend.csv')}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
