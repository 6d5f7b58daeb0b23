#!/usr/bin/env python3
"""Reproduce the accuracy / attack-success trade-off across defenses.

Three batteries, all on the same synthetic tabular task:

  split    passive + active model-completion attacks, defense off vs
           anonymized soft labels (configs/default.json)
  direct   gradient-sign label read-out in no_split mode
           (configs/direct_nosplit.json)
  noise    gradient noise swept over four scales in the collapse regime,
           same task, against the direct attack (configs/noise_sweep.json)

Writes results/tradeoff/tradeoff.csv plus one SVG chart per battery and a
combined accuracy-vs-ASR chart.  Full run is ~4 minutes single-threaded;
--fast cuts to 2 seeds for a smoke pass.
"""

import argparse
import copy
import csv
import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from vfllab.experiments import (  # noqa: E402
    _svg_chart,
    config_from_dict,
    run,
    sweep,
)

ROOT = os.path.join(os.path.dirname(__file__), "..")
NOISE_SCALES = [0.024, 0.24, 2.4, 24.0]


def load(name: str) -> dict:
    with open(os.path.join(ROOT, "configs", name)) as fh:
        return json.load(fh)


def with_defense(doc: dict, kind: str) -> dict:
    out = copy.deepcopy(doc)
    out["defense"]["kind"] = kind
    return out


def median_model(report) -> float:
    model = report.aggregates["model"]
    headline = model.get("test") or model["train"]
    return headline["top1"]["median"]


def median_asr(report, kind: str) -> float:
    per_split = report.aggregates["attacks"][kind]
    source = per_split.get("train") or per_split["test"]
    return source["asr_top1"]["median"]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=os.path.join(ROOT, "results", "tradeoff"))
    parser.add_argument("--fast", action="store_true", help="2 seeds instead of 5")
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)

    def seeds(doc: dict) -> dict:
        if args.fast:
            doc["seeds"] = doc["seeds"][:2]
        return doc

    rows = []  # (battery, arm, model_top1, attack, asr)

    print("== split battery: passive + active completion attacks ==")
    base = seeds(load("default.json"))
    for arm in ("none", "kdk"):
        rep = run(config_from_dict(with_defense(base, arm)),
                  out_dir=os.path.join(args.out, "split", arm))
        acc = median_model(rep)
        for attack in ("passive", "active"):
            asr = median_asr(rep, attack)
            rows.append(("split", arm, acc, attack, asr))
            print(f"  {arm:<5} {attack:<7} model {acc:.3f}  asr {asr:.3f}")

    print("== direct battery: gradient-sign read-out ==")
    base = seeds(load("direct_nosplit.json"))
    for arm in ("none", "kdk"):
        rep = run(config_from_dict(with_defense(base, arm)),
                  out_dir=os.path.join(args.out, "direct", arm))
        acc, asr = median_model(rep), median_asr(rep, "direct")
        rows.append(("direct", arm, acc, "direct", asr))
        print(f"  {arm:<5} direct  model {acc:.3f}  asr {asr:.3f}")

    print("== noise battery: gradient noise at collapse-regime scales ==")
    base = seeds(load("noise_sweep.json"))
    for arm in ("none", "kdk"):
        rep = run(config_from_dict(with_defense(base, arm)),
                  out_dir=os.path.join(args.out, "noise", arm))
        acc, asr = median_model(rep), median_asr(rep, "direct")
        rows.append(("noise", arm, acc, "direct", asr))
        print(f"  {arm:<5} direct  model {acc:.3f}  asr {asr:.3f}")
    reports, trend = sweep(
        config_from_dict(base), "defense.noisy.scale", NOISE_SCALES,
        out_dir=os.path.join(args.out, "noise", "sweep"),
    )
    for scale, rep in zip(NOISE_SCALES, reports):
        acc, asr = median_model(rep), median_asr(rep, "direct")
        rows.append(("noise", f"noisy_{scale:g}", acc, "direct", asr))
        print(f"  noisy scale {scale:<7g} model {acc:.3f}  asr {asr:.3f}")

    with open(os.path.join(args.out, "tradeoff.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["battery", "arm", "model_top1", "attack", "asr_top1"])
        writer.writerows(rows)

    # trade-off chart: model accuracy vs attack success, one series per family
    series = []
    noisy_pts = [(acc, asr) for _, arm, acc, _, asr in rows if arm.startswith("noisy_")]
    if noisy_pts:
        series.append(("gradient noise", noisy_pts))
    for battery, attack in (("split", "passive"), ("split", "active"), ("direct", "direct")):
        pts = [
            (acc, asr)
            for b, arm, acc, atk, asr in rows
            if b == battery and atk == attack and arm in ("none", "kdk")
        ]
        if pts:
            series.append((f"{attack}: off vs anonymized", pts))
    _svg_chart(
        series,
        os.path.join(args.out, "plots", "tradeoff.svg"),
        title="model accuracy vs attack success",
        x_label="model top-1 accuracy",
        y_label="attack top-1 success",
    )
    print(f"wrote {os.path.join(args.out, 'tradeoff.csv')}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
