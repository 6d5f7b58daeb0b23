#!/usr/bin/env python3
"""Derive the absolute noise scales shipped in configs/noise_sweep.json.

The noise defense adds zero-mean Laplacian noise with a fixed absolute
scale.  To place the sweep grid relative to actual gradient magnitudes,
this script trains the sweep federation for one epoch with no defense and
measures mean |packet entry| over every passive-party packet.  The shipped
grid {0.024, 0.24, 2.4, 24.0} is decade-spaced so that the smallest scale
sits a few times above the signal (where training still converges) and the
largest sits ~2.5e3 x the reference, deep in the collapse regime where the
batch-mean loss signal drowns and accuracy never leaves chance.

A per-batch relative scale (lambda tracking each packet's own magnitude)
is deliberately not used: once noise inflates the weights, activations and
hence packets grow, so the noise grows with them -- a feedback loop that
ends in overflow instead of the flat accuracy floor the sweep is probing.
"""

import json
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from vfllab.experiments import build_dataset, config_from_dict  # noqa: E402
from vfllab.labels import one_hot_labels  # noqa: E402
from vfllab.protocol import make_federation, train  # noqa: E402

ROOT = os.path.join(os.path.dirname(__file__), "..")
SHIPPED_GRID = (0.024, 0.24, 2.4, 24.0)


def main() -> int:
    with open(os.path.join(ROOT, "configs", "noise_sweep.json")) as fh:
        doc = json.load(fh)
    shipped = doc["defense"]["noisy"]["scale"]
    doc["defense"] = {"kind": "none"}
    cfg = config_from_dict(doc)
    train_ds, _ = build_dataset(cfg.data)
    dists = one_hot_labels(train_ds.labels, train_ds.class_count)
    fs = cfg.federation
    fed = make_federation(
        train_ds,
        dists,
        mode=fs.mode,
        bottom_hidden=list(fs.bottom_hidden),
        embedding_dim=fs.embedding_dim,
        top_hidden=list(fs.top_hidden),
        embedding_activation=fs.embedding_activation,
        optimizer=fs.optimizer,
        learning_rate=fs.learning_rate,
        batch_size=fs.batch_size,
        seed=cfg.seeds[0],
    )
    transcripts = train(fed, train_ds, 1)
    magnitudes = np.concatenate(
        [np.abs(p).ravel() for t in transcripts for p in t.packets[1:]]
    )
    ref = float(magnitudes.mean())
    print(f"epoch-0 mean |packet entry| over passive parties: {ref:.3e}")
    print(f"packets: {len(transcripts)} rounds, {magnitudes.size} entries")
    for scale in SHIPPED_GRID:
        print(f"  scale {scale:<6g} = {scale / ref:8.1f} x ref")
    print(f"config default (largest arm): {shipped:g} (= {shipped / ref:.0f} x ref)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
