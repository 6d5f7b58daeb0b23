"""Split-learning federation: forward/backward rounds, training loop, transcripts.

One active party holds the labels and (in split mode) the top model; every
party holds a bottom model over its own feature slice. A training round
uploads bottom-model outputs, pulls back per-party gradient packets (passed
through the configured defense before release), and lets each party update
locally. Transcripts capture exactly what an eavesdropping party would see.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import VerticalDataset
from .defenses import DefenseConfig, DefenseRuntime, KdkDefense, NoDefense
from .errors import ModeError, ParameterError, ProtocolError, ShapeError
from .labels import LabelDistributionSet
from .nets import (
    DenseNet,
    Matrix,
    OptimizerState,
    backprop,
    ce_softmax_grad,
    cross_entropy_soft,
    forward,
    glorot_net,
    make_optimizer,
    optimizer_step,
    softmax,
    topk_accuracy,
    top1_accuracy,
)
from .seeding import DEFENSE, INIT, SHUFFLE, derive_rng

MODES = ("split", "no_split")


@dataclass
class PartyState:
    bottom: DenseNet
    optimizer: OptimizerState


@dataclass
class RoundTranscript:
    """What one batch leaks: uploads, returned packets, and the loss."""

    epoch: int
    batch: int
    indices: np.ndarray
    packets: list[Matrix]
    loss: float
    embeddings: list[Matrix] | None = None


@dataclass
class FederationState:
    parties: list[PartyState]
    mode: str
    batch_size: int
    class_count: int
    label_dists: LabelDistributionSet  # training targets held by the active party
    label_provider: str  # hard | kdk
    defense: DefenseRuntime
    top_model: DenseNet | None = None
    top_optimizer: OptimizerState | None = None
    defend_active_packet: bool = False
    seed: int = 0
    epochs_done: int = 0

    @property
    def party_count(self) -> int:
        return len(self.parties)


def make_federation(
    dataset: VerticalDataset,
    label_dists: LabelDistributionSet,
    *,
    mode: str = "split",
    bottom_hidden: list[int] | None = None,
    embedding_dim: int = 64,
    top_hidden: list[int] | None = None,
    embedding_activation: str = "relu",
    optimizer: str = "adam",
    learning_rate: float = 1e-3,
    batch_size: int = 32,
    defense: DefenseConfig = NoDefense(),
    defend_active_packet: bool = False,
    label_provider: str = "hard",
    seed: int = 0,
) -> FederationState:
    """Build bottoms (and the top model in split mode) with seeded init."""
    if mode not in MODES:
        raise ModeError(f"mode must be one of {MODES}, got {mode!r}")
    if batch_size < 1:
        raise ParameterError("batch size must be at least 1")
    if label_dists.sample_count != dataset.sample_count:
        raise ShapeError("label distributions misaligned with the dataset")
    if label_dists.class_count != dataset.class_count:
        raise ShapeError("label distributions disagree with the dataset on classes")
    bottom_hidden = [64, 64] if bottom_hidden is None else list(bottom_hidden)
    top_hidden = [32] if top_hidden is None else list(top_hidden)
    out_dim = embedding_dim if mode == "split" else dataset.class_count

    parties = []
    for p, feats in enumerate(dataset.party_features):
        net = glorot_net(
            [feats.shape[1], *bottom_hidden, out_dim],
            derive_rng(seed, INIT, p),
            output_activation=embedding_activation if mode == "split" else "identity",
        )
        parties.append(PartyState(net, make_optimizer(optimizer, learning_rate)))

    top_model = top_optimizer = None
    if mode == "split":
        top_model = glorot_net(
            [out_dim * len(parties), *top_hidden, dataset.class_count],
            derive_rng(seed, INIT, len(parties)),
        )
        top_optimizer = make_optimizer(optimizer, learning_rate)

    return FederationState(
        parties=parties,
        mode=mode,
        batch_size=batch_size,
        class_count=dataset.class_count,
        label_dists=label_dists,
        label_provider=label_provider,
        defense=DefenseRuntime(defense, derive_rng(seed, DEFENSE)),
        top_model=top_model,
        top_optimizer=top_optimizer,
        defend_active_packet=defend_active_packet,
        seed=seed,
    )


def forward_round(
    state: FederationState, dataset: VerticalDataset, batch_indices: np.ndarray
) -> tuple[list[list[Matrix]], Matrix]:
    """Per-party activation records plus the fused predictions for one batch.

    Split mode fuses by concatenating embeddings into the top model; no_split
    fuses by summing the per-party class-logit contributions.
    """
    records = [
        forward(party.bottom, dataset.party_features[p][batch_indices])
        for p, party in enumerate(state.parties)
    ]
    uploads = [rec[-1] for rec in records]
    if state.mode == "split":
        preds = forward(state.top_model, np.hstack(uploads))[-1]
    else:
        for up in uploads:
            if up.shape[1] != state.class_count:
                raise ModeError("no_split bottoms must emit one logit per class")
        preds = np.sum(uploads, axis=0)
    return records, preds


def backward_round(
    state: FederationState,
    records: list[list[Matrix]],
    target_rows: Matrix,
) -> tuple[list[Matrix], float]:
    """Server side of a round: loss, top-model update, defended packets.

    Returns the per-party gradient packets exactly as released (the active
    party's own packet — index 0 — skips the defense unless
    ``defend_active_packet`` is set) and the batch loss.
    """
    uploads = [rec[-1] for rec in records]
    epoch = state.epochs_done
    if state.mode == "split":
        fused = np.hstack(uploads)
        top_acts = forward(state.top_model, fused)
        preds = top_acts[-1]
        grad_preds = ce_softmax_grad(preds, target_rows)
        loss = cross_entropy_soft(softmax(preds), target_rows)
        top_grads, fused_grad = backprop(state.top_model, top_acts, grad_preds)
        optimizer_step(state.top_optimizer, state.top_model.parameters(), top_grads)
        widths = [u.shape[1] for u in uploads]
        cuts = np.cumsum(widths)[:-1]
        raw_packets = np.hsplit(fused_grad, cuts)
    else:
        preds = np.sum(uploads, axis=0)
        grad_preds = ce_softmax_grad(preds, target_rows)
        loss = cross_entropy_soft(softmax(preds), target_rows)
        raw_packets = [grad_preds for _ in state.parties]

    packets = []
    for p, raw in enumerate(raw_packets):
        if p == 0 and not state.defend_active_packet:
            packets.append(np.array(raw, copy=True))
        else:
            packets.append(state.defense.apply(np.array(raw, copy=True), epoch))
    return packets, loss


def local_update(party: PartyState, record: list[Matrix], packet: Matrix) -> None:
    """One party's bottom-model update from its returned gradient packet."""
    if packet.shape != record[-1].shape:
        raise ProtocolError(
            f"packet shape {packet.shape} does not match the round's upload "
            f"shape {record[-1].shape}; packets cannot be replayed across rounds"
        )
    grads, _ = backprop(party.bottom, record, packet)
    optimizer_step(party.optimizer, party.bottom.parameters(), grads)


def train(
    state: FederationState,
    dataset: VerticalDataset,
    epochs: int,
    *,
    sink: "TranscriptSink | None" = None,
    record_embeddings: bool = False,
    collect: bool = True,
) -> list[RoundTranscript]:
    """Run the federation for ``epochs`` passes over the training split.

    Batch order reshuffles every epoch from the federation seed. Returns (and
    optionally streams to ``sink``) one transcript per round.
    """
    if epochs < 0:
        raise ParameterError("epochs must be non-negative")
    n = dataset.sample_count
    if state.label_dists.sample_count != n:
        raise ShapeError("label distributions misaligned with the dataset")
    transcripts: list[RoundTranscript] = []
    for _ in range(epochs):
        epoch = state.epochs_done
        order = derive_rng(state.seed, SHUFFLE, epoch).permutation(n)
        for batch_no, start in enumerate(range(0, n, state.batch_size)):
            idx = order[start : start + state.batch_size]
            records, _ = forward_round(state, dataset, idx)
            packets, loss = backward_round(state, records, state.label_dists.matrix[idx])
            for party, record, packet in zip(state.parties, records, packets):
                local_update(party, record, packet)
            t = RoundTranscript(
                epoch=epoch,
                batch=batch_no,
                indices=idx,
                packets=packets,
                loss=loss,
                embeddings=[r[-1] for r in records] if record_embeddings else None,
            )
            if sink is not None:
                sink.write(t)
            if collect:
                transcripts.append(t)
        state.epochs_done += 1
    return transcripts


def federation_logits(state: FederationState, dataset: VerticalDataset) -> Matrix:
    _, preds = forward_round(state, dataset, np.arange(dataset.sample_count))
    return preds


def evaluate(state: FederationState, dataset: VerticalDataset, top_k: int = 5) -> tuple[float, float]:
    """(top-1, top-k) accuracy of the fused model on ``dataset``."""
    logits = federation_logits(state, dataset)
    return top1_accuracy(logits, dataset.labels), topk_accuracy(logits, dataset.labels, top_k)


# ---------------------------------------------------------------------------
# JSON-lines transcript persistence


class TranscriptSink:
    """Streams transcripts to a JSON-lines file, one round per line."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w")

    def write(self, t: RoundTranscript) -> None:
        record = {
            "epoch": t.epoch,
            "batch": t.batch,
            "indices": t.indices.tolist(),
            "packets": [p.tolist() for p in t.packets],
            "loss": t.loss,
        }
        if t.embeddings is not None:
            record["embeddings"] = [e.tolist() for e in t.embeddings]
        self._fh.write(json.dumps(record) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "TranscriptSink":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_transcripts(path) -> list[RoundTranscript]:
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            out.append(
                RoundTranscript(
                    epoch=rec["epoch"],
                    batch=rec["batch"],
                    indices=np.array(rec["indices"], dtype=int),
                    packets=[np.array(p) for p in rec["packets"]],
                    loss=rec["loss"],
                    embeddings=(
                        [np.array(e) for e in rec["embeddings"]]
                        if "embeddings" in rec
                        else None
                    ),
                )
            )
    return out
