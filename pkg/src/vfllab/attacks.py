"""Label-inference attacks run from a passive party's point of view.

Every attack starts from an AdversaryState, which holds only what a passive
party legitimately sees: its own feature slices, its own bottom model, and
the gradient packets the server returned to it. Ground-truth labels enter
only through the scoring arguments, never through the adversary object.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import AuxiliaryLabelSet, VerticalDataset
from .errors import ModeError, ParameterError, ProtocolError, ShapeError
from .labels import one_hot_labels
from .nets import (
    DenseNet,
    Layer,
    Matrix,
    fit_classifier,
    forward,
    make_optimizer,
    softmax,
    top1_accuracy,
    topk_accuracy,
)
from .protocol import FederationState, RoundTranscript, evaluate, train
from .seeding import ATTACK, INIT, SHUFFLE, derive_rng


@dataclass
class AdversaryState:
    """A passive party's observables; labels never appear here."""

    party_index: int
    bottom: DenseNet
    train_features: Matrix
    test_features: Matrix | None
    packets: list[tuple[int, int, np.ndarray, Matrix]]  # (epoch, batch, indices, packet)
    mode: str
    class_count: int
    attack_head: DenseNet | None = None  # classification head once completion ran


@dataclass
class AttackReport:
    """Outcome of one attack on one data split."""

    kind: str  # passive | active | direct
    split: str  # train | test
    predicted: np.ndarray
    top1_asr: float
    topk_asr: float
    config: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.split not in ("train", "test"):
            raise ParameterError(f"split must be train or test, got {self.split!r}")
        if not 0.0 <= self.top1_asr <= 1.0 or not 0.0 <= self.topk_asr <= 1.0:
            raise ParameterError("ASR values must lie in [0, 1]")
        if self.topk_asr < self.top1_asr:
            raise ParameterError("top-k ASR cannot be below top-1 ASR")


def adversary_view(
    state: FederationState,
    transcripts: list[RoundTranscript],
    train: VerticalDataset,
    test: VerticalDataset | None,
    party_index: int,
) -> AdversaryState:
    """Extract what ``party_index`` saw; copies the bottom, drops all labels."""
    if not 0 <= party_index < state.party_count:
        raise ParameterError(f"no party {party_index} in a {state.party_count}-party federation")
    if party_index == 0:
        raise ParameterError("party 0 holds the labels; the adversary is a passive party")
    return AdversaryState(
        party_index=party_index,
        bottom=state.parties[party_index].bottom.copy(),
        train_features=train.party_features[party_index],
        test_features=None if test is None else test.party_features[party_index],
        packets=[(t.epoch, t.batch, t.indices, t.packets[party_index]) for t in transcripts],
        mode=state.mode,
        class_count=state.class_count,
    )


def score_asr(scores: Matrix, truth: np.ndarray, k: int) -> tuple[float, float]:
    """(top-1, top-k) attack success from per-class attack scores."""
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 2:
        raise ShapeError("scores must be a samples x classes matrix")
    truth = np.asarray(truth)
    if truth.shape[0] != scores.shape[0]:
        raise ShapeError("scores and truth disagree on sample count")
    return top1_accuracy(scores, truth), topk_accuracy(scores, truth, k)


# ---------------------------------------------------------------------------
# model completion (passive attack; the active attack reuses it)


@dataclass
class CompletionParams:
    """Schedule for completing a stolen bottom model into a classifier.

    The head starts from nearest-class-mean weights over the auxiliary
    embeddings and is trained alone against the frozen bottom, then head and
    body are fine-tuned jointly at a much smaller step; each pseudo round
    self-labels the confident unlabelled samples and repeats the joint phase.
    """

    head_warm_epochs: int = 80
    head_learning_rate: float = 1e-2
    epochs: int = 15  # joint head+body epochs on the auxiliary set
    learning_rate: float = 1e-4  # joint fine-tune step
    pseudo_rounds: int = 2
    pseudo_epochs: int = 15
    confidence: float = 0.9
    batch_size: int = 16
    pseudo_batch_size: int = 32

    def validate(self) -> None:
        if not 0.0 < self.confidence <= 1.0:
            raise ParameterError("confidence must lie in (0, 1]")
        if min(self.head_warm_epochs, self.epochs, self.pseudo_epochs) < 0:
            raise ParameterError("epoch counts must be non-negative")
        if self.pseudo_rounds < 0:
            raise ParameterError("pseudo_rounds must be non-negative")
        if min(self.batch_size, self.pseudo_batch_size) < 1:
            raise ParameterError("batch sizes must be positive")


def _ncm_head(embeddings: Matrix, labels: np.ndarray, classes: int) -> Layer:
    """Linear layer scoring like nearest class mean: w_c = mu_c, b_c = -|mu_c|^2/2."""
    weights = np.zeros((classes, embeddings.shape[1]))
    bias = np.zeros(classes)
    for c in range(classes):
        rows = embeddings[labels == c]
        if rows.size:
            mu = rows.mean(axis=0)
            weights[c] = mu
            bias[c] = -0.5 * float(mu @ mu)
    return Layer(weights, bias, "identity")


def fit_completion_model(
    adv: AdversaryState,
    aux: AuxiliaryLabelSet,
    unlabeled_features: Matrix | None = None,
    params: CompletionParams | None = None,
    seed: int = 0,
) -> DenseNet:
    """Append a classification head to the stolen bottom and fine-tune it.

    The bottom stays frozen while the head warms up, then both train jointly
    on the auxiliary labels; each pseudo round self-labels every unlabelled
    sample the model is confident about (max probability >= confidence) and
    retrains on the union. Only the adversary's own observables and the aux
    labels are consumed.
    """
    params = params or CompletionParams()
    params.validate()
    if aux.indices.size == 0:
        raise ParameterError("auxiliary set is empty")
    if unlabeled_features is None:
        unlabeled_features = adv.train_features
    bottom = adv.bottom.copy()
    fit_rng = derive_rng(seed, ATTACK, SHUFFLE, adv.party_index)

    x_aux = adv.train_features[aux.indices]
    y_aux = one_hot_labels(aux.labels, adv.class_count).matrix
    emb_aux = forward(bottom, x_aux)[-1]
    head = _ncm_head(emb_aux, aux.labels, adv.class_count)
    fit_classifier(
        DenseNet([head]),
        emb_aux,
        y_aux,
        epochs=params.head_warm_epochs,
        batch_size=params.batch_size,
        optimizer=make_optimizer("adam", params.head_learning_rate),
        rng=fit_rng,
    )

    model = DenseNet([*bottom.layers, head])
    joint = make_optimizer("adam", params.learning_rate)
    fit_classifier(
        model,
        x_aux,
        y_aux,
        epochs=params.epochs,
        batch_size=params.batch_size,
        optimizer=joint,
        rng=fit_rng,
    )

    aux_set = set(aux.indices.tolist()) if unlabeled_features is adv.train_features else set()
    for _ in range(params.pseudo_rounds):
        probs = softmax(forward(model, unlabeled_features)[-1])
        confident = np.flatnonzero(probs.max(axis=1) >= params.confidence)
        confident = np.array([i for i in confident if i not in aux_set], dtype=int)
        x = np.vstack([x_aux, unlabeled_features[confident]])
        pseudo = one_hot_labels(probs[confident].argmax(axis=1), adv.class_count).matrix
        y = np.vstack([y_aux, pseudo])
        fit_classifier(
            model,
            x,
            y,
            epochs=params.pseudo_epochs,
            batch_size=params.pseudo_batch_size,
            optimizer=joint,
            rng=fit_rng,
        )
    adv.attack_head = DenseNet([head])
    return model


def _completion_reports(
    kind: str,
    model: DenseNet,
    adv: AdversaryState,
    truth_train: np.ndarray,
    truth_test: np.ndarray | None,
    config: dict,
    top_k: int,
) -> list[AttackReport]:
    reports = []
    splits = [("train", adv.train_features, truth_train)]
    if truth_test is not None and adv.test_features is not None:
        splits.append(("test", adv.test_features, truth_test))
    for split, feats, truth in splits:
        scores = forward(model, feats)[-1]
        top1, topk = score_asr(scores, truth, top_k)
        report = AttackReport(
            kind=kind,
            split=split,
            predicted=np.argmax(scores, axis=1),
            top1_asr=top1,
            topk_asr=topk,
            config=dict(config),
        )
        report.validate()
        reports.append(report)
    return reports


def passive_model_completion(
    adv: AdversaryState,
    aux: AuxiliaryLabelSet,
    unlabeled_features: Matrix | None = None,
    epochs: int | None = None,
    pseudo_rounds: int | None = None,
    *,
    params: CompletionParams | None = None,
    truth_train: np.ndarray,
    truth_test: np.ndarray | None = None,
    seed: int = 0,
    top_k: int = 5,
) -> tuple[DenseNet, list[AttackReport]]:
    """Run model completion, then score it against held ground truth.

    ``epochs`` and ``pseudo_rounds`` override the corresponding params
    fields; ground truth is used for scoring only and never reaches the
    fitted model. Returns one report per evaluated split.
    """
    params = params or CompletionParams()
    overrides = {}
    if epochs is not None:
        overrides["epochs"] = epochs
    if pseudo_rounds is not None:
        overrides["pseudo_rounds"] = pseudo_rounds
    if overrides:
        params = replace(params, **overrides)
    model = fit_completion_model(adv, aux, unlabeled_features, params, seed)
    config = {
        "aux_count": int(aux.indices.size),
        "epochs": params.epochs,
        "pseudo_rounds": params.pseudo_rounds,
        "confidence": params.confidence,
    }
    reports = _completion_reports("passive", model, adv, truth_train, truth_test, config, top_k)
    return model, reports


def active_attack(
    state: FederationState,
    dataset: VerticalDataset,
    epochs: int,
    adversary_party: int,
    *,
    gamma: float = 2.0,
    r_max: float = 8.0,
    test: VerticalDataset | None = None,
    aux: AuxiliaryLabelSet,
    truth_train: np.ndarray,
    truth_test: np.ndarray | None = None,
    params: CompletionParams | None = None,
    seed: int = 0,
    top_k: int = 5,
) -> tuple[DenseNet, list[AttackReport], list[RoundTranscript]]:
    """Malicious-optimizer variant of model completion.

    Swaps the adversary's local optimizer for the gradient-amplifying one
    before training starts, runs the federation, then completes as in the
    passive attack. The federation state must be freshly built. With
    gamma=1 the swapped optimizer takes plain SGD steps, so the pipeline
    reduces to the passive attack over an honestly trained federation.
    """
    if state.epochs_done:
        raise ProtocolError("active attack needs an untrained federation")
    if gamma < 1 or r_max < 1:
        raise ParameterError("gamma and r_max must be at least 1")
    honest = state.parties[adversary_party].optimizer
    state.parties[adversary_party].optimizer = make_optimizer(
        "malicious", honest.learning_rate, gamma=gamma, r_max=r_max
    )
    transcripts = train(state, dataset, epochs)
    adv = adversary_view(state, transcripts, dataset, test, adversary_party)
    model, reports = passive_model_completion(
        adv,
        aux,
        params=params,
        truth_train=truth_train,
        truth_test=truth_test,
        seed=seed,
        top_k=top_k,
    )
    main_top1 = {"train": evaluate(state, dataset, top_k)[0]}
    if test is not None:
        main_top1["test"] = evaluate(state, test, top_k)[0]
    for report in reports:
        report.kind = "active"
        report.config.update(gamma=gamma, r_max=r_max, main_model_top1=main_top1)
    return model, reports, transcripts


# ---------------------------------------------------------------------------
# direct attack (no_split gradients reveal labels by sign)


def direct_attack(
    adv: AdversaryState,
    truth_train: np.ndarray,
    *,
    epoch: int = 0,
    top_k: int = 5,
) -> AttackReport:
    """Read labels straight out of one epoch's gradient packets.

    Each sample's predicted label is the unique negative entry of its packet
    row when exactly one exists, otherwise the most negative entry. Scores
    for top-k rank by ascending gradient value. Only defined for no_split
    packets (rows are per-class loss gradients). Gradients exist only for
    training rows, so the report covers the train split alone.
    """
    if adv.mode != "no_split":
        raise ModeError("direct attack reads class-shaped gradients; run the federation no_split")
    rows = [(idx, pkt) for ep, _, idx, pkt in adv.packets if ep == epoch]
    if not rows:
        raise ParameterError(f"no packets recorded for epoch {epoch}")
    n = adv.train_features.shape[0]
    scores = np.full((n, adv.class_count), -np.inf)
    seen = np.zeros(n, dtype=bool)
    predicted = np.zeros(n, dtype=int)
    for idx, pkt in rows:
        if pkt.shape[1] != adv.class_count:
            raise ModeError("packet width disagrees with the class count")
        for row_in_batch, sample in enumerate(idx):
            g = pkt[row_in_batch]
            negatives = np.flatnonzero(g < 0)
            predicted[sample] = negatives[0] if negatives.size == 1 else int(np.argmin(g))
            scores[sample] = -g
            seen[sample] = True
    if not seen.all():
        raise ProtocolError("epoch packets do not cover every training sample")
    top1 = float(np.mean(predicted == np.asarray(truth_train)))
    _, topk = score_asr(scores, truth_train, top_k)
    report = AttackReport(
        kind="direct",
        split="train",
        predicted=predicted,
        top1_asr=top1,
        topk_asr=max(topk, top1),
        config={"epoch": epoch, "rule": "unique-negative-sign, else most negative"},
    )
    report.validate()
    return report
