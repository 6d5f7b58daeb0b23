"""Label distributions and the anonymized soft-label defense.

The defense replaces the hard training labels the server would normally use
with distributions produced in three steps: a teacher net trained on the
label holder's own feature slice, temperature-softened teacher outputs, and
a top-k anonymization that leaves every row with exactly k nonzero entries
whose argmax no longer has to reveal the true label.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParameterError, ShapeError
from .nets import (
    DenseNet,
    Matrix,
    ce_softmax_grad,
    fit_classifier,
    forward,
    glorot_net,
    make_optimizer,
    softmax,
    softmax_temperature,
    top1_accuracy,
)
from .seeding import INIT, SHUFFLE, TEACHER, derive_rng


@dataclass
class LabelDistributionSet:
    """Per-sample probability rows used as training targets."""

    matrix: Matrix
    provenance: str  # one_hot | teacher_soft | anonymized

    @property
    def sample_count(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def class_count(self) -> int:
        return int(self.matrix.shape[1])

    def validate(self) -> None:
        if self.matrix.ndim != 2:
            raise ShapeError("label distributions must form a 2-D matrix")
        if (self.matrix < 0).any():
            raise DataError("label distributions contain negative entries")
        if np.max(np.abs(self.matrix.sum(axis=1) - 1.0)) > 1e-9:
            raise DataError("label distribution rows must sum to 1 within 1e-9")


def one_hot_labels(labels: np.ndarray, class_count: int) -> LabelDistributionSet:
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= class_count:
        raise DataError("labels outside [0, class_count)")
    m = np.zeros((labels.shape[0], class_count))
    m[np.arange(labels.shape[0]), labels] = 1.0
    return LabelDistributionSet(m, "one_hot")


@dataclass
class KdkConfig:
    """Settings for the anonymized soft-label defense."""

    k: int = 3
    epsilon: float = 0.45
    tau: float = 1.0
    teacher_hidden: list[int] = field(default_factory=lambda: [128, 64])
    teacher_epochs: int = 50
    teacher_lr: float = 1e-3
    teacher_batch_size: int = 32
    alpha: float = 0.5  # distillation mix, used by distill_student only

    def validate(self, class_count: int) -> None:
        def bad(name: str, message: str):
            exc = ParameterError(f"{name} {message}")
            exc.parameter = name  # lets config validation name the exact field
            raise exc

        if not 2 <= self.k <= class_count:
            bad("k", f"must lie in [2, {class_count}], got {self.k}")
        if not 0.0 < self.epsilon < 1.0:
            bad("epsilon", f"must lie in (0, 1), got {self.epsilon}")
        if not self.tau > 0:
            bad("tau", f"must be positive, got {self.tau}")
        if not 0.0 <= self.alpha <= 1.0:
            bad("alpha", f"must lie in [0, 1], got {self.alpha}")
        if self.epsilon >= (self.k - 1) / self.k:
            warnings.warn(
                f"epsilon={self.epsilon} >= (k-1)/k; anonymized rows may not keep "
                "the teacher argmax on top"
            )


@dataclass
class TrainedTeacher:
    net: DenseNet
    train_top1: float


def train_teacher(
    config: KdkConfig,
    features: Matrix,
    labels: np.ndarray,
    class_count: int,
    seed: int,
) -> TrainedTeacher:
    """Fit the label holder's private teacher on its own feature slice only."""
    config.validate(class_count)
    features = np.asarray(features, dtype=float)
    targets = one_hot_labels(labels, class_count)
    net = glorot_net(
        [features.shape[1], *config.teacher_hidden, class_count],
        derive_rng(seed, TEACHER, INIT),
    )
    fit_classifier(
        net,
        features,
        targets.matrix,
        epochs=config.teacher_epochs,
        batch_size=config.teacher_batch_size,
        optimizer=make_optimizer("adam", config.teacher_lr),
        rng=derive_rng(seed, TEACHER, SHUFFLE),
    )
    acc = top1_accuracy(forward(net, features)[-1], labels)
    return TrainedTeacher(net, acc)


def teacher_soft_labels(teacher: DenseNet, features: Matrix, tau: float) -> LabelDistributionSet:
    """Temperature-softened teacher outputs for every row of ``features``."""
    logits = forward(teacher, np.asarray(features, dtype=float))[-1]
    return LabelDistributionSet(softmax_temperature(logits, tau), "teacher_soft")


def anonymize(soft, k: int, epsilon: float) -> LabelDistributionSet:
    """Collapse each soft row onto its top-k support.

    The largest entry becomes 1 - epsilon, the remaining k - 1 top entries
    each become epsilon / (k - 1), everything else is zeroed. Ties rank the
    lower index first. For epsilon < (k-1)/k the input argmax stays the
    output argmax.
    """
    m = np.asarray(getattr(soft, "matrix", soft), dtype=float)
    if m.ndim != 2:
        raise ShapeError("anonymize expects a 2-D matrix of soft labels")
    classes = m.shape[1]
    if not 2 <= k <= classes:
        raise ParameterError(f"k must lie in [2, {classes}], got {k}")
    if not 0.0 < epsilon < 1.0:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    order = np.argsort(-m, axis=1, kind="stable")  # descending, ties -> lowest index
    out = np.zeros_like(m)
    rows = np.arange(m.shape[0])[:, None]
    out[rows, order[:, :1]] = 1.0 - epsilon
    out[rows, order[:, 1:k]] = epsilon / (k - 1)
    return LabelDistributionSet(out, "anonymized")


def kdk_label_provider(
    config: KdkConfig,
    features: Matrix,
    labels: np.ndarray,
    class_count: int,
    seed: int,
) -> tuple[LabelDistributionSet, TrainedTeacher]:
    """Teacher training, softening and anonymization in one call.

    Returns the anonymized distributions the federation trains against plus
    the fitted teacher (whose train accuracy is the reference point for the
    direct-attack criteria).
    """
    teacher = train_teacher(config, features, labels, class_count, seed)
    soft = teacher_soft_labels(teacher.net, features, config.tau)
    return anonymize(soft, config.k, config.epsilon), teacher


def distill_student(
    teacher: DenseNet,
    student_dims: list[int],
    features: Matrix,
    labels: np.ndarray,
    class_count: int,
    *,
    alpha: float,
    tau: float,
    epochs: int,
    learning_rate: float,
    batch_size: int,
    seed: int,
) -> DenseNet:
    """Train a student against the mixed hard/teacher objective.

    The objective is alpha * CE(softmax(z), hard) plus
    (1 - alpha) * tau^2 * CE(softmax_tau(z) vs softened teacher); at alpha=1
    the second term is skipped entirely so the run is bit-identical to plain
    cross-entropy training at the same seed.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")
    if not tau > 0:
        raise ParameterError(f"tau must be positive, got {tau}")
    features = np.asarray(features, dtype=float)
    hard = one_hot_labels(labels, class_count).matrix
    student = glorot_net([features.shape[1], *student_dims, class_count], derive_rng(seed, INIT))

    grad_fn = None
    if alpha != 1.0:
        teacher_tau = softmax_temperature(forward(teacher, features)[-1], tau)

        def grad_fn(logits: Matrix, idx: np.ndarray) -> Matrix:
            grad = alpha * ce_softmax_grad(logits, hard[idx])
            # d/dz of tau^2 * CE(softmax_tau(z), q) is tau * (softmax_tau(z) - q) / batch
            grad += (
                (1.0 - alpha)
                * tau
                * (softmax_temperature(logits, tau) - teacher_tau[idx])
                / logits.shape[0]
            )
            return grad

    fit_classifier(
        student,
        features,
        hard,
        epochs=epochs,
        batch_size=batch_size,
        optimizer=make_optimizer("adam", learning_rate),
        rng=derive_rng(seed, SHUFFLE),
        grad_fn=grad_fn,
    )
    return student


# ---------------------------------------------------------------------------
# CSV round trip for anonymized (or any) label distribution sets


def export_distributions_csv(dists: LabelDistributionSet, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample", *[f"p{i}" for i in range(dists.class_count)], "provenance"])
        for i, row in enumerate(dists.matrix):
            writer.writerow([i, *[repr(float(v)) for v in row], dists.provenance])


def import_distributions_csv(path) -> LabelDistributionSet:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise DataError(f"{path} holds no distribution rows")
    width = len(rows[0]) - 2
    matrix = np.empty((len(rows) - 1, width))
    provenance = rows[1][-1]
    for i, row in enumerate(rows[1:]):
        if len(row) != width + 2:
            raise DataError(f"row {i} has {len(row)} fields, expected {width + 2}")
        matrix[i] = [float(v) for v in row[1:-1]]
    out = LabelDistributionSet(matrix, provenance)
    out.validate()
    return out
