"""Vertically partitioned datasets: synthetic clusters, CSV loading, auxiliary labels."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParameterError, ShapeError
from .nets import Matrix
from .seeding import DATA, derive_rng


@dataclass
class VerticalDataset:
    """One split of a dataset whose feature columns are divided among parties.

    Row i of every party matrix and labels[i] describe the same sample; the
    parties are assumed to have aligned their rows before training starts.
    """

    party_features: list[Matrix]
    labels: np.ndarray
    class_count: int
    split_tag: str = "train"
    unknown_category_count: int = 0

    @property
    def sample_count(self) -> int:
        return int(self.labels.shape[0])

    @property
    def party_count(self) -> int:
        return len(self.party_features)

    def validate(self) -> None:
        if not self.party_features:
            raise ShapeError("dataset needs at least one party")
        n = self.sample_count
        for i, feats in enumerate(self.party_features):
            if feats.ndim != 2 or feats.shape[0] != n:
                raise ShapeError(f"party {i} features misaligned with labels")
            if not np.isfinite(feats).all():
                raise DataError(f"party {i} features contain non-finite values")
        if self.labels.min(initial=0) < 0 or self.labels.max(initial=0) >= self.class_count:
            raise DataError("labels outside [0, class_count)")


@dataclass
class AuxiliaryLabelSet:
    """The handful of labelled samples an attacker is assumed to hold."""

    indices: np.ndarray
    labels: np.ndarray
    fraction: float


def generate_synthetic(
    classes: int,
    samples: int,
    feature_dims: list[int],
    cluster_spread: float,
    seed: int,
    *,
    test_samples: int | None = None,
    signal_scales: list[float] | None = None,
    modes_per_class: int = 1,
    shared_latent: bool = False,
    view_noise: float | list[float] = 0.0,
    active_warp: float | None = None,
) -> tuple[VerticalDataset, VerticalDataset]:
    """Gaussian class clusters split across parties.

    Class means are drawn once per class per party from N(0, scale^2 I) --
    scale defaults to 1 and can be lowered per party via ``signal_scales`` to
    make a party less informative. Samples are the means plus
    ``cluster_spread`` * N(0, I) noise, classes balanced to within one sample,
    rows shuffled by a single shared permutation.

    With ``modes_per_class`` > 1 each class is a mixture of that many Gaussian
    modes and every sample picks one mode (shared across parties). A handful
    of labelled anchors then covers only part of each class, while a model
    trained on the full split sees all modes -- the gap between those two
    views is what the completion attacks need.

    With ``shared_latent`` every party observes the same latent sample (drawn
    from the party-0 cluster layout) through its own fixed orthogonal map plus
    N(0, view_noise^2) sensor jitter (scalar, or one value per party), so the
    slices carry the same label information in different encodings instead of
    independent signal.
    ``active_warp`` additionally cubes party 0's view elementwise after
    scaling by the given factor (an invertible recoding, re-standardized on
    train statistics): the label signal survives but is harder to descend
    into, which shifts the top model's reliance toward the other parties.
    """
    if classes < 2:
        raise ParameterError("need at least two classes")
    if classes > samples:
        raise ParameterError(f"classes ({classes}) exceed samples ({samples})")
    if not feature_dims or any(d < 1 for d in feature_dims):
        raise ParameterError("every party needs at least one feature column")
    if cluster_spread < 0:
        raise ParameterError("cluster_spread must be non-negative")
    scales = [1.0] * len(feature_dims) if signal_scales is None else list(signal_scales)
    if len(scales) != len(feature_dims):
        raise ParameterError("signal_scales must match feature_dims in length")
    jitter = (
        [float(view_noise)] * len(feature_dims)
        if np.isscalar(view_noise)
        else [float(x) for x in view_noise]
    )
    if len(jitter) != len(feature_dims):
        raise ParameterError("view_noise must be scalar or one value per party")
    if any(x < 0 for x in jitter):
        raise ParameterError("view_noise must be non-negative")
    if shared_latent and any(d != feature_dims[0] for d in feature_dims):
        raise ParameterError("shared_latent needs equal feature_dims across parties")
    if active_warp is not None and not shared_latent:
        raise ParameterError("active_warp only applies with shared_latent")
    if modes_per_class < 1:
        raise ParameterError("modes_per_class must be at least 1")
    if test_samples is None:
        test_samples = max(classes, samples // 5)

    rng = derive_rng(seed, DATA)
    means = [
        scale * rng.normal(size=(classes, modes_per_class, dim))
        for dim, scale in zip(feature_dims, scales)
    ]
    rotations = None
    if shared_latent:
        # one fixed orthogonal map per party, via QR of a Gaussian draw
        dim = feature_dims[0]
        rotations = [np.linalg.qr(rng.normal(size=(dim, dim)))[0] for _ in feature_dims]
    warp_scale: list[Matrix | None] = [None]  # train-split std of the warped view

    def draw(count: int, tag: str) -> VerticalDataset:
        per_class = [count // classes + (1 if c < count % classes else 0) for c in range(classes)]
        labels = np.concatenate([np.full(k, c, dtype=int) for c, k in enumerate(per_class)])
        if modes_per_class == 1:
            modes = np.zeros(count, dtype=int)
        else:
            modes = rng.integers(0, modes_per_class, size=count)
        if rotations is None:
            parties = [
                m[labels, modes] + cluster_spread * rng.normal(size=(count, dim))
                for m, dim in zip(means, feature_dims)
            ]
        else:
            latent = means[0][labels, modes]
            latent = latent + cluster_spread * rng.normal(size=(count, feature_dims[0]))
            parties = [
                latent @ rot.T + eta * rng.normal(size=latent.shape)
                for rot, eta in zip(rotations, jitter)
            ]
            if active_warp is not None:
                warped = parties[0] + active_warp * parties[0] ** 3
                if warp_scale[0] is None:  # train split comes first
                    warp_scale[0] = warped.std(axis=0)
                parties[0] = warped / np.where(warp_scale[0] == 0, 1.0, warp_scale[0])
        order = rng.permutation(count)
        ds = VerticalDataset([p[order] for p in parties], labels[order], classes, tag)
        ds.validate()
        return ds

    return draw(samples, "train"), draw(test_samples, "test")


# ---------------------------------------------------------------------------
# CSV loading


def _is_float(value: str) -> bool:
    try:
        float(value)
        return True
    except ValueError:
        return False


def _resolve_column(key, header: list[str], what: str) -> int:
    if isinstance(key, int):
        if not 0 <= key < len(header):
            raise DataError(f"{what} index {key} out of range for {len(header)} columns")
        return key
    if key in header:
        return header.index(key)
    raise DataError(f"{what} {key!r} not found in header {header}")


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            rows = [row for row in reader if row]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise DataError(f"{path} needs a header row and at least one data row")
    return rows[0], rows[1:]


class _ColumnCodec:
    """Per-column encoder fitted on the train file and reused on test."""

    def __init__(self, values: list[str]):
        self.continuous = all(_is_float(v) for v in values)
        if self.continuous:
            arr = np.array([float(v) for v in values])
            self.mean = float(arr.mean())
            self.std = float(arr.std())
            self.categories: list[str] = []
        else:
            self.categories = list(dict.fromkeys(values))  # first-appearance order

    @property
    def width(self) -> int:
        return 1 if self.continuous else len(self.categories)

    def encode(self, values: list[str]) -> tuple[Matrix, int]:
        if self.continuous:
            try:
                arr = np.array([float(v) for v in values])
            except ValueError as exc:
                raise DataError(f"non-numeric value in a continuous column: {exc}") from exc
            if self.std == 0.0:
                return np.zeros((len(values), 1)), 0
            return ((arr - self.mean) / self.std)[:, None], 0
        out = np.zeros((len(values), len(self.categories)))
        unknown = 0
        lookup = {c: i for i, c in enumerate(self.categories)}
        for row, v in enumerate(values):
            col = lookup.get(v)
            if col is None:
                unknown += 1  # unseen category becomes an all-zero row
            else:
                out[row, col] = 1.0
        return out, unknown


def load_csv(
    path,
    label_column,
    party_columns: list[list],
    *,
    test_path=None,
) -> tuple[VerticalDataset, VerticalDataset | None]:
    """Load a vertically partitioned tabular dataset from CSV.

    ``party_columns`` lists, per party, the columns (names or indices) that
    party holds. Continuous columns are z-scored with train statistics;
    categorical ones are one-hot encoded with train categories. Unseen test
    categories encode as all zeros and are counted on the returned dataset.
    """
    header, train_rows = _read_rows(path)
    label_idx = _resolve_column(label_column, header, "label column")
    party_idx = [
        [_resolve_column(c, header, "feature column") for c in cols] for cols in party_columns
    ]
    if not party_idx or any(not cols for cols in party_idx):
        raise DataError("every party needs at least one feature column")

    label_values = [row[label_idx] for row in train_rows]
    label_map = {v: i for i, v in enumerate(dict.fromkeys(label_values))}
    codecs = {
        c: _ColumnCodec([row[c] for row in train_rows])
        for cols in party_idx
        for c in cols
    }

    def build(rows: list[list[str]], tag: str) -> VerticalDataset:
        if any(len(row) != len(header) for row in rows):
            raise DataError(f"{tag} rows disagree with the header on column count")
        try:
            labels = np.array([label_map[row[label_idx]] for row in rows])
        except KeyError as exc:
            raise DataError(f"unseen label {exc} in {tag} split") from exc
        unknown = 0
        parties = []
        for cols in party_idx:
            blocks = []
            for c in cols:
                block, misses = codecs[c].encode([row[c] for row in rows])
                blocks.append(block)
                unknown += misses
            parties.append(np.hstack(blocks))
        ds = VerticalDataset(parties, labels, len(label_map), tag, unknown_category_count=unknown)
        ds.validate()
        return ds

    train = build(train_rows, "train")
    if test_path is None:
        return train, None
    _, test_rows = _read_rows(test_path)
    test = build(test_rows, "test")
    if test.unknown_category_count:
        warnings.warn(
            f"{test.unknown_category_count} unseen categories mapped to zeros in the test split"
        )
    return train, test


def sample_auxiliary(
    dataset: VerticalDataset, fraction: float, seed: int, *, stratified: bool = True
) -> AuxiliaryLabelSet:
    """Pick the attacker's labelled subset: round(fraction * n) indices.

    Stratified sampling spreads the quota over classes (remainder to the
    lowest class indices) and forces at least one sample per present class,
    warning when the fraction alone is too small to cover them.
    """
    if not 0 < fraction < 1:
        raise ParameterError(f"aux fraction must lie in (0, 1), got {fraction}")
    n = dataset.sample_count
    total = int(round(fraction * n))
    rng = derive_rng(seed, DATA, 7)
    if not stratified:
        if total < 1:
            raise ParameterError("aux fraction rounds to zero samples")
        idx = np.sort(rng.choice(n, size=total, replace=False))
        return AuxiliaryLabelSet(idx, dataset.labels[idx], fraction)

    present = np.unique(dataset.labels)
    if total < len(present):
        warnings.warn(
            f"aux fraction {fraction} yields {total} samples; forcing one per class "
            f"({len(present)} total)"
        )
        total = len(present)
    base, extra = divmod(total, len(present))
    picks = []
    for rank, cls in enumerate(sorted(present)):
        quota = base + (1 if rank < extra else 0)
        pool = np.flatnonzero(dataset.labels == cls)
        quota = min(quota, pool.size)
        picks.append(rng.choice(pool, size=quota, replace=False))
    idx = np.sort(np.concatenate(picks))
    return AuxiliaryLabelSet(idx, dataset.labels[idx], fraction)
