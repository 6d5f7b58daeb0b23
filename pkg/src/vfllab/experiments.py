"""Declarative experiment runner over the federation/attack/defense stack.

A single JSON document describes data, federation, defense, attacks and
seeds; ``run`` executes it deterministically, ``sweep`` fans one scalar
field over a value grid.  Artifacts land in the configured output
directory: canonical ``report.json``, fixed-column ``results.csv``, and
SVG line charts under ``plots/``.  Identical configs produce
byte-identical ``results.csv`` (wall-clock lives only in the JSON).
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass, field, replace
from xml.sax.saxutils import escape

import numpy as np

from .attacks import (
    AdversaryState,
    AttackReport,
    CompletionParams,
    active_attack,
    adversary_view,
    direct_attack,
    passive_model_completion,
)
from .data import VerticalDataset, generate_synthetic, load_csv, sample_auxiliary
from .defenses import (
    CompressDefense,
    DefenseConfig,
    DiscreteSgdDefense,
    KdkDefense,
    NoDefense,
    NoisyDefense,
    PpdlDefense,
    validate_defense,
)
from .errors import ConfigError
from .labels import KdkConfig, one_hot_labels, kdk_label_provider
from .nets import backprop, forward, glorot_net, make_optimizer, optimizer_step
from .protocol import (
    FederationState,
    RoundTranscript,
    TranscriptSink,
    evaluate,
    make_federation,
    read_transcripts,
    train,
)
from .seeding import INIT, derive_rng

SPLITS = ("train", "test")
ATTACK_KINDS = ("passive", "active", "direct")
DEFENSE_KINDS = ("none", "kdk", "noisy", "compress", "ppdl", "discrete_sgd")

# results.csv schema; asr columns are empty only in trend fallbacks, never here
CSV_COLUMNS = (
    "config_hash",
    "seed",
    "attack",
    "split",
    "model_top1",
    "model_topk",
    "asr_top1",
    "asr_topk",
)


# ---------------------------------------------------------------------------
# config dataclasses


@dataclass
class SyntheticSpec:
    classes: int = 10
    samples: int = 2000
    test_samples: int | None = None
    feature_dims: list[int] = field(default_factory=lambda: [8, 8])
    cluster_spread: float = 0.7
    seed: int = 11
    signal_scales: list[float] | None = None
    modes_per_class: int = 1
    shared_latent: bool = False
    view_noise: float | list[float] = 0.0
    active_warp: float | None = None
    kind: str = "synthetic"


@dataclass
class CsvSpec:
    path: str
    label_column: str | int
    party_columns: list[list]
    test_path: str | None = None
    seed: int = 11
    kind: str = "csv"


@dataclass
class FederationSpec:
    mode: str = "split"
    bottom_hidden: list[int] = field(default_factory=lambda: [64, 64])
    embedding_dim: int = 64
    embedding_activation: str = "relu"
    top_hidden: list[int] = field(default_factory=lambda: [32])
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 10
    defend_active_packet: bool = False


@dataclass
class AttackSpec:
    kind: str
    adversary: int = 1
    aux_fraction: float = 0.01
    aux_seed: int | None = None  # None: fall back to the data seed
    completion: CompletionParams = field(default_factory=CompletionParams)
    gamma: float = 2.0  # active only
    r_max: float = 8.0  # active only
    epoch: int = 0  # direct only: which epoch's packets to read


@dataclass
class ExperimentConfig:
    data: SyntheticSpec | CsvSpec
    federation: FederationSpec
    defense: DefenseConfig
    attacks: list[AttackSpec]
    seeds: list[int]
    top_k: int = 5
    output_dir: str | None = None
    save_transcripts: bool = False


# ---------------------------------------------------------------------------
# per-seed result rows and the assembled report


@dataclass
class ModelRow:
    seed: int
    split: str
    top1: float
    topk: float


@dataclass
class AttackRow:
    seed: int
    attack: str
    split: str
    model_top1: float  # accuracy of the federation the attack observed
    model_topk: float
    asr_top1: float
    asr_topk: float


@dataclass
class MetricsReport:
    config_hash: str
    config: dict
    rows: list[AttackRow] = field(default_factory=list)
    model_rows: list[ModelRow] = field(default_factory=list)
    teacher_train_top1: dict[int, float] = field(default_factory=dict)
    aggregates: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0
    incomplete: bool = False
    error: str | None = None

    def payload(self) -> dict:
        return {
            "config": self.config,
            "config_hash": self.config_hash,
            "rows": [vars(r) for r in self.rows],
            "model_rows": [vars(r) for r in self.model_rows],
            "teacher_train_top1": {str(s): v for s, v in self.teacher_train_top1.items()},
            "aggregates": self.aggregates,
            "wall_clock_s": self.wall_clock_s,
            "incomplete": self.incomplete,
            "error": self.error,
        }


def report_from_payload(d: dict) -> MetricsReport:
    """Inverse of :meth:`MetricsReport.payload`, for re-emitting artifacts."""
    if not isinstance(d, dict) or "config_hash" not in d:
        raise ConfigError("report", "not a report payload (missing config_hash)")
    return MetricsReport(
        config_hash=d["config_hash"],
        config=d.get("config", {}),
        rows=[AttackRow(**r) for r in d.get("rows", [])],
        model_rows=[ModelRow(**r) for r in d.get("model_rows", [])],
        teacher_train_top1={int(s): v for s, v in d.get("teacher_train_top1", {}).items()},
        aggregates=d.get("aggregates", {}),
        wall_clock_s=d.get("wall_clock_s", 0.0),
        incomplete=d.get("incomplete", False),
        error=d.get("error"),
    )


# ---------------------------------------------------------------------------
# parsing: JSON dict -> dataclasses, errors carry the offending field path


def _check_keys(d: dict, allowed: set[str], path: str) -> None:
    for key in d:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown field")


def _get(d: dict, key: str, path: str, default=None, required: bool = False):
    if key not in d:
        if required:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
        return default
    return d[key]


def _num(value, path: str, *, integer: bool = False) -> float | int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _bool(value, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(path, f"expected true/false, got {value!r}")
    return value


def _str(value, path: str, choices: tuple[str, ...] | None = None) -> str:
    if not isinstance(value, str):
        raise ConfigError(path, f"expected a string, got {value!r}")
    if choices is not None and value not in choices:
        raise ConfigError(path, f"must be one of {choices}, got {value!r}")
    return value


def _int_list(value, path: str) -> list[int]:
    if not isinstance(value, list):
        raise ConfigError(path, f"expected a list, got {value!r}")
    return [_num(v, f"{path}[{i}]", integer=True) for i, v in enumerate(value)]


def _float_list(value, path: str) -> list[float]:
    if not isinstance(value, list):
        raise ConfigError(path, f"expected a list, got {value!r}")
    return [_num(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _parse_data(d, path: str) -> SyntheticSpec | CsvSpec:
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object")
    kind = _str(_get(d, "kind", path, default="synthetic"), f"{path}.kind", ("synthetic", "csv"))
    if kind == "csv":
        _check_keys(d, {"kind", "path", "label_column", "party_columns", "test_path", "seed"}, path)
        cols = _get(d, "party_columns", path, required=True)
        if not isinstance(cols, list) or not all(isinstance(c, list) for c in cols):
            raise ConfigError(f"{path}.party_columns", "expected a list of column lists")
        return CsvSpec(
            path=_str(_get(d, "path", path, required=True), f"{path}.path"),
            label_column=_get(d, "label_column", path, required=True),
            party_columns=cols,
            test_path=_get(d, "test_path", path),
            seed=_num(_get(d, "seed", path, default=11), f"{path}.seed", integer=True),
        )
    allowed = {
        "kind", "classes", "samples", "test_samples", "feature_dims", "cluster_spread",
        "seed", "signal_scales", "modes_per_class", "shared_latent", "view_noise",
        "active_warp",
    }
    _check_keys(d, allowed, path)
    spec = SyntheticSpec(
        classes=_num(_get(d, "classes", path, default=10), f"{path}.classes", integer=True),
        samples=_num(_get(d, "samples", path, default=2000), f"{path}.samples", integer=True),
        feature_dims=_int_list(_get(d, "feature_dims", path, default=[8, 8]), f"{path}.feature_dims"),
        cluster_spread=_num(_get(d, "cluster_spread", path, default=0.7), f"{path}.cluster_spread"),
        seed=_num(_get(d, "seed", path, default=11), f"{path}.seed", integer=True),
        modes_per_class=_num(
            _get(d, "modes_per_class", path, default=1), f"{path}.modes_per_class", integer=True
        ),
        shared_latent=_bool(_get(d, "shared_latent", path, default=False), f"{path}.shared_latent"),
    )
    if (ts := _get(d, "test_samples", path)) is not None:
        spec.test_samples = _num(ts, f"{path}.test_samples", integer=True)
    if (ss := _get(d, "signal_scales", path)) is not None:
        spec.signal_scales = _float_list(ss, f"{path}.signal_scales")
    vn = _get(d, "view_noise", path, default=0.0)
    spec.view_noise = (
        _float_list(vn, f"{path}.view_noise") if isinstance(vn, list) else _num(vn, f"{path}.view_noise")
    )
    if (aw := _get(d, "active_warp", path)) is not None:
        spec.active_warp = _num(aw, f"{path}.active_warp")
    return spec


def _parse_federation(d, path: str) -> FederationSpec:
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object")
    allowed = {
        "mode", "bottom_hidden", "embedding_dim", "embedding_activation", "top_hidden",
        "optimizer", "learning_rate", "batch_size", "epochs", "defend_active_packet",
    }
    _check_keys(d, allowed, path)
    base = FederationSpec()
    return FederationSpec(
        mode=_str(_get(d, "mode", path, default=base.mode), f"{path}.mode", ("split", "no_split")),
        bottom_hidden=_int_list(
            _get(d, "bottom_hidden", path, default=base.bottom_hidden), f"{path}.bottom_hidden"
        ),
        embedding_dim=_num(
            _get(d, "embedding_dim", path, default=base.embedding_dim),
            f"{path}.embedding_dim", integer=True,
        ),
        embedding_activation=_str(
            _get(d, "embedding_activation", path, default=base.embedding_activation),
            f"{path}.embedding_activation",
        ),
        top_hidden=_int_list(_get(d, "top_hidden", path, default=base.top_hidden), f"{path}.top_hidden"),
        optimizer=_str(
            _get(d, "optimizer", path, default=base.optimizer), f"{path}.optimizer", ("sgd", "adam")
        ),
        learning_rate=_num(
            _get(d, "learning_rate", path, default=base.learning_rate), f"{path}.learning_rate"
        ),
        batch_size=_num(
            _get(d, "batch_size", path, default=base.batch_size), f"{path}.batch_size", integer=True
        ),
        epochs=_num(_get(d, "epochs", path, default=base.epochs), f"{path}.epochs", integer=True),
        defend_active_packet=_bool(
            _get(d, "defend_active_packet", path, default=False), f"{path}.defend_active_packet"
        ),
    )


def _parse_defense(d, path: str) -> DefenseConfig:
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object")
    kind = _str(_get(d, "kind", path, default="none"), f"{path}.kind", DEFENSE_KINDS)
    # sub-objects for non-selected kinds may coexist so sweeps can flip `kind`
    _check_keys(d, {"kind", *DEFENSE_KINDS[1:]}, path)
    sub = _get(d, kind, path, default={})
    if not isinstance(sub, dict):
        raise ConfigError(f"{path}.{kind}", "expected an object")
    p = f"{path}.{kind}"
    if kind == "none":
        return NoDefense()
    if kind == "kdk":
        allowed = {
            "k", "epsilon", "tau", "teacher_hidden", "teacher_epochs", "teacher_lr",
            "teacher_batch_size", "alpha",
        }
        _check_keys(sub, allowed, p)
        base = KdkConfig()
        cfg = KdkConfig(
            k=_num(_get(sub, "k", p, default=base.k), f"{p}.k", integer=True),
            epsilon=_num(_get(sub, "epsilon", p, default=base.epsilon), f"{p}.epsilon"),
            tau=_num(_get(sub, "tau", p, default=base.tau), f"{p}.tau"),
            teacher_hidden=_int_list(
                _get(sub, "teacher_hidden", p, default=base.teacher_hidden), f"{p}.teacher_hidden"
            ),
            teacher_epochs=_num(
                _get(sub, "teacher_epochs", p, default=base.teacher_epochs),
                f"{p}.teacher_epochs", integer=True,
            ),
            teacher_lr=_num(_get(sub, "teacher_lr", p, default=base.teacher_lr), f"{p}.teacher_lr"),
            teacher_batch_size=_num(
                _get(sub, "teacher_batch_size", p, default=base.teacher_batch_size),
                f"{p}.teacher_batch_size", integer=True,
            ),
            alpha=_num(_get(sub, "alpha", p, default=base.alpha), f"{p}.alpha"),
        )
        return KdkDefense(kdk=cfg)
    if kind == "noisy":
        _check_keys(sub, {"scale"}, p)
        return NoisyDefense(scale=_num(_get(sub, "scale", p, default=1e-3), f"{p}.scale"))
    if kind == "compress":
        _check_keys(sub, {"rate"}, p)
        return CompressDefense(rate=_num(_get(sub, "rate", p, default=0.5), f"{p}.rate"))
    if kind == "ppdl":
        _check_keys(sub, {"theta_u", "tau_threshold", "noise_sigma"}, p)
        return PpdlDefense(
            theta_u=_num(_get(sub, "theta_u", p, default=0.5), f"{p}.theta_u"),
            tau_threshold=_num(_get(sub, "tau_threshold", p, default=0.0), f"{p}.tau_threshold"),
            noise_sigma=_num(_get(sub, "noise_sigma", p, default=0.0), f"{p}.noise_sigma"),
        )
    _check_keys(sub, {"n_intervals", "calibration"}, p)
    return DiscreteSgdDefense(
        n_intervals=_num(_get(sub, "n_intervals", p, default=12), f"{p}.n_intervals", integer=True),
        calibration=_str(
            _get(sub, "calibration", p, default="first_epoch"),
            f"{p}.calibration", ("first_epoch", "running"),
        ),
    )


def _parse_completion(d, path: str) -> CompletionParams:
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object")
    base = CompletionParams()
    allowed = {
        "head_warm_epochs", "head_learning_rate", "epochs", "learning_rate", "pseudo_rounds",
        "pseudo_epochs", "confidence", "batch_size", "pseudo_batch_size",
    }
    _check_keys(d, allowed, path)
    ints = {"head_warm_epochs", "epochs", "pseudo_rounds", "pseudo_epochs", "batch_size",
            "pseudo_batch_size"}
    kwargs = {}
    for name in allowed:
        if name in d:
            kwargs[name] = _num(d[name], f"{path}.{name}", integer=name in ints)
    params = replace(base, **kwargs)
    params.validate()
    return params


def _parse_attack(d, path: str) -> AttackSpec:
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object")
    kind = _str(_get(d, "kind", path, required=True), f"{path}.kind", ATTACK_KINDS)
    allowed = {"kind", "adversary", "aux_fraction", "aux_seed", "completion", "gamma", "r_max",
               "epoch"}
    _check_keys(d, allowed, path)
    spec = AttackSpec(
        kind=kind,
        adversary=_num(_get(d, "adversary", path, default=1), f"{path}.adversary", integer=True),
        aux_fraction=_num(_get(d, "aux_fraction", path, default=0.01), f"{path}.aux_fraction"),
        completion=_parse_completion(_get(d, "completion", path, default={}), f"{path}.completion"),
        gamma=_num(_get(d, "gamma", path, default=2.0), f"{path}.gamma"),
        r_max=_num(_get(d, "r_max", path, default=8.0), f"{path}.r_max"),
        epoch=_num(_get(d, "epoch", path, default=0), f"{path}.epoch", integer=True),
    )
    if (aux_seed := _get(d, "aux_seed", path)) is not None:
        spec.aux_seed = _num(aux_seed, f"{path}.aux_seed", integer=True)
    if spec.adversary < 1:
        raise ConfigError(f"{path}.adversary", "the adversary is a passive party (index >= 1)")
    if not 0 < spec.aux_fraction < 1:
        raise ConfigError(f"{path}.aux_fraction", "must lie in (0, 1)")
    if spec.gamma < 1 or spec.r_max < 1:
        raise ConfigError(f"{path}.gamma", "gamma and r_max must be at least 1")
    if spec.epoch < 0:
        raise ConfigError(f"{path}.epoch", "must be non-negative")
    return spec


def config_from_dict(d: dict) -> ExperimentConfig:
    """Parse and validate a config document; errors name the offending field."""
    if not isinstance(d, dict):
        raise ConfigError("", "config must be a JSON object")
    allowed = {"data", "federation", "defense", "attacks", "seeds", "metrics", "output_dir",
               "save_transcripts"}
    _check_keys(d, allowed, "")
    data = _parse_data(_get(d, "data", "", default={}), "data")
    federation = _parse_federation(_get(d, "federation", "", default={}), "federation")
    defense = _parse_defense(_get(d, "defense", "", default={}), "defense")
    raw_attacks = _get(d, "attacks", "", default=[])
    if not isinstance(raw_attacks, list):
        raise ConfigError("attacks", "expected a list")
    attacks = [_parse_attack(a, f"attacks[{i}]") for i, a in enumerate(raw_attacks)]
    seeds = _int_list(_get(d, "seeds", "", default=[0]), "seeds")
    if not seeds:
        raise ConfigError("seeds", "at least one seed is required")
    metrics = _get(d, "metrics", "", default={})
    if not isinstance(metrics, dict):
        raise ConfigError("metrics", "expected an object")
    _check_keys(metrics, {"top_k"}, "metrics")
    top_k = _num(_get(metrics, "top_k", "metrics", default=5), "metrics.top_k", integer=True)
    if top_k < 1:
        raise ConfigError("metrics.top_k", "must be at least 1")
    output_dir = _get(d, "output_dir", "")
    if output_dir is not None:
        output_dir = _str(output_dir, "output_dir")
    cfg = ExperimentConfig(
        data=data,
        federation=federation,
        defense=defense,
        attacks=attacks,
        seeds=seeds,
        top_k=top_k,
        output_dir=output_dir,
        save_transcripts=_bool(_get(d, "save_transcripts", "", default=False), "save_transcripts"),
    )
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: ExperimentConfig) -> None:
    fs = cfg.federation
    if fs.epochs < 1:
        raise ConfigError("federation.epochs", "must be at least 1")
    if fs.batch_size < 1:
        raise ConfigError("federation.batch_size", "must be at least 1")
    if fs.learning_rate <= 0:
        raise ConfigError("federation.learning_rate", "must be positive")
    for i, atk in enumerate(cfg.attacks):
        if atk.kind == "direct":
            if fs.mode != "no_split":
                raise ConfigError(
                    f"attacks[{i}].kind",
                    "direct attack reads per-class gradient rows; it requires mode=no_split",
                )
            if atk.epoch >= fs.epochs:
                raise ConfigError(
                    f"attacks[{i}].epoch", f"epoch {atk.epoch} never runs with epochs={fs.epochs}"
                )
    if isinstance(cfg.data, SyntheticSpec):
        class_count = cfg.data.classes
        party_count = len(cfg.data.feature_dims)
        validate_defense(cfg.defense, class_count)
        if cfg.top_k > class_count:
            raise ConfigError("metrics.top_k", f"cannot exceed {class_count} classes")
        for i, atk in enumerate(cfg.attacks):
            if atk.adversary >= party_count:
                raise ConfigError(
                    f"attacks[{i}].adversary", f"no party {atk.adversary} among {party_count}"
                )


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON: {exc}") from exc
    return config_from_dict(raw)


# ---------------------------------------------------------------------------
# canonical serialization and hashing


def config_to_dict(cfg: ExperimentConfig) -> dict:
    data: dict = {"kind": cfg.data.kind}
    if isinstance(cfg.data, SyntheticSpec):
        d = cfg.data
        data.update(
            classes=d.classes, samples=d.samples, test_samples=d.test_samples,
            feature_dims=list(d.feature_dims), cluster_spread=d.cluster_spread, seed=d.seed,
            signal_scales=None if d.signal_scales is None else list(d.signal_scales),
            modes_per_class=d.modes_per_class, shared_latent=d.shared_latent,
            view_noise=list(d.view_noise) if isinstance(d.view_noise, list) else d.view_noise,
            active_warp=d.active_warp,
        )
    else:
        c = cfg.data
        data.update(
            path=c.path, label_column=c.label_column,
            party_columns=[list(cols) for cols in c.party_columns],
            test_path=c.test_path, seed=c.seed,
        )
    fs = cfg.federation
    defense: dict = {"kind": cfg.defense.kind}
    if isinstance(cfg.defense, KdkDefense):
        k = cfg.defense.kdk
        defense["kdk"] = {
            "k": k.k, "epsilon": k.epsilon, "tau": k.tau,
            "teacher_hidden": list(k.teacher_hidden), "teacher_epochs": k.teacher_epochs,
            "teacher_lr": k.teacher_lr, "teacher_batch_size": k.teacher_batch_size,
            "alpha": k.alpha,
        }
    elif isinstance(cfg.defense, NoisyDefense):
        defense["noisy"] = {"scale": cfg.defense.scale}
    elif isinstance(cfg.defense, CompressDefense):
        defense["compress"] = {"rate": cfg.defense.rate}
    elif isinstance(cfg.defense, PpdlDefense):
        defense["ppdl"] = {
            "theta_u": cfg.defense.theta_u, "tau_threshold": cfg.defense.tau_threshold,
            "noise_sigma": cfg.defense.noise_sigma,
        }
    elif isinstance(cfg.defense, DiscreteSgdDefense):
        defense["discrete_sgd"] = {
            "n_intervals": cfg.defense.n_intervals, "calibration": cfg.defense.calibration,
        }
    attacks = []
    for atk in cfg.attacks:
        c = atk.completion
        attacks.append({
            "kind": atk.kind, "adversary": atk.adversary, "aux_fraction": atk.aux_fraction,
            "aux_seed": atk.aux_seed,
            "completion": {
                "head_warm_epochs": c.head_warm_epochs, "head_learning_rate": c.head_learning_rate,
                "epochs": c.epochs, "learning_rate": c.learning_rate,
                "pseudo_rounds": c.pseudo_rounds, "pseudo_epochs": c.pseudo_epochs,
                "confidence": c.confidence, "batch_size": c.batch_size,
                "pseudo_batch_size": c.pseudo_batch_size,
            },
            "gamma": atk.gamma, "r_max": atk.r_max, "epoch": atk.epoch,
        })
    return {
        "data": data,
        "federation": {
            "mode": fs.mode, "bottom_hidden": list(fs.bottom_hidden),
            "embedding_dim": fs.embedding_dim, "embedding_activation": fs.embedding_activation,
            "top_hidden": list(fs.top_hidden), "optimizer": fs.optimizer,
            "learning_rate": fs.learning_rate, "batch_size": fs.batch_size, "epochs": fs.epochs,
            "defend_active_packet": fs.defend_active_packet,
        },
        "defense": defense,
        "attacks": attacks,
        "seeds": list(cfg.seeds),
        "metrics": {"top_k": cfg.top_k},
        "output_dir": cfg.output_dir,
        "save_transcripts": cfg.save_transcripts,
    }


def canonical_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_json(config_to_dict(cfg)).encode()).hexdigest()


def set_by_path(document: dict, dotted: str, value) -> None:
    """Set ``document["a"]["b"]...`` from ``"a.b..."``; string values are
    JSON-decoded when possible so numbers and lists type-check downstream."""
    if not dotted:
        raise ConfigError("axis", "empty parameter path")
    keys = dotted.split(".")
    node = document
    for i, key in enumerate(keys[:-1]):
        here = ".".join(keys[: i + 1])
        if isinstance(node, list):
            if not key.isdigit() or int(key) >= len(node):
                raise ConfigError(here, "no such list element")
            node = node[int(key)]
        elif isinstance(node, dict):
            if key not in node:
                node[key] = {}
            node = node[key]
        else:
            raise ConfigError(here, "path descends into a scalar")
    leaf = keys[-1]
    if isinstance(value, str):
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            pass  # keep the raw string (mode names, activation names, ...)
    if isinstance(node, list):
        if not leaf.isdigit() or int(leaf) >= len(node):
            raise ConfigError(dotted, "no such list element")
        node[int(leaf)] = value
    elif isinstance(node, dict):
        node[leaf] = value
    else:
        raise ConfigError(dotted, "path descends into a scalar")


# ---------------------------------------------------------------------------
# execution


def build_dataset(spec: SyntheticSpec | CsvSpec) -> tuple[VerticalDataset, VerticalDataset | None]:
    if isinstance(spec, SyntheticSpec):
        return generate_synthetic(
            spec.classes,
            spec.samples,
            list(spec.feature_dims),
            spec.cluster_spread,
            spec.seed,
            test_samples=spec.test_samples,
            signal_scales=spec.signal_scales,
            modes_per_class=spec.modes_per_class,
            shared_latent=spec.shared_latent,
            view_noise=spec.view_noise,
            active_warp=spec.active_warp,
        )
    return load_csv(spec.path, spec.label_column, spec.party_columns, test_path=spec.test_path)


def _label_pipeline(defense: DefenseConfig, train_ds: VerticalDataset, seed: int):
    """Training targets + packet-level defense for one seed.

    The anonymized-soft-label defense acts through the targets (packets pass
    untouched); every other defense transforms packets against hard labels.
    """
    if isinstance(defense, KdkDefense):
        dists, teacher = kdk_label_provider(
            defense.kdk, train_ds.party_features[0], train_ds.labels, train_ds.class_count,
            seed=seed,
        )
        return dists, teacher, "kdk", NoDefense()
    return one_hot_labels(train_ds.labels, train_ds.class_count), None, "hard", defense


def _make_federation(cfg: ExperimentConfig, train_ds, dists, provider, packet_defense, seed):
    fs = cfg.federation
    return make_federation(
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
        defense=packet_defense,
        defend_active_packet=fs.defend_active_packet,
        label_provider=provider,
        seed=seed,
    )


def _model_accuracy(fed: FederationState, train_ds, test_ds, top_k) -> dict[str, tuple[float, float]]:
    acc = {"train": evaluate(fed, train_ds, top_k)}
    if test_ds is not None:
        acc["test"] = evaluate(fed, test_ds, top_k)
    return acc


def _mount_attack(
    spec: AttackSpec,
    cfg: ExperimentConfig,
    fed: FederationState,
    transcripts: list[RoundTranscript],
    train_ds: VerticalDataset,
    test_ds: VerticalDataset | None,
    dists,
    provider: str,
    packet_defense,
    seed: int,
) -> tuple[list[AttackReport], dict[str, tuple[float, float]]]:
    """Reports plus the accuracy of the federation the attack actually saw."""
    honest_acc = _model_accuracy(fed, train_ds, test_ds, cfg.top_k)
    if spec.kind == "direct":
        adv = adversary_view(fed, transcripts, train_ds, test_ds, spec.adversary)
        report = direct_attack(adv, truth_train=train_ds.labels, epoch=spec.epoch, top_k=cfg.top_k)
        return [report], honest_acc
    aux_seed = spec.aux_seed if spec.aux_seed is not None else cfg.data.seed
    aux = sample_auxiliary(train_ds, spec.aux_fraction, seed=aux_seed)
    if spec.kind == "passive":
        adv = adversary_view(fed, transcripts, train_ds, test_ds, spec.adversary)
        _, reports = passive_model_completion(
            adv,
            aux,
            params=replace(spec.completion),
            truth_train=train_ds.labels,
            truth_test=None if test_ds is None else test_ds.labels,
            seed=seed,
            top_k=cfg.top_k,
        )
        return reports, honest_acc
    # active: the adversary re-trains a fresh federation with its optimizer swapped
    fresh = _make_federation(cfg, train_ds, dists, provider, packet_defense, seed)
    _, reports, _ = active_attack(
        fresh,
        train_ds,
        cfg.federation.epochs,
        spec.adversary,
        gamma=spec.gamma,
        r_max=spec.r_max,
        test=test_ds,
        aux=aux,
        truth_train=train_ds.labels,
        truth_test=None if test_ds is None else test_ds.labels,
        params=replace(spec.completion),
        seed=seed,
        top_k=cfg.top_k,
    )
    return reports, _model_accuracy(fresh, train_ds, test_ds, cfg.top_k)


def _aggregate(rows: list[AttackRow], model_rows: list[ModelRow]) -> dict:
    def stats(values: list[float]) -> dict:
        return {
            "median": float(np.median(values)),
            "min": float(min(values)),
            "max": float(max(values)),
        }

    agg: dict = {"model": {}, "attacks": {}}
    for split in SPLITS:
        top1 = [r.top1 for r in model_rows if r.split == split]
        if top1:
            agg["model"][split] = {
                "top1": stats(top1),
                "topk": stats([r.topk for r in model_rows if r.split == split]),
            }
    for kind in dict.fromkeys(r.attack for r in rows):
        agg["attacks"][kind] = {}
        for split in SPLITS:
            asr1 = [r.asr_top1 for r in rows if r.attack == kind and r.split == split]
            if asr1:
                agg["attacks"][kind][split] = {
                    "asr_top1": stats(asr1),
                    "asr_topk": stats(
                        [r.asr_topk for r in rows if r.attack == kind and r.split == split]
                    ),
                }
    return agg


def run(cfg: ExperimentConfig, out_dir: str | None = None) -> MetricsReport:
    """Execute one experiment: per seed, build -> train -> evaluate -> attack.

    Deterministic for a fixed config.  A mid-run failure stops the seed loop
    and flags the (partial) report rather than discarding finished rows.
    Writes report.json / results.csv / plots when an output directory is set.
    """
    started = time.perf_counter()
    out_dir = out_dir if out_dir is not None else cfg.output_dir
    report = MetricsReport(config_hash=config_hash(cfg), config=config_to_dict(cfg))
    try:
        train_ds, test_ds = build_dataset(cfg.data)
        validate_defense(cfg.defense, train_ds.class_count)
        for seed in cfg.seeds:
            dists, teacher, provider, packet_defense = _label_pipeline(cfg.defense, train_ds, seed)
            if teacher is not None:
                report.teacher_train_top1[seed] = teacher.train_top1
            fed = _make_federation(cfg, train_ds, dists, provider, packet_defense, seed)
            sink = None
            if cfg.save_transcripts and out_dir is not None:
                os.makedirs(out_dir, exist_ok=True)
                sink = TranscriptSink(os.path.join(out_dir, f"transcripts_seed{seed}.jsonl"))
            try:
                transcripts = train(fed, train_ds, cfg.federation.epochs, sink=sink)
            finally:
                if sink is not None:
                    sink.close()
            for split, (top1, topk) in _model_accuracy(fed, train_ds, test_ds, cfg.top_k).items():
                report.model_rows.append(ModelRow(seed, split, top1, topk))
            for spec in cfg.attacks:
                reports, seen_acc = _mount_attack(
                    spec, cfg, fed, transcripts, train_ds, test_ds, dists, provider,
                    packet_defense, seed,
                )
                for rep in reports:
                    m1, mk = seen_acc[rep.split]
                    report.rows.append(
                        AttackRow(seed, spec.kind, rep.split, m1, mk, rep.top1_asr, rep.topk_asr)
                    )
    except Exception as exc:  # partial results are still worth persisting
        report.incomplete = True
        report.error = f"{type(exc).__name__}: {exc}"
    report.aggregates = _aggregate(report.rows, report.model_rows)
    report.wall_clock_s = time.perf_counter() - started
    if out_dir is not None:
        emit_report(report, out_dir)
    return report


def sweep(
    cfg: ExperimentConfig, axis: str, values: list, out_dir: str | None = None
) -> tuple[list[MetricsReport], list[dict]]:
    """One run per value of ``axis`` (a dotted config path) plus a trend table.

    Trend columns: the axis value, median model top-1 (test split when
    available), and one ``asr_<kind>`` column per attack (train-split median).
    """
    if not values:
        raise ConfigError("values", "sweep needs at least one value")
    base = config_to_dict(cfg)
    probe = copy.deepcopy(base)
    set_by_path(probe, axis, values[0])
    current = probe
    for key in axis.split("."):
        current = current[int(key)] if isinstance(current, list) else current.get(key)
    if isinstance(current, (dict, list)):
        raise ConfigError(axis, "axis must name a scalar config field")
    out_dir = out_dir if out_dir is not None else cfg.output_dir
    reports, trend = [], []
    for i, value in enumerate(values):
        doc = copy.deepcopy(base)
        set_by_path(doc, axis, value)
        doc["output_dir"] = None  # sub-run artifacts are placed by the sweep
        sub = config_from_dict(doc)
        sub_dir = None
        if out_dir is not None:
            sub_dir = os.path.join(out_dir, "runs", f"{i:02d}_{_slug(value)}")
        rep = run(sub, out_dir=sub_dir)
        reports.append(rep)
        row: dict = {"axis": axis, "value": value}
        model = rep.aggregates.get("model", {})
        headline = model.get("test") or model.get("train")
        row["model_top1"] = None if headline is None else headline["top1"]["median"]
        row["model_topk"] = None if headline is None else headline["topk"]["median"]
        for spec in sub.attacks:
            per_split = rep.aggregates.get("attacks", {}).get(spec.kind, {})
            source = per_split.get("train") or per_split.get("test")
            row[f"asr_{spec.kind}"] = None if source is None else source["asr_top1"]["median"]
        trend.append(row)
    if out_dir is not None:
        _emit_trend(trend, out_dir, axis)
    return reports, trend


# ---------------------------------------------------------------------------
# artifact emission


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(report: MetricsReport, out_dir, formats=("json", "csv", "svg_plot")) -> None:
    """Write report.json, results.csv and plots/report.svg under ``out_dir``.

    results.csv columns are fixed (see CSV_COLUMNS): one row per attack
    report, seed-major in config order; model columns repeat the accuracy of
    the federation that attack observed on the row's split.  Wall-clock time
    appears only in report.json, keeping the CSV byte-stable across re-runs.
    """
    os.makedirs(out_dir, exist_ok=True)
    if "json" in formats:
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            fh.write(canonical_json(report.payload()) + "\n")
    if "csv" in formats:
        with open(os.path.join(out_dir, "results.csv"), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for r in report.rows:
                writer.writerow([
                    report.config_hash, r.seed, r.attack, r.split,
                    _fmt(r.model_top1), _fmt(r.model_topk), _fmt(r.asr_top1), _fmt(r.asr_topk),
                ])
    if "svg_plot" in formats:
        series = []
        for split in SPLITS:
            pts = [(r.seed, r.top1) for r in report.model_rows if r.split == split]
            if pts:
                series.append((f"model {split} top1", pts))
        for kind in dict.fromkeys(r.attack for r in report.rows):
            for split in SPLITS:
                pts = [
                    (r.seed, r.asr_top1)
                    for r in report.rows
                    if r.attack == kind and r.split == split
                ]
                if pts:
                    series.append((f"{kind} {split} asr", pts))
        if series:
            _svg_chart(
                series,
                os.path.join(out_dir, "plots", "report.svg"),
                title="per-seed metrics",
                x_label="seed",
                y_label="accuracy / asr",
            )


def _slug(value) -> str:
    text = str(value)
    return "".join(c if c.isalnum() or c in ".-" else "_" for c in text)[:40]


def _emit_trend(trend: list[dict], out_dir, axis: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    columns = list(trend[0].keys())
    with open(os.path.join(out_dir, "trend.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in trend:
            writer.writerow([_fmt(row.get(c)) for c in columns])
    xs = [row["value"] for row in trend]
    numeric_x = all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in xs)
    positions = xs if numeric_x else list(range(len(xs)))
    series = []
    for column in columns[2:]:
        pts = [
            (positions[i], row[column]) for i, row in enumerate(trend) if row[column] is not None
        ]
        if pts:
            series.append((column, pts))
    if series:
        _svg_chart(
            series,
            os.path.join(out_dir, "plots", f"sweep_{_slug(axis)}.svg"),
            title=f"sweep over {axis}",
            x_label=axis if numeric_x else f"{axis} (index)",
            y_label="accuracy / asr",
        )


def _svg_chart(series, path, *, title: str, x_label: str, y_label: str) -> None:
    """Minimal SVG line chart: axes, ticks, one polyline per series, legend."""
    os.makedirs(os.path.dirname(path), exist_ok=True)
    width, height = 720, 420
    left, right, top, bottom = 70, 210, 46, 56
    plot_w, plot_h = width - left - right, height - top - bottom
    xs = [x for _, pts in series for x, _ in pts]
    ys = [y for _, pts in series for _, y in pts]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(0.0, min(ys)), max(1.0, max(ys))
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def px(x: float) -> float:
        return left + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return top + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    palette = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}" '
        f'font-family="sans-serif" font-size="12">',
        f'<text x="{left}" y="24" font-size="14">{escape(title)}</text>',
        f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#333"/>',
        f'<text x="{left + plot_w / 2:.1f}" y="{height - 14}" text-anchor="middle">'
        f"{escape(x_label)}</text>",
        f'<text x="20" y="{top + plot_h / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 20 {top + plot_h / 2:.1f})">{escape(y_label)}</text>',
    ]
    for tick in np.linspace(x_lo, x_hi, 5):
        parts.append(
            f'<line x1="{px(tick):.1f}" y1="{top + plot_h}" x2="{px(tick):.1f}" '
            f'y2="{top + plot_h + 5}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{px(tick):.1f}" y="{top + plot_h + 20}" text-anchor="middle">'
            f"{tick:.4g}</text>"
        )
    for tick in np.linspace(y_lo, y_hi, 5):
        parts.append(
            f'<line x1="{left - 5}" y1="{py(tick):.1f}" x2="{left}" y2="{py(tick):.1f}" '
            'stroke="#333"/>'
        )
        parts.append(
            f'<text x="{left - 9}" y="{py(tick) + 4:.1f}" text-anchor="end">{tick:.4g}</text>'
        )
    for i, (name, pts) in enumerate(series):
        color = palette[i % len(palette)]
        points = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in sorted(pts))
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = top + 16 * i
        parts.append(
            f'<line x1="{left + plot_w + 10}" y1="{ly + 8}" x2="{left + plot_w + 30}" '
            f'y2="{ly + 8}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{left + plot_w + 35}" y="{ly + 12}">{escape(name)}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# attacks on saved transcripts: the adversary replays its own local updates


def replay_adversary(
    cfg: ExperimentConfig,
    train_ds: VerticalDataset,
    test_ds: VerticalDataset | None,
    transcripts: list[RoundTranscript],
    party_index: int,
    seed: int,
) -> AdversaryState:
    """Rebuild a passive party's bottom model from a saved transcript.

    The bottom's trajectory is a deterministic function of its init seed,
    its own features and the returned packets, so the adversary's state is
    reconstructible without re-running the federation.
    """
    fs = cfg.federation
    if not 1 <= party_index < train_ds.party_count:
        raise ConfigError("attacks.adversary", f"no passive party {party_index}")
    out_dim = fs.embedding_dim if fs.mode == "split" else train_ds.class_count
    feats = train_ds.party_features[party_index]
    net = glorot_net(
        [feats.shape[1], *fs.bottom_hidden, out_dim],
        derive_rng(seed, INIT, party_index),
        output_activation=fs.embedding_activation if fs.mode == "split" else "identity",
    )
    opt = make_optimizer(fs.optimizer, fs.learning_rate)
    for t in transcripts:
        record = forward(net, feats[t.indices])
        grads, _ = backprop(net, record, t.packets[party_index])
        optimizer_step(opt, net.parameters(), grads)
    return AdversaryState(
        party_index=party_index,
        bottom=net,
        train_features=feats,
        test_features=None if test_ds is None else test_ds.party_features[party_index],
        packets=[(t.epoch, t.batch, t.indices, t.packets[party_index]) for t in transcripts],
        mode=fs.mode,
        class_count=train_ds.class_count,
    )


def attack_from_transcripts(
    cfg: ExperimentConfig, transcripts_path, seed: int, out_dir: str | None = None
) -> list[AttackReport]:
    """Mount the config's passive/direct attacks on a saved transcript file."""
    transcripts = read_transcripts(transcripts_path)
    train_ds, test_ds = build_dataset(cfg.data)
    reports: list[AttackReport] = []
    for i, spec in enumerate(cfg.attacks):
        if spec.kind == "active":
            raise ConfigError(
                f"attacks[{i}].kind",
                "active attacks steer live training; they cannot replay a saved transcript",
            )
        adv = replay_adversary(cfg, train_ds, test_ds, transcripts, spec.adversary, seed)
        if spec.kind == "direct":
            reports.append(
                direct_attack(adv, truth_train=train_ds.labels, epoch=spec.epoch, top_k=cfg.top_k)
            )
            continue
        aux_seed = spec.aux_seed if spec.aux_seed is not None else cfg.data.seed
        aux = sample_auxiliary(train_ds, spec.aux_fraction, seed=aux_seed)
        _, reps = passive_model_completion(
            adv,
            aux,
            params=replace(spec.completion),
            truth_train=train_ds.labels,
            truth_test=None if test_ds is None else test_ds.labels,
            seed=seed,
            top_k=cfg.top_k,
        )
        reports.extend(reps)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        payload = [
            {
                "kind": r.kind, "split": r.split, "top1_asr": r.top1_asr,
                "topk_asr": r.topk_asr, "config": r.config,
                "predicted": r.predicted.tolist(),
            }
            for r in reports
        ]
        with open(os.path.join(out_dir, "attack_report.json"), "w") as fh:
            fh.write(canonical_json({"seed": seed, "reports": payload}) + "\n")
    return reports
