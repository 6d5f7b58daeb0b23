"""Gradient-packet defenses applied by the server before releasing gradients.

Each transform is a pure function of one packet (plus an RNG or calibration
stats where needed); the DefenseRuntime wraps them with the per-run state the
federation loop needs. The anonymized-label defense lives in labels.py; its
config variant here simply leaves packets untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParameterError, ShapeError, StateError
from .labels import KdkConfig
from .nets import Matrix


@dataclass(frozen=True)
class NoDefense:
    kind: str = "none"


@dataclass(frozen=True)
class KdkDefense:
    kdk: KdkConfig = field(default_factory=KdkConfig)
    kind: str = "kdk"


@dataclass(frozen=True)
class NoisyDefense:
    scale: float = 1e-3
    kind: str = "noisy"


@dataclass(frozen=True)
class CompressDefense:
    rate: float = 0.5
    kind: str = "compress"


@dataclass(frozen=True)
class PpdlDefense:
    theta_u: float = 0.5
    tau_threshold: float = 0.0
    noise_sigma: float = 0.0
    kind: str = "ppdl"


@dataclass(frozen=True)
class DiscreteSgdDefense:
    n_intervals: int = 12
    calibration: str = "first_epoch"  # first_epoch | running
    kind: str = "discrete_sgd"


DefenseConfig = (
    NoDefense | KdkDefense | NoisyDefense | CompressDefense | PpdlDefense | DiscreteSgdDefense
)


def validate_defense(config: DefenseConfig, class_count: int, path: str = "defense") -> None:
    if isinstance(config, KdkDefense):
        try:
            config.kdk.validate(class_count)
        except ParameterError as exc:
            sub = getattr(exc, "parameter", None)
            field = f"{path}.kdk.{sub}" if sub else f"{path}.kdk"
            raise ConfigError(field, str(exc)) from exc
    elif isinstance(config, NoisyDefense):
        if config.scale < 0:
            raise ConfigError(f"{path}.noisy.scale", "must be non-negative")
    elif isinstance(config, CompressDefense):
        if not 0.0 < config.rate <= 1.0:
            raise ConfigError(f"{path}.compress.rate", "must lie in (0, 1]")
    elif isinstance(config, PpdlDefense):
        if not 0.0 < config.theta_u <= 1.0:
            raise ConfigError(f"{path}.ppdl.theta_u", "must lie in (0, 1]")
        if config.tau_threshold < 0:
            raise ConfigError(f"{path}.ppdl.tau_threshold", "must be non-negative")
        if config.noise_sigma < 0:
            raise ConfigError(f"{path}.ppdl.noise_sigma", "must be non-negative")
    elif isinstance(config, DiscreteSgdDefense):
        if config.n_intervals < 1:
            raise ConfigError(f"{path}.discrete_sgd.n_intervals", "must be at least 1")
        if config.calibration not in ("first_epoch", "running"):
            raise ConfigError(f"{path}.discrete_sgd.calibration", "must be first_epoch or running")
    elif not isinstance(config, NoDefense):
        raise ConfigError(path, f"unknown defense {config!r}")


# ---------------------------------------------------------------------------
# pure packet transforms


def noisy(packet: Matrix, scale: float, rng: np.random.Generator) -> Matrix:
    """Add i.i.d. Laplace(0, scale) noise to every entry."""
    if scale < 0:
        raise ParameterError("noise scale must be non-negative")
    g = np.asarray(packet, dtype=float)
    if scale == 0.0:
        return g.copy()
    return g + rng.laplace(0.0, scale, size=g.shape)


def compress(packet: Matrix, rate: float) -> Matrix:
    """Keep only the ceil(rate * n) entries of largest absolute value.

    Ties keep the lower flat index. Everything else becomes zero.
    """
    if not 0.0 < rate <= 1.0:
        raise ParameterError("compression rate must lie in (0, 1]")
    g = np.asarray(packet, dtype=float)
    keep = math.ceil(rate * g.size)
    flat = g.reshape(-1)
    # stable sort on -|g| ranks equal magnitudes by ascending flat index
    winners = np.argsort(-np.abs(flat), kind="stable")[:keep]
    out = np.zeros_like(flat)
    out[winners] = flat[winners]
    return out.reshape(g.shape)


def ppdl(
    packet: Matrix,
    theta_u: float,
    tau_threshold: float,
    noise_sigma: float,
    rng: np.random.Generator,
) -> Matrix:
    """Release a random ceil(theta_u * n) subset of noised entries.

    Each released entry gets Gaussian noise (sigma) and is zeroed when its
    noised magnitude stays below tau_threshold; unreleased entries are zero.
    """
    if not 0.0 < theta_u <= 1.0:
        raise ParameterError("theta_u must lie in (0, 1]")
    if tau_threshold < 0 or noise_sigma < 0:
        raise ParameterError("tau_threshold and noise_sigma must be non-negative")
    g = np.asarray(packet, dtype=float)
    release = math.ceil(theta_u * g.size)
    flat = g.reshape(-1)
    chosen = rng.choice(flat.size, size=release, replace=False)
    values = flat[chosen]
    if noise_sigma > 0:
        values = values + rng.normal(0.0, noise_sigma, size=release)
    values = np.where(np.abs(values) < tau_threshold, 0.0, values)
    out = np.zeros_like(flat)
    out[chosen] = values
    return out.reshape(g.shape)


@dataclass
class GradientStats:
    mean: float = 0.0
    std: float = 0.0
    count: int = 0
    _sum: float = 0.0
    _sumsq: float = 0.0

    def update(self, packet: Matrix) -> None:
        g = np.asarray(packet, dtype=float)
        self.count += g.size
        self._sum += float(g.sum())
        self._sumsq += float((g * g).sum())
        self.mean = self._sum / self.count
        self.std = math.sqrt(max(self._sumsq / self.count - self.mean**2, 0.0))


def calibrate(packets) -> GradientStats:
    """Population mean/std over every entry of an iterable of packets."""
    stats = GradientStats()
    for p in packets:
        stats.update(p)
    if stats.count == 0:
        raise StateError("cannot calibrate on an empty packet stream")
    return stats


def discrete_sgd(packet: Matrix, stats: GradientStats, n_intervals: int) -> Matrix:
    """Clamp to [mean - 2 std, mean + 2 std] and snap to the interval endpoints.

    The range splits into n_intervals equal pieces; values round to the
    nearest of the n_intervals + 1 endpoints, halves away from the lower end.
    """
    if n_intervals < 1:
        raise ParameterError("n_intervals must be at least 1")
    if stats.count == 0:
        raise StateError("discrete_sgd needs calibrated stats")
    g = np.asarray(packet, dtype=float)
    lo = stats.mean - 2.0 * stats.std
    width = 4.0 * stats.std
    if width == 0.0:
        return np.full_like(g, stats.mean)
    step = width / n_intervals
    slot = np.floor((np.clip(g, lo, lo + width) - lo) / step + 0.5)
    return lo + np.clip(slot, 0, n_intervals) * step


# ---------------------------------------------------------------------------
# runtime wrapper used by the training loop


class DefenseRuntime:
    """Holds the RNG and calibration state a defense needs across rounds."""

    def __init__(self, config: DefenseConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.stats = GradientStats()
        self._frozen: GradientStats | None = None

    def apply(self, packet: Matrix, epoch: int) -> Matrix:
        cfg = self.config
        if isinstance(cfg, (NoDefense, KdkDefense)):
            return packet
        if isinstance(cfg, NoisyDefense):
            return noisy(packet, cfg.scale, self.rng)
        if isinstance(cfg, CompressDefense):
            return compress(packet, cfg.rate)
        if isinstance(cfg, PpdlDefense):
            return ppdl(packet, cfg.theta_u, cfg.tau_threshold, cfg.noise_sigma, self.rng)
        if isinstance(cfg, DiscreteSgdDefense):
            if cfg.calibration == "running":
                self.stats.update(packet)
                return discrete_sgd(packet, self.stats, cfg.n_intervals)
            if epoch == 0:
                # observation epoch: collect stats, release the raw packet
                self.stats.update(packet)
                return packet
            if self._frozen is None:
                if self.stats.count == 0:
                    raise StateError("discrete_sgd saw no first-epoch packets to calibrate on")
                self._frozen = self.stats
            return discrete_sgd(packet, self._frozen, cfg.n_intervals)
        raise ParameterError(f"unknown defense config {cfg!r}")
