"""Run configuration: strict JSON loading, defaults, and content hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field

from .errors import ConfigurationError

PHASE1_VARIANTS = ("ours", "noinner", "noclear", "noisy")
PHASE2_VARIANTS = ("ours", "both", "mask", "oracle")


@dataclass
class TerrainSection:
    kinds: list[str] = field(default_factory=lambda: ["hurdle"])
    levels: int = 3
    tile_length: float = 4.0
    tile_width: float = 4.0
    spacer_length: float = 1.0
    max_difficulty: float = 1.0
    cell_size: float = 0.025
    seed: int = 0


@dataclass
class EpisodeSection:
    duration: float = 10.0
    v_cmd_range: list[float] = field(default_factory=lambda: [0.6, 1.2])
    w_prob: float = 0.1

    def validate(self):
        if self.duration <= 0:
            raise ConfigurationError("episode duration must be positive")
        if not 0.0 <= self.w_prob <= 1.0:
            raise ConfigurationError("w_prob must lie in [0, 1]")
        if len(self.v_cmd_range) != 2 or self.v_cmd_range[0] > self.v_cmd_range[1]:
            raise ConfigurationError("v_cmd_range must be [min, max]")
        if self.v_cmd_range[0] < 0:
            raise ConfigurationError("v_cmd must be non-negative")


@dataclass
class RewardSection:
    w_tracking: float = 1.5
    w_clearance: float = 1.0
    w_stylized: float = 1.0
    w_rate: float = 0.005
    w_mag: float = 0.01
    w_vz: float = 0.001
    waypoint_radius: float = 0.3


@dataclass
class SensingSection:
    noise_sigma_z: float = 0.05
    noise_drift_sigma: float = 0.1
    depth_latency: float = 0.08
    proprio_latency: float = 0.016
    capture_rate_hz: float = 10.0
    capture_jitter_hz: float = 2.0
    crop_left: int = 16
    max_staleness: float = 0.3
    camera_offset: list[float] = field(default_factory=lambda: [0.25, 0.0, 0.05])
    camera_pitch: float = 0.35


@dataclass
class DomainRandSection:
    friction_range: list[float] = field(default_factory=lambda: [0.7, 1.2])
    mass_scale_range: list[float] = field(default_factory=lambda: [0.9, 1.1])
    push_magnitude_range: list[float] = field(default_factory=lambda: [0.0, 0.4])
    push_interval_steps: int = 150


@dataclass
class LearningSection:
    iters: int = 500
    horizon: int = 64
    workers: int = 64
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    epochs: int = 4
    minibatches: int = 4
    lr: float = 3e-4
    entropy_coef: float = 0.003
    value_coef: float = 0.5
    max_grad_norm: float = 1.0
    lambda_roa: float = 0.1
    actor_hidden: list[int] = field(default_factory=lambda: [128, 64])
    critic_hidden: list[int] = field(default_factory=lambda: [128, 64])
    log_std_init: float = -0.7
    proprio_history: int = 20


@dataclass
class DistillSection:
    iters: int = 250
    workers: int = 16
    chunk_steps: int = 100
    lr: float = 1e-3
    w_yaw: float = 1.0
    mts_threshold: float = 0.6
    depth_every: int = 5      # depth backbone runs every 5th policy step (10 Hz)
    gru_hidden: int = 96
    latent_dim: int = 32


@dataclass
class EvalSection:
    robots: int = 256
    duration: float = 30.0


@dataclass
class RunConfig:
    seed: int = 0
    variant: str = "ours"
    terrain: TerrainSection = field(default_factory=TerrainSection)
    episode: EpisodeSection = field(default_factory=EpisodeSection)
    rewards: RewardSection = field(default_factory=RewardSection)
    sensing: SensingSection = field(default_factory=SensingSection)
    domain_rand: DomainRandSection = field(default_factory=DomainRandSection)
    learning: LearningSection = field(default_factory=LearningSection)
    distill: DistillSection = field(default_factory=DistillSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def validate(self):
        self.episode.validate()
        from .terrain import TERRAIN_KINDS
        for k in self.terrain.kinds:
            if k not in TERRAIN_KINDS:
                raise ConfigurationError(f"unknown terrain kind {k!r}")
        if self.terrain.levels < 1:
            raise ConfigurationError("terrain.levels must be >= 1")
        return self


def _coerce(value, hint, path: str):
    origin = typing.get_origin(hint)
    if dataclasses.is_dataclass(hint):
        if not isinstance(value, dict):
            raise ConfigurationError(f"{path}: expected an object")
        return _from_dict(hint, value, path)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigurationError(f"{path}: expected a list")
        (item_t,) = typing.get_args(hint)
        return [_coerce(v, item_t, f"{path}[{i}]") for i, v in enumerate(value)]
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{path}: expected a number")
        return float(value)
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{path}: expected an integer")
        return value
    if hint is str:
        if not isinstance(value, str):
            raise ConfigurationError(f"{path}: expected a string")
        return value
    raise ConfigurationError(f"{path}: unsupported config field type {hint}")


def _from_dict(cls, data: dict, path: str = "config"):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigurationError(f"{path}: unknown keys {sorted(unknown)}")
    kwargs = {k: _coerce(v, hints[k], f"{path}.{k}") for k, v in data.items()}
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    cfg = _from_dict(RunConfig, data)
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path) as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ConfigurationError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    return config_from_dict(data)


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_hash(cfg: RunConfig) -> str:
    """Content hash of the canonicalized document; identifies the run."""
    canon = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def save_config(path, cfg: RunConfig) -> None:
    with open(path, "w") as f:
        json.dump(config_to_dict(cfg), f, indent=2, sort_keys=True)
