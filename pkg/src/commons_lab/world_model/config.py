from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from commons_lab.errors import ConfigError


@dataclass
class TrainConfig:
    deter_size: int = 64  # D_h
    groups: int = 8  # G
    classes: int = 8  # K
    embed_size: int = 128
    hidden_size: int = 128
    seq_len: int = 16  # L
    batch_size: int = 8  # B
    horizon: int = 10  # H
    discount: float = 0.95
    lambda_: float = 0.95
    kl_balance: float = 0.8  # alpha
    kl_scale: float = 1.0  # beta
    entropy_scale: float = 1e-3  # eta
    model_lr: float = 3e-4
    actor_lr: float = 1e-4
    critic_lr: float = 1e-4
    train_steps_per_episode: int = 50
    replay_capacity: int = 100_000
    target_update_every: int = 100
    grad_clip: float = 100.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v <= 0 and f.name != "kl_balance":
                raise ConfigError(f"world-model config {f.name} must be positive, got {v}")
        if not 0.0 <= self.kl_balance <= 1.0:
            raise ConfigError("kl_balance must lie in [0, 1]")
        for name in ("discount", "lambda_"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1)")

    @property
    def latent_size(self) -> int:
        return self.groups * self.classes

    @property
    def feature_size(self) -> int:
        return self.deter_size + self.latent_size

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown world-model config keys: {sorted(unknown)}")
        return cls(**data)
