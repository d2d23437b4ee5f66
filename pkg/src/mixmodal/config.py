"""Training configuration with paper-scale defaults and a desk-scale profile.

The stock defaults mirror the reference setup (12 encoder layers, hidden
size 768, batch 64, learning rate 1e-4, 15% masking, 150-token reports);
`TrainConfig.desk()` shrinks everything to run a full pretrain/finetune
cycle on a laptop CPU in seconds.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .corpus import ScenarioConfig
from .errors import ConfigurationError

MODES = ("unit", "uwox", "img_only", "txt_only")
FEATURE_SIDES = ("img", "txt", "img+txt")


@dataclass
class TrainConfig:
    """Everything a training run needs, mirrored 1:1 by the JSON config file."""

    mode: str = "uwox"
    image_size: int = 256
    block_size: int = 16
    multiscale: bool = True
    n_layers: int = 12
    hidden: int = 768
    heads: int = 12
    v_max: int = 150
    num_classes: int = 4
    mask_rate: float = 0.15
    batch_size: int = 64
    learning_rate: float = 1e-4
    epochs: int = 1
    steps: int | None = None  # overrides epochs when set
    seed: int = 0
    code_bits: int = 64
    cauchy_gamma: float = 32.0
    quant_weight: float = 0.1
    cls_feature: str = "img"  # which fused feature feeds classification heads
    hash_query: str = "img"  # img | txt | img+txt
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)

    def __post_init__(self) -> None:
        if isinstance(self.scenario, dict):
            self.scenario = ScenarioConfig(**self.scenario)
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.hidden % self.heads:
            raise ConfigurationError("hidden size must be divisible by head count")
        if not 0 < self.mask_rate < 1:
            raise ConfigurationError("mask_rate must be in (0, 1)")
        if self.cls_feature not in ("img", "txt"):
            raise ConfigurationError("cls_feature must be 'img' or 'txt'")
        if self.hash_query not in FEATURE_SIDES:
            raise ConfigurationError(f"hash_query must be one of {FEATURE_SIDES}")
        div = 4 * self.block_size if self.multiscale else self.block_size
        if self.image_size % div:
            raise ConfigurationError(
                f"image_size {self.image_size} not divisible by {div}"
            )

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Small profile for CPU experiments: 32px images, 2-layer width-48 model."""
        base = dict(
            image_size=32,
            block_size=4,
            n_layers=2,
            hidden=48,
            heads=4,
            v_max=24,
            batch_size=16,
            learning_rate=1e-3,
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**payload)

    def with_overrides(self, **overrides) -> "TrainConfig":
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **overrides)


def save_config(cfg: TrainConfig, path: Path | str) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n")


def load_config(path: Path | str) -> TrainConfig:
    return TrainConfig.from_dict(json.loads(Path(path).read_text()))
