"""Export configuration and error types."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

BACKBONES = ("inception_v3", "inception_resnet_v2", "xception")

# Input images are always resized to this square before the network sees them.
RESIZE_TARGET = 256


class ExportError(Exception):
    """Base error for the exporter."""


class ExportConfigError(ExportError):
    """Invalid configuration or missing resources."""


@dataclass
class OnlineAugmentConfig:
    """Random zoom/shift/rotation magnitudes; conservative defaults."""

    zoom: float = 0.10          # +- fraction of the side
    shift: float = 0.10         # +- fraction of the side
    rotation_degrees: float = 15.0
    rounds: int = 2             # augmented copies per training image (frozen mode)


@dataclass
class ExportConfig:
    image_root: Path
    plan_path: Path
    out_path: Path
    backbone: str = "inception_v3"
    pretrained: bool = True
    offline_augment: bool = False
    minority_classes: tuple[int, ...] | None = None
    online_augment: bool = False
    online: OnlineAugmentConfig = field(default_factory=OnlineAugmentConfig)
    fine_tune_epochs: int = 0   # 0 = frozen backbone + linear head
    head_epochs: int = 30
    learning_rate: float = 1e-4
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        self.image_root = Path(self.image_root)
        self.plan_path = Path(self.plan_path)
        self.out_path = Path(self.out_path)
        if self.backbone not in BACKBONES:
            raise ExportConfigError(
                f"unknown backbone {self.backbone!r}; choose one of {', '.join(BACKBONES)}"
            )
        if self.fine_tune_epochs < 0 or self.head_epochs < 1:
            raise ExportConfigError("epoch counts must be nonnegative (head >= 1)")
        if self.batch_size < 1 or self.learning_rate <= 0:
            raise ExportConfigError("batch_size must be >= 1 and learning_rate positive")
