"""Probability-table exporter for Inception-family image backbones."""

from .config import BACKBONES, ExportConfig, ExportConfigError, ExportError, OnlineAugmentConfig
from .planfile import FoldPlan, read_fold_plan

__version__ = "0.1.0"


def export_probabilities(config: ExportConfig) -> dict:
    # The TF-backed implementation imports lazily; plan/table utilities stay light.
    from .export import export_probabilities as _run

    return _run(config)
