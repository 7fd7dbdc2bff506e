"""Inception-family feature extractors built on keras applications."""

from __future__ import annotations

import numpy as np

from .config import RESIZE_TARGET, ExportConfigError


def _keras_modules():
    # Imported lazily: the TF runtime is heavy and unit tests below the
    # backbone layer should not pay for it.
    import tensorflow as tf  # noqa: F401
    from tensorflow import keras

    return keras


def build_backbone(name: str, pretrained: bool):
    """Return (feature extractor with global average pooling, preprocess fn)."""
    keras = _keras_modules()
    apps = keras.applications
    registry = {
        "inception_v3": (apps.InceptionV3, apps.inception_v3.preprocess_input),
        "inception_resnet_v2": (
            apps.InceptionResNetV2,
            apps.inception_resnet_v2.preprocess_input,
        ),
        "xception": (apps.Xception, apps.xception.preprocess_input),
    }
    if name not in registry:
        raise ExportConfigError(f"unknown backbone {name!r}")
    factory, preprocess = registry[name]
    weights = "imagenet" if pretrained else None
    try:
        model = factory(
            weights=weights,
            include_top=False,
            pooling="avg",
            input_shape=(RESIZE_TARGET, RESIZE_TARGET, 3),
        )
    except Exception as exc:  # weight download failure, unsupported arch, ...
        raise ExportConfigError(
            f"backbone {name!r} unavailable ({exc}); pretrained weights need network "
            "access, pass --random-weights for an offline run"
        ) from exc
    return model, preprocess


def extract_features(model, preprocess, arrays: list[np.ndarray], batch_size: int = 8) -> np.ndarray:
    """Pooled backbone features for a list of HxWx3 float arrays (0..255)."""
    if not arrays:
        return np.zeros((0, int(model.output_shape[-1])), dtype=np.float32)
    batch = preprocess(np.stack(arrays).astype(np.float32))
    return model.predict(batch, batch_size=batch_size, verbose=0)
