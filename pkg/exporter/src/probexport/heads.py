"""Classification heads: a linear softmax layer over frozen-backbone features,
or the full fine-tuned backbone when requested."""

from __future__ import annotations

import numpy as np

from .config import ExportConfig


def _keras():
    from tensorflow import keras

    return keras


def _compile(model, config: ExportConfig):
    keras = _keras()
    model.compile(
        optimizer=keras.optimizers.AdamW(learning_rate=config.learning_rate),
        loss="sparse_categorical_crossentropy",
    )


def _callbacks(config: ExportConfig, has_val: bool):
    keras = _keras()
    if not has_val:
        return []
    return [
        keras.callbacks.ReduceLROnPlateau(
            monitor="val_loss", factor=0.1, patience=5, min_lr=1e-7
        )
    ]


def train_linear_head(
    features: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    config: ExportConfig,
    val_features: np.ndarray | None = None,
    val_labels: np.ndarray | None = None,
):
    """Fresh softmax layer trained briefly on pooled features."""
    keras = _keras()
    head = keras.Sequential(
        [
            keras.layers.Input(shape=(features.shape[1],)),
            keras.layers.Dense(class_count, activation="softmax"),
        ]
    )
    _compile(head, config)
    has_val = val_features is not None and len(val_features) > 0
    head.fit(
        features,
        labels,
        epochs=config.head_epochs,
        batch_size=config.batch_size,
        validation_data=(val_features, val_labels) if has_val else None,
        callbacks=_callbacks(config, has_val),
        shuffle=True,
        verbose=0,
    )
    return head


def build_fine_tune_model(backbone, class_count: int, config: ExportConfig):
    """Backbone + online-augmentation layers + softmax head, all trainable."""
    keras = _keras()
    layers = [keras.layers.Input(shape=backbone.input_shape[1:])]
    if config.online_augment:
        aug = config.online
        layers += [
            keras.layers.RandomRotation(aug.rotation_degrees / 360.0),
            keras.layers.RandomTranslation(aug.shift, aug.shift),
            keras.layers.RandomZoom(aug.zoom),
        ]
    model = keras.Sequential(
        layers + [backbone, keras.layers.Dense(class_count, activation="softmax")]
    )
    backbone.trainable = True
    _compile(model, config)
    return model


def predict_probabilities(model, inputs: np.ndarray, batch_size: int) -> np.ndarray:
    """Float64 simplex rows: renormalized so every row sums to exactly 1."""
    probs = model.predict(inputs, batch_size=batch_size, verbose=0).astype(np.float64)
    return probs / probs.sum(axis=1, keepdims=True)
