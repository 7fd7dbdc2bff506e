"""Export orchestration: fold-disciplined probability rows for one backbone.

Every fold's classifier sees only that fold's training side (plus augmented
copies of it), predicts the fold's held-out images once, and predicts every
test image, so the emitted table matches the engine's out-of-fold and
fold-averaged protocol exactly.
"""

from __future__ import annotations

import logging
from collections import Counter

import numpy as np

from .backbones import build_backbone, extract_features
from .config import ExportConfig, ExportConfigError
from .heads import (
    build_fine_tune_model,
    predict_probabilities,
    train_linear_head,
)
from .images import (
    flip_copies,
    load_resized,
    minority_class_indices,
    online_augmented,
    scan_image_folder,
)
from .planfile import read_fold_plan
from .tablefile import write_table_rows

log = logging.getLogger("probexport")


def _usable(ids, skipped):
    return [sid for sid in ids if sid not in skipped]


def export_probabilities(config: ExportConfig) -> dict:
    """Run the export and return a summary of what was written."""
    from tensorflow import keras

    keras.utils.set_random_seed(config.seed)

    entries, class_names = scan_image_folder(config.image_root)
    by_id = {e.sample_id: e for e in entries}
    class_count = len(class_names)

    plan = read_fold_plan(config.plan_path)
    missing = sorted(plan.all_ids() - set(by_id))
    if missing:
        raise ExportConfigError(
            f"fold plan names {len(missing)} ids with no image file, first: {missing[:3]!r}"
        )

    needed = sorted(plan.all_ids())
    arrays: dict[str, np.ndarray] = {}
    skipped: list[str] = []
    for sid in needed:
        arr = load_resized(by_id[sid].path)
        if arr is None:
            skipped.append(sid)
        else:
            arrays[sid] = arr
    labels = {sid: by_id[sid].label for sid in arrays}

    pool_ids = _usable(plan.pool_ids, set(skipped))
    test_ids = _usable(plan.test_ids, set(skipped))
    pool_counts = Counter(labels[sid] for sid in pool_ids)
    minority = (
        minority_class_indices(dict(pool_counts), config.minority_classes)
        if config.offline_augment
        else set()
    )

    if config.fine_tune_epochs > 0:
        rows, aug_summary = _export_fine_tuned(config, plan, arrays, labels, class_count, minority)
    else:
        rows, aug_summary = _export_frozen(config, plan, arrays, labels, class_count, minority)

    row_count = write_table_rows(config.out_path, class_count, rows)
    return {
        "backbone": config.backbone,
        "class_names": class_names,
        "images": len(arrays),
        "skipped": skipped,
        "rows": row_count,
        "pool_size": len(pool_ids),
        "test_size": len(test_ids),
        "fold_count": plan.k,
        "minority_classes": sorted(minority),
        "offline_augmentation": aug_summary,
        "out_path": str(config.out_path),
    }


def _augmented_training_set(
    config: ExportConfig,
    train_ids: list[str],
    labels: dict[str, int],
    minority: set[int],
    base_vectors: dict[str, np.ndarray],
    flip_vectors: dict[str, list[np.ndarray]],
    online_vectors: dict[str, list[np.ndarray]],
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Stack original + offline-flip + online copies for one fold's train side."""
    xs, ys = [], []
    before = Counter()
    after = Counter()
    for sid in train_ids:
        label = labels[sid]
        copies = [base_vectors[sid]]
        if label in minority:
            copies.extend(flip_vectors[sid])
        copies.extend(online_vectors.get(sid, []))
        xs.extend(copies)
        ys.extend([label] * len(copies))
        before[label] += 1
        after[label] += len(copies)
    summary = {
        "train_class_counts": {int(k): int(v) for k, v in sorted(before.items())},
        "train_class_counts_augmented": {int(k): int(v) for k, v in sorted(after.items())},
    }
    return np.stack(xs), np.array(ys), summary


def _export_frozen(config, plan, arrays, labels, class_count, minority):
    """Default mode: one feature pass through the frozen backbone, then a
    fresh linear head per fold."""
    backbone, preprocess = build_backbone(config.backbone, config.pretrained)

    ids = sorted(arrays)
    log.info("extracting %d feature vectors with %s", len(ids), config.backbone)
    feats = extract_features(backbone, preprocess, [arrays[sid] for sid in ids], config.batch_size)
    base_vectors = {sid: feats[i] for i, sid in enumerate(ids)}

    skipped = set()
    pool_ids = _usable(plan.pool_ids, skipped)
    flip_vectors: dict[str, list[np.ndarray]] = {}
    if minority:
        flip_ids = [sid for sid in pool_ids if labels[sid] in minority]
        flat = [copy for sid in flip_ids for copy in flip_copies(arrays[sid])]
        flipped = extract_features(backbone, preprocess, flat, config.batch_size)
        for i, sid in enumerate(flip_ids):
            flip_vectors[sid] = [flipped[2 * i], flipped[2 * i + 1]]

    online_vectors: dict[str, list[np.ndarray]] = {}
    if config.online_augment and config.online.rounds > 0:
        rng = np.random.default_rng(config.seed)
        aug = config.online
        variants = [
            online_augmented(arrays[sid], rng, aug.zoom, aug.shift, aug.rotation_degrees)
            for sid in pool_ids
            for _ in range(aug.rounds)
        ]
        online_feats = extract_features(backbone, preprocess, variants, config.batch_size)
        for i, sid in enumerate(pool_ids):
            online_vectors[sid] = [
                online_feats[i * aug.rounds + r] for r in range(aug.rounds)
            ]

    rows = []
    aug_summary = {}
    test_ids = _usable(plan.test_ids, skipped)
    test_matrix = (
        np.stack([base_vectors[sid] for sid in test_ids]) if test_ids else None
    )
    for j, fold in enumerate(plan.folds):
        train_ids = _usable(fold.train_ids, skipped)
        val_ids = _usable(fold.val_ids, skipped)
        x_train, y_train, fold_aug = _augmented_training_set(
            config, train_ids, labels, minority, base_vectors, flip_vectors, online_vectors
        )
        if j == 0:
            aug_summary = fold_aug
        head = train_linear_head(
            x_train,
            y_train,
            class_count,
            config,
            np.stack([base_vectors[sid] for sid in val_ids]) if val_ids else None,
            np.array([labels[sid] for sid in val_ids]) if val_ids else None,
        )
        heldout_ids = _usable(fold.heldout_ids, skipped)
        if heldout_ids:
            probs = predict_probabilities(
                head, np.stack([base_vectors[sid] for sid in heldout_ids]), config.batch_size
            )
            rows.extend(
                (sid, config.backbone, j, labels[sid], probs[i])
                for i, sid in enumerate(heldout_ids)
            )
        if test_ids:
            probs = predict_probabilities(head, test_matrix, config.batch_size)
            rows.extend(
                (sid, config.backbone, j, labels[sid], probs[i])
                for i, sid in enumerate(test_ids)
            )
    return rows, aug_summary


def _export_fine_tuned(config, plan, arrays, labels, class_count, minority):
    """Opt-in mode: a fresh backbone is fine-tuned end to end per fold."""
    from .backbones import _keras_modules

    keras = _keras_modules()
    rows = []
    aug_summary = {}
    skipped = set()
    test_ids = _usable(plan.test_ids, skipped)

    for j, fold in enumerate(plan.folds):
        keras.utils.set_random_seed(config.seed + j)
        backbone, preprocess = build_backbone(config.backbone, config.pretrained)
        model = build_fine_tune_model(backbone, class_count, config)

        train_ids = _usable(fold.train_ids, skipped)
        pixel_copies = {sid: [arrays[sid]] for sid in train_ids}
        for sid in train_ids:
            if labels[sid] in minority:
                pixel_copies[sid].extend(flip_copies(arrays[sid]))
        x_train = preprocess(
            np.stack([copy for sid in train_ids for copy in pixel_copies[sid]]).astype(
                np.float32
            )
        )
        y_train = np.array(
            [labels[sid] for sid in train_ids for _ in pixel_copies[sid]]
        )
        if j == 0:
            before = Counter(labels[sid] for sid in train_ids)
            after = Counter(
                labels[sid] for sid in train_ids for _ in pixel_copies[sid]
            )
            aug_summary = {
                "train_class_counts": {int(k): int(v) for k, v in sorted(before.items())},
                "train_class_counts_augmented": {
                    int(k): int(v) for k, v in sorted(after.items())
                },
            }

        val_ids = _usable(fold.val_ids, skipped)
        validation = None
        callbacks = []
        if val_ids:
            x_val = preprocess(np.stack([arrays[sid] for sid in val_ids]).astype(np.float32))
            validation = (x_val, np.array([labels[sid] for sid in val_ids]))
            callbacks = [
                keras.callbacks.ReduceLROnPlateau(
                    monitor="val_loss", factor=0.1, patience=5, min_lr=1e-7
                )
            ]
        model.fit(
            x_train,
            y_train,
            epochs=config.fine_tune_epochs,
            batch_size=config.batch_size,
            validation_data=validation,
            callbacks=callbacks,
            shuffle=True,
            verbose=0,
        )

        for ids in (_usable(fold.heldout_ids, skipped), test_ids):
            if not ids:
                continue
            x = preprocess(np.stack([arrays[sid] for sid in ids]).astype(np.float32))
            probs = predict_probabilities(model, x, config.batch_size)
            rows.extend(
                (sid, config.backbone, j, labels[sid], probs[i]) for i, sid in enumerate(ids)
            )
    return rows, aug_summary
