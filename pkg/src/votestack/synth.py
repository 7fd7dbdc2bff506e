"""Bundled synthetic data so every command runs without external datasets.

Two generators: seeded Gaussian blobs (a plain feature dataset), and an
engineered probability table that simulates base learners with disjoint,
controllable error regions. In a learner's error region its vector puts high
confidence on the class one past the true one while the other learners stay
moderately confident and correct, which drags the soft vote onto the wrong
class and gives the meta-learner a linearly learnable correction pattern.
"""

from __future__ import annotations

import numpy as np

from .core import Dataset, ProbabilityTable
from .errors import ConfigError
from .evalharness import FoldPlan


def make_blobs(
    n: int,
    class_count: int = 3,
    feature_dim: int = 2,
    seed: int = 0,
    center_scale: float = 6.0,
    spread: float = 1.0,
) -> Dataset:
    """Gaussian blobs, near-balanced classes, ids zero-padded for stable sort."""
    if n < class_count:
        raise ConfigError("need at least one sample per class")
    rng = np.random.Generator(np.random.PCG64(seed))
    centers = rng.normal(0.0, center_scale, size=(class_count, feature_dim))
    counts = [n // class_count] * class_count
    for i in range(n - sum(counts)):
        counts[i] += 1
    width = len(str(n - 1))
    ids, labels, rows = [], [], []
    i = 0
    for cls, count in enumerate(counts):
        for _ in range(count):
            ids.append(f"s{i:0{width}d}")
            labels.append(cls)
            rows.append(centers[cls] + rng.normal(0.0, spread, size=feature_dim))
            i += 1
    return Dataset(ids, np.array(rows), labels, class_count)


def _pattern(
    label: int,
    class_count: int,
    wrong: bool,
    wrong_confidence: float,
    right_confidence: float,
) -> np.ndarray:
    vec = np.empty(class_count)
    if wrong:
        vec.fill((1.0 - wrong_confidence) / (class_count - 1))
        vec[(label + 1) % class_count] = wrong_confidence
    else:
        vec.fill((1.0 - right_confidence) / (class_count - 1))
        vec[label] = right_confidence
    return vec


def make_complementary_table(
    data: Dataset,
    plan: FoldPlan,
    learner_count: int = 3,
    error_fraction: float = 0.2,
    wrong_confidence: float = 0.9,
    right_confidence: float = 0.5,
    jitter: float = 0.01,
    seed: int = 0,
) -> tuple[ProbabilityTable, dict[str, int]]:
    """Simulated base-learner outputs with disjoint per-learner error regions.

    Each learner owns a seeded slice of roughly ``error_fraction`` of all
    samples where it is confidently wrong. Training-pool samples get one row
    at their own fold; test samples get one row per fold, each with small
    jitter standing in for fold-model variation.
    """
    if not (0.0 <= error_fraction * learner_count < 1.0):
        raise ConfigError("error regions must total less than the whole dataset")
    if not (0.5 < wrong_confidence < 1.0) or not (1.0 / data.class_count < right_confidence < 1.0):
        raise ConfigError("confidences must make the intended decision dominant")

    rng = np.random.Generator(np.random.PCG64(seed))
    order = [data.ids[i] for i in rng.permutation(len(data))]
    region_size = int(np.floor(error_fraction * len(data)))
    wrong_learner: dict[str, int] = {}
    for t in range(learner_count):
        for sid in order[t * region_size : (t + 1) * region_size]:
            wrong_learner[sid] = t

    fold_of = {
        sid: j for j, fold in enumerate(plan.folds) for sid in fold.heldout_ids
    }
    table = ProbabilityTable(
        learner_count, plan.k, data.class_count, [f"sim{t}" for t in range(learner_count)]
    )
    labels = data.labels_by_id()

    def emit(sid: str, t: int, fold: int) -> None:
        base = _pattern(
            labels[sid],
            data.class_count,
            wrong_learner.get(sid) == t,
            wrong_confidence,
            right_confidence,
        )
        noisy = np.maximum(base + rng.uniform(-jitter, jitter, size=base.shape), 1e-6)
        table.put(sid, t, fold, noisy / noisy.sum())

    for sid in sorted(fold_of):
        for t in range(learner_count):
            emit(sid, t, fold_of[sid])
    for sid in sorted(plan.test_ids):
        for t in range(learner_count):
            for j in range(plan.k):
                emit(sid, t, j)
    return table, labels
