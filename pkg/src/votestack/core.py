"""Shared domain types: labeled datasets, probability vectors, probability tables.

Probability vectors are plain float64 numpy arrays that have passed
``validate_probability_vector``; they are returned read-only so they can be
shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    IncompleteTableError,
    InvalidProbabilityError,
    NormalizationError,
    ProbabilityRangeError,
    ShapeError,
)

# Sum tolerance for internally produced vectors. Ingested files use a looser
# tolerance (see io module) because upstream systems round.
SIMPLEX_TOL = 1e-9

# Fold key for tables whose fold dimension is absent or already collapsed.
SINGLE_FOLD = -1


def validate_probability_vector(raw, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Check simplex membership and return the vector unchanged (read-only).

    Never renormalizes: a vector whose sum is off by more than ``tol`` is an
    upstream bug, not something to paper over.
    """
    vec = np.asarray(raw, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise ShapeError(f"probability vector must be 1-d and nonempty, got shape {vec.shape}")
    if not np.isfinite(vec).all():
        raise InvalidProbabilityError(f"non-finite probability entry in {vec!r}")
    if (vec < 0.0).any():
        bad = int(np.argmin(vec))
        raise ProbabilityRangeError(f"negative probability {vec[bad]!r} at index {bad}")
    if (vec > 1.0 + tol).any():
        bad = int(np.argmax(vec))
        raise ProbabilityRangeError(f"probability {vec[bad]!r} at index {bad} exceeds 1")
    total = float(vec.sum())
    if abs(total - 1.0) > tol:
        raise NormalizationError(
            f"probabilities sum to {total!r}, outside 1 +- {tol:g}", observed_sum=total
        )
    out = vec.copy()
    out.flags.writeable = False
    return out


def argmax_label(p) -> int:
    """Decision rule: smallest class index attaining the maximum probability."""
    vec = np.asarray(p, dtype=np.float64)
    if not np.isfinite(vec).all():
        raise InvalidProbabilityError(f"non-finite probability entry in {vec!r}")
    return int(np.argmax(vec))


@dataclass(frozen=True)
class LabeledSample:
    """One (feature vector, class label) pair with a stable opaque id."""

    id: str
    features: np.ndarray
    label: int


class Dataset:
    """Ordered collection of labeled samples over a fixed class inventory."""

    def __init__(
        self,
        ids: Sequence[str],
        features,
        labels,
        class_count: int,
        class_names: Sequence[str] | None = None,
    ):
        if class_count < 2:
            raise ShapeError(f"class_count must be >= 2, got {class_count}")
        self.ids = [str(i) for i in ids]
        self.features = np.asarray(features, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.class_count = int(class_count)
        self.class_names = list(class_names) if class_names is not None else None

        if self.features.ndim != 2:
            raise ShapeError(f"features must be a 2-d array, got shape {self.features.shape}")
        n = len(self.ids)
        if self.features.shape[0] != n or self.labels.shape != (n,):
            raise ShapeError(
                f"inconsistent sizes: {n} ids, {self.features.shape[0]} feature rows, "
                f"{self.labels.shape[0]} labels"
            )
        if len(set(self.ids)) != n:
            raise ShapeError("sample ids must be distinct")
        if n and (self.labels.min() < 0 or self.labels.max() >= class_count):
            raise ShapeError(f"labels must lie in [0, {class_count})")
        if self.class_names is not None and len(self.class_names) != class_count:
            raise ShapeError("class_names length must equal class_count")
        self._index = {sid: i for i, sid in enumerate(self.ids)}

    @classmethod
    def from_samples(
        cls,
        samples: Iterable[LabeledSample],
        class_count: int,
        class_names: Sequence[str] | None = None,
    ) -> "Dataset":
        samples = list(samples)
        ids = [s.id for s in samples]
        feats = np.array([np.asarray(s.features, dtype=np.float64) for s in samples])
        labels = [s.label for s in samples]
        return cls(ids, feats, labels, class_count, class_names)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def index_of(self, sample_id: str) -> int:
        return self._index[sample_id]

    def label_of(self, sample_id: str) -> int:
        return int(self.labels[self._index[sample_id]])

    def features_of(self, sample_id: str) -> np.ndarray:
        return self.features[self._index[sample_id]]

    def sample(self, i: int) -> LabeledSample:
        return LabeledSample(self.ids[i], self.features[i], int(self.labels[i]))

    def subset(self, ids: Sequence[str]) -> "Dataset":
        rows = [self._index[sid] for sid in ids]
        return Dataset(
            [self.ids[r] for r in rows],
            self.features[rows],
            self.labels[rows],
            self.class_count,
            self.class_names,
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)

    def labels_by_id(self) -> dict[str, int]:
        return {sid: int(self.labels[i]) for i, sid in enumerate(self.ids)}


class ProbabilityTable:
    """Probability vectors keyed by (sample_id, learner_index, fold_index).

    fold_index is an integer in [0, fold_count) or SINGLE_FOLD for tables whose
    fold dimension is absent or already collapsed.
    """

    def __init__(
        self,
        learner_count: int,
        fold_count: int,
        class_count: int,
        learner_names: Sequence[str] | None = None,
    ):
        if learner_count < 1:
            raise ShapeError("learner_count must be >= 1")
        if class_count < 2:
            raise ShapeError("class_count must be >= 2")
        self.learner_count = int(learner_count)
        self.fold_count = int(fold_count)
        self.class_count = int(class_count)
        self.learner_names = (
            list(learner_names)
            if learner_names is not None
            else [str(t) for t in range(learner_count)]
        )
        if len(self.learner_names) != self.learner_count:
            raise ShapeError("learner_names length must equal learner_count")
        self._entries: dict[tuple[str, int, int], np.ndarray] = {}

    def put(self, sample_id: str, learner: int, fold: int, vector) -> None:
        if not (0 <= learner < self.learner_count):
            raise ShapeError(f"learner index {learner} outside [0, {self.learner_count})")
        if fold != SINGLE_FOLD and not (0 <= fold < max(self.fold_count, 1)):
            raise ShapeError(f"fold index {fold} outside [0, {self.fold_count})")
        vec = validate_probability_vector(vector)
        if vec.shape[0] != self.class_count:
            raise ShapeError(f"expected {self.class_count} classes, got {vec.shape[0]}")
        self._entries[(str(sample_id), int(learner), int(fold))] = vec

    def has(self, sample_id: str, learner: int, fold: int = SINGLE_FOLD) -> bool:
        return (str(sample_id), int(learner), int(fold)) in self._entries

    def get(self, sample_id: str, learner: int, fold: int = SINGLE_FOLD) -> np.ndarray:
        key = (str(sample_id), int(learner), int(fold))
        try:
            return self._entries[key]
        except KeyError:
            raise IncompleteTableError(
                f"missing entry for sample {sample_id!r}, learner {learner}, fold {fold}"
            ) from None

    def items(self):
        """Deterministic iteration: sorted by (sample_id, learner, fold)."""
        for key in sorted(self._entries):
            yield key, self._entries[key]

    def sample_ids(self) -> list[str]:
        return sorted({sid for sid, _, _ in self._entries})

    def folds_for(self, sample_id: str, learner: int) -> list[int]:
        sid = str(sample_id)
        return sorted(f for s, t, f in self._entries if s == sid and t == learner)

    def per_learner(self, sample_id: str, fold: int = SINGLE_FOLD) -> list[np.ndarray]:
        """All T vectors for one sample at one fold key, in learner order."""
        return [self.get(sample_id, t, fold) for t in range(self.learner_count)]

    def restrict_learners(self, learners: Sequence[int]) -> "ProbabilityTable":
        """Sub-table keeping the given learner indices, renumbered to 0..len-1."""
        learners = list(learners)
        out = ProbabilityTable(
            len(learners),
            self.fold_count,
            self.class_count,
            [self.learner_names[t] for t in learners],
        )
        remap = {t: i for i, t in enumerate(learners)}
        for (sid, t, f), vec in self._entries.items():
            if t in remap:
                out._entries[(sid, remap[t], f)] = vec
        return out

    def restrict_samples(self, ids: Iterable[str]) -> "ProbabilityTable":
        keep = {str(i) for i in ids}
        out = ProbabilityTable(
            self.learner_count, self.fold_count, self.class_count, self.learner_names
        )
        for (sid, t, f), vec in self._entries.items():
            if sid in keep:
                out._entries[(sid, t, f)] = vec
        return out

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProbabilityTable):
            return NotImplemented
        if (
            self.learner_count != other.learner_count
            or self.fold_count != other.fold_count
            or self.class_count != other.class_count
            or self.learner_names != other.learner_names
        ):
            return False
        if self._entries.keys() != other._entries.keys():
            return False
        return all(np.array_equal(v, other._entries[k]) for k, v in self._entries.items())
