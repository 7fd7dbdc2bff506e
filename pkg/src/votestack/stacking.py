"""Contradictory-sample meta-dataset construction, meta training, routing,
general two-level stacking, and the multi-level super-learner frame.

A "contradictory" sample is one whose soft-voted prediction disagrees with its
ground-truth label; only those feed the filtered meta-dataset. Test-time
routing comes in two flavors: LABEL mode mirrors the training-side filter (it
needs test labels), DISAGREEMENT mode routes on base-learner unanimity and
never touches labels.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import (
    SINGLE_FOLD,
    Dataset,
    ProbabilityTable,
    argmax_label,
    validate_probability_vector,
)
from .errors import ConfigError, EmptyMetaError, ModeError, ShapeError
from .learners import LearnerSpec
from .voting import VoteResult, soft_vote


class RoutingMode(enum.Enum):
    """How test samples are assigned to the meta-learner.

    LABEL keeps the vote prediction where it matches the ground-truth label
    and sends the contradictory samples to the meta-learner, mirroring the
    training-side filter exactly (labels required). DISAGREEMENT keeps the
    unanimous base-learner decision and sends everything else to the
    meta-learner; it never reads labels and is the deployable variant.
    """

    LABEL = "label"
    DISAGREEMENT = "disagreement"


@dataclass(frozen=True)
class MetaSample:
    source_id: str
    features: np.ndarray  # concatenation of T length-c probability blocks
    label: int


@dataclass(frozen=True)
class MetaProvenance:
    filtered: bool
    source_size: int
    retained: int


@dataclass(frozen=True)
class MetaDataset:
    meta_samples: tuple[MetaSample, ...]
    learner_count: int
    class_count: int
    provenance: MetaProvenance

    def __len__(self) -> int:
        return len(self.meta_samples)

    def to_dataset(self) -> Dataset:
        return Dataset(
            [s.source_id for s in self.meta_samples],
            np.array([s.features for s in self.meta_samples]),
            [s.label for s in self.meta_samples],
            self.class_count,
        )


def build_meta_features(per_learner: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate the T probability vectors in learner order (length T*c)."""
    vecs = [validate_probability_vector(p) for p in per_learner]
    c = vecs[0].shape[0]
    if any(v.shape[0] != c for v in vecs):
        raise ShapeError("per-learner vectors disagree on class count")
    return np.concatenate(vecs)


def build_meta_training_set(
    table: ProbabilityTable,
    labels: Mapping[str, int],
    votes: Mapping[str, VoteResult],
    filtered: bool,
) -> MetaDataset:
    """Assemble (concatenated probabilities, label) rows from the table.

    filtered=True keeps exactly the contradictory samples (vote prediction !=
    label); filtered=False keeps all of them, which is what plain two-level
    stacking trains on. An empty filtered result is legitimate (every vote was
    right) and is the caller's cue to fall back to pure voting.
    """
    missing = [sid for sid in labels if sid not in votes]
    if missing:
        raise ShapeError(f"votes missing for samples {missing[:5]!r}")
    rows = []
    for sid in sorted(labels):
        label = int(labels[sid])
        if filtered and votes[sid].predicted == label:
            continue
        features = build_meta_features(table.per_learner(sid, SINGLE_FOLD))
        rows.append(MetaSample(sid, features, label))
    return MetaDataset(
        tuple(rows),
        table.learner_count,
        table.class_count,
        MetaProvenance(filtered, len(labels), len(rows)),
    )


def split_meta(
    meta: MetaDataset, val_fraction: float, seed: int
) -> tuple[MetaDataset, MetaDataset]:
    """Stratified train/val split of a meta-dataset (val may come back empty)."""
    from .evalharness import stratified_split  # late import to avoid a cycle

    ds = meta.to_dataset()
    with warnings.catch_warnings():
        # Contradictory-sample meta-datasets routinely miss whole classes;
        # the absent-class degeneracy warning is noise here.
        warnings.filterwarnings("ignore", message=r"class \d+ has no samples")
        train_ids, val_ids, _ = stratified_split(ds, 0.0, val_fraction, seed)
    keep_train = set(train_ids)
    keep_val = set(val_ids)
    train_rows = tuple(s for s in meta.meta_samples if s.source_id in keep_train)
    val_rows = tuple(s for s in meta.meta_samples if s.source_id in keep_val)
    prov = meta.provenance
    return (
        MetaDataset(train_rows, meta.learner_count, meta.class_count,
                    MetaProvenance(prov.filtered, prov.source_size, len(train_rows))),
        MetaDataset(val_rows, meta.learner_count, meta.class_count,
                    MetaProvenance(prov.filtered, prov.source_size, len(val_rows))),
    )


def train_meta(meta: MetaDataset, meta_val: MetaDataset | None, spec: LearnerSpec):
    """Fit the configured meta-learner on concatenated-probability features."""
    if len(meta) == 0:
        raise EmptyMetaError("meta-dataset is empty; fall back to pure voting")
    train_ds = meta.to_dataset()
    val_ds = meta_val.to_dataset() if meta_val is not None and len(meta_val) else train_ds
    return spec.fit(train_ds, val_ds)


def _meta_decide(meta_model, features: np.ndarray) -> int:
    return argmax_label(meta_model.predict_proba(features))


def _route_by_label(
    test_table: ProbabilityTable,
    meta_model,
    test_labels: Mapping[str, int],
) -> dict[str, int]:
    out = {}
    for sid in sorted(str(s) for s in test_labels):
        vote = soft_vote(test_table.per_learner(sid, SINGLE_FOLD))
        if vote.predicted == int(test_labels[sid]) or meta_model is None:
            out[sid] = vote.predicted
        else:
            out[sid] = _meta_decide(meta_model, build_meta_features(vote.per_learner))
    return out


def _route_by_disagreement(
    test_table: ProbabilityTable, meta_model
) -> dict[str, int]:
    # Deliberately takes no labels: this path must stay deployable.
    out = {}
    for sid in test_table.sample_ids():
        per_learner = test_table.per_learner(sid, SINGLE_FOLD)
        decisions = {argmax_label(p) for p in per_learner}
        if len(decisions) == 1:
            out[sid] = decisions.pop()
        elif meta_model is None:
            out[sid] = soft_vote(per_learner).predicted
        else:
            out[sid] = _meta_decide(meta_model, build_meta_features(per_learner))
    return out


def voting_stacking_predict(
    test_table: ProbabilityTable,
    meta_model,
    mode: RoutingMode,
    test_labels: Mapping[str, int] | None = None,
) -> dict[str, int]:
    """Final per-sample decisions on a fold-collapsed test table.

    meta_model may be None (the empty-meta fallback), in which case every
    sample keeps its soft-vote decision.
    """
    if mode is RoutingMode.LABEL:
        if test_labels is None:
            raise ModeError("LABEL routing requires ground-truth test labels")
        return _route_by_label(test_table, meta_model, test_labels)
    if mode is RoutingMode.DISAGREEMENT:
        return _route_by_disagreement(test_table, meta_model)
    raise ModeError(f"unknown routing mode {mode!r}")


@dataclass(frozen=True)
class StackLevel:
    """One stacking level: the learners trained on the previous level's output."""

    learners: tuple[LearnerSpec, ...]

    def __post_init__(self):
        if len(self.learners) < 1:
            raise ConfigError("a stacking level needs at least one learner")


@dataclass(frozen=True)
class StackConfig:
    """Ordered levels; level 0 is the base roster, the last level must be a
    single learner (the final decision maker)."""

    levels: tuple[StackLevel, ...]

    def __post_init__(self):
        if len(self.levels) < 2:
            raise ConfigError("a stack needs at least two levels")
        if len(self.levels[-1].learners) != 1:
            raise ConfigError("the final level must hold exactly one learner")


@dataclass(frozen=True)
class FittedStack:
    """Fitted level-2 models plus an optional level-3 super model.

    predict_proba walks the stack: concatenated base probabilities feed the
    level-2 models; with a super model their concatenated outputs feed it and
    its vector is final, otherwise the single level-2 model's vector is.
    """

    meta_models: tuple
    super_model: object | None
    class_count: int

    def predict_proba(self, features) -> np.ndarray:
        level2 = [m.predict_proba(features) for m in self.meta_models]
        if self.super_model is None:
            if len(level2) != 1:
                raise ConfigError("multiple level-2 models require a super model")
            return level2[0]
        return self.super_model.predict_proba(np.concatenate(level2))


def train_stack(
    meta: MetaDataset,
    meta_val: MetaDataset | None,
    level2_specs: Sequence[LearnerSpec],
    super_spec: LearnerSpec | None,
) -> FittedStack:
    """Fit level-2 learners on the meta-dataset and, when configured, a super
    learner on their concatenated outputs over the same rows."""
    if len(meta) == 0:
        raise EmptyMetaError("meta-dataset is empty; fall back to pure voting")
    models = tuple(train_meta(meta, meta_val, spec) for spec in level2_specs)
    if super_spec is None:
        if len(models) != 1:
            raise ConfigError("multiple level-2 learners require a super learner")
        return FittedStack(models, None, meta.class_count)

    level2_train = {
        s.source_id: [m.predict_proba(s.features) for m in models]
        for s in meta.meta_samples
    }
    labels = {s.source_id: s.label for s in meta.meta_samples}
    super_model, _ = multilevel_stack(level2_train, labels, {}, super_spec, meta.class_count)
    return FittedStack(models, super_model, meta.class_count)


def multilevel_stack(
    level2_train: Mapping[str, Sequence[np.ndarray]],
    train_labels: Mapping[str, int],
    level2_test: Mapping[str, Sequence[np.ndarray]],
    super_spec: LearnerSpec,
    class_count: int,
):
    """Train the super learner on concatenated level-2 outputs and predict.

    Returns (super model, {test sample id: predicted class}).
    """
    if not level2_train:
        raise EmptyMetaError("no level-2 outputs to train the super learner on")
    widths = {len(v) for v in level2_train.values()}
    if len(widths) != 1:
        raise ShapeError("level-2 output counts differ across samples")
    if widths.pop() < 2:
        warnings.warn(
            "single level-2 learner: the super level degenerates to identity stacking",
            stacklevel=2,
        )
    ids = sorted(level2_train)
    features = np.array([build_meta_features(level2_train[sid]) for sid in ids])
    labels = [int(train_labels[sid]) for sid in ids]
    train_ds = Dataset(ids, features, labels, class_count)
    super_model = super_spec.fit(train_ds, train_ds)
    predictions = {
        sid: _meta_decide(super_model, build_meta_features(vecs))
        for sid, vecs in level2_test.items()
    }
    return super_model, predictions


@dataclass(frozen=True)
class StackedModel:
    """Plain two-level stack fitted on a whole training set (no filtering)."""

    base_models: tuple
    meta_model: object
    class_count: int

    def predict(self, features) -> int:
        per_learner = [m.predict_proba(features) for m in self.base_models]
        return _meta_decide(self.meta_model, build_meta_features(per_learner))

    def predict_many(self, data: Dataset) -> dict[str, int]:
        return {sid: self.predict(data.features_of(sid)) for sid in data.ids}


def general_stacking(
    train: Dataset,
    base_specs: Sequence[LearnerSpec],
    meta_spec: LearnerSpec,
    eval_split: float = 0.0,
    seed: int = 0,
) -> StackedModel:
    """Plain stacking: every base learner fits the full training set, the
    unfiltered meta-dataset of concatenated base probabilities trains the
    meta-learner, and prediction composes meta over base outputs.

    eval_split > 0 carves a stratified validation slice of the meta-dataset
    for the meta fit; at 0 the meta-learner trains (and snapshots) on the
    whole meta-dataset, matching the plain-stacking recipe.
    """
    if len(base_specs) < 1:
        raise ConfigError("general_stacking needs at least one base learner")
    base_models = tuple(spec.fit(train, train) for spec in base_specs)

    rows = []
    for i, sid in enumerate(train.ids):
        per_learner = [m.predict_proba(train.features[i]) for m in base_models]
        rows.append(MetaSample(sid, build_meta_features(per_learner), int(train.labels[i])))
    meta = MetaDataset(
        tuple(rows),
        len(base_specs),
        train.class_count,
        MetaProvenance(False, len(train), len(rows)),
    )
    if eval_split > 0.0:
        meta_train, meta_val = split_meta(meta, eval_split, seed)
    else:
        meta_train, meta_val = meta, None
    meta_model = train_meta(meta_train, meta_val, meta_spec)
    return StackedModel(base_models, meta_model, train.class_count)
