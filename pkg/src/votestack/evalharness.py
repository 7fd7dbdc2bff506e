"""Evaluation protocol: stratified splits, k-fold plans, per-fold learner
families, fold-averaged test probabilities, metrics, and the full pipeline
driver that also emits the ablation grid and meta-learner comparison.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .core import SINGLE_FOLD, Dataset, ProbabilityTable, argmax_label
from .errors import (
    ConfigError,
    EmptyInputError,
    IncompleteTableError,
    ModeError,
    ShapeError,
    StratificationError,
    VotestackError,
)
from .learners import LearnerSpec, child_seed, default_learners
from .stacking import (
    RoutingMode,
    build_meta_features,
    build_meta_training_set,
    split_meta,
    train_meta,
    train_stack,
    voting_stacking_predict,
)
from .voting import vote_table


def _largest_remainder(count: int, fractions: Sequence[float]) -> list[int]:
    """Integer allocation of ``count`` items to parts by largest remainder."""
    quotas = [count * f for f in fractions]
    counts = [int(np.floor(q)) for q in quotas]
    leftover = count - sum(counts)
    remainders = sorted(
        range(len(fractions)), key=lambda i: (-(quotas[i] - counts[i]), i)
    )
    for i in range(leftover):
        counts[remainders[i % len(fractions)]] += 1
    return counts


def stratified_split(
    data: Dataset, test_fraction: float, val_fraction: float, seed: int
) -> tuple[list[str], list[str], list[str]]:
    """Per-class largest-remainder split into (train, val, test) id lists.

    Fractions may be zero (the corresponding part comes back empty); their sum
    must stay below 1. A class too small to reach every nonzero part raises a
    degeneracy warning, not an error.
    """
    for name, frac in (("test_fraction", test_fraction), ("val_fraction", val_fraction)):
        if not (0.0 <= frac < 1.0):
            raise ConfigError(f"{name} must lie in [0, 1), got {frac}")
    if test_fraction + val_fraction >= 1.0:
        raise ConfigError("test_fraction + val_fraction must stay below 1")
    if len(data) == 0:
        raise EmptyInputError("cannot split an empty dataset")

    rng = np.random.Generator(np.random.PCG64(seed))
    train_frac = 1.0 - test_fraction - val_fraction
    train_ids: list[str] = []
    val_ids: list[str] = []
    test_ids: list[str] = []
    for cls in range(data.class_count):
        cls_ids = [sid for sid, lab in zip(data.ids, data.labels) if lab == cls]
        if not cls_ids:
            warnings.warn(f"class {cls} has no samples; split is degenerate", stacklevel=2)
            continue
        n_train, n_val, n_test = _largest_remainder(
            len(cls_ids), [train_frac, val_fraction, test_fraction]
        )
        for part_n, frac, part in (
            (n_train, train_frac, "train"),
            (n_val, val_fraction, "val"),
            (n_test, test_fraction, "test"),
        ):
            if frac > 0.0 and part_n == 0:
                warnings.warn(
                    f"class {cls} contributes no samples to the {part} part",
                    stacklevel=2,
                )
        order = rng.permutation(len(cls_ids))
        shuffled = [cls_ids[i] for i in order]
        test_ids.extend(shuffled[:n_test])
        val_ids.extend(shuffled[n_test : n_test + n_val])
        train_ids.extend(shuffled[n_test + n_val :])
    return train_ids, val_ids, test_ids


@dataclass(frozen=True)
class FoldAssignment:
    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]
    heldout_ids: tuple[str, ...]


@dataclass(frozen=True)
class FoldPlan:
    """k-fold partition of the training pool plus the held-back test ids."""

    test_ids: tuple[str, ...]
    folds: tuple[FoldAssignment, ...]
    k: int
    seed: int
    stratified: bool
    warnings: tuple[str, ...] = ()

    @property
    def pool_ids(self) -> tuple[str, ...]:
        out: list[str] = []
        for fold in self.folds:
            out.extend(fold.heldout_ids)
        return tuple(sorted(out))

    def validate(self) -> None:
        heldout = [sid for fold in self.folds for sid in fold.heldout_ids]
        if len(heldout) != len(set(heldout)):
            raise ShapeError("fold heldout sets overlap")
        pool = set(heldout)
        if pool & set(self.test_ids):
            raise ShapeError("test ids overlap the training pool")
        for j, fold in enumerate(self.folds):
            body = set(fold.train_ids) | set(fold.val_ids)
            if body != pool - set(fold.heldout_ids):
                raise ShapeError(f"fold {j}: train+val must equal pool minus heldout")
            if set(fold.train_ids) & set(fold.val_ids):
                raise ShapeError(f"fold {j}: train and val overlap")


def make_folds(
    data: Dataset,
    pool_ids: Sequence[str],
    k: int,
    seed: int,
    stratified: bool = True,
    test_ids: Sequence[str] = (),
    val_fraction: float = 0.10,
) -> FoldPlan:
    """Deal the pool into k folds (stratified round-robin by default) and carve
    a per-fold validation slice out of each fold's training side."""
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    pool = [str(s) for s in pool_ids]
    if len(pool) < k:
        raise ConfigError(f"pool of {len(pool)} samples cannot fill {k} folds")
    rng = np.random.Generator(np.random.PCG64(seed))
    plan_warnings: list[str] = []

    assignments: list[list[str]] = [[] for _ in range(k)]
    start = int(rng.integers(k))
    if stratified:
        labels = {sid: data.label_of(sid) for sid in pool}
        pos = 0
        for cls in range(data.class_count):
            cls_ids = [sid for sid in pool if labels[sid] == cls]
            if not cls_ids:
                plan_warnings.append(f"class {cls} absent from the training pool")
                continue
            if len(cls_ids) < k:
                raise StratificationError(
                    f"class {cls} has {len(cls_ids)} samples, fewer than k={k}"
                )
            order = rng.permutation(len(cls_ids))
            for i in order:
                assignments[(start + pos) % k].append(cls_ids[i])
                pos += 1
    else:
        order = rng.permutation(len(pool))
        for pos, i in enumerate(order):
            assignments[(start + pos) % k].append(pool[i])

    folds = []
    pool_set = set(pool)
    for j in range(k):
        heldout = tuple(sorted(assignments[j]))
        rest = sorted(pool_set - set(heldout))
        rest_seed = child_seed(seed, 900 + j)
        if val_fraction > 0.0 and stratified:
            train_part, val_part, _ = stratified_split(
                data.subset(rest), 0.0, val_fraction, rest_seed
            )
        elif val_fraction > 0.0:
            sub_rng = np.random.Generator(np.random.PCG64(rest_seed))
            shuffled = [rest[i] for i in sub_rng.permutation(len(rest))]
            n_val = int(np.floor(len(rest) * val_fraction))
            val_part, train_part = shuffled[:n_val], shuffled[n_val:]
        else:
            train_part, val_part = rest, []
        if not train_part:
            raise ConfigError(f"fold {j}: validation fraction leaves no training samples")
        folds.append(
            FoldAssignment(tuple(sorted(train_part)), tuple(sorted(val_part)), heldout)
        )

    plan = FoldPlan(
        tuple(str(s) for s in test_ids),
        tuple(folds),
        k,
        int(seed),
        bool(stratified),
        tuple(plan_warnings),
    )
    plan.validate()
    return plan


def plan_evaluation(
    data: Dataset,
    test_fraction: float,
    k: int,
    seed: int,
    stratified: bool = True,
    val_fraction: float = 0.10,
) -> FoldPlan:
    """Top-level split plus fold construction in one deterministic step."""
    pool, _, test = stratified_split(data, test_fraction, 0.0, child_seed(seed, 1))
    return make_folds(
        data, pool, k, child_seed(seed, 2), stratified, test_ids=test, val_fraction=val_fraction
    )


def _fit_fold(spec: LearnerSpec, data: Dataset, fold: FoldAssignment, seed: int):
    train_ds = data.subset(fold.train_ids)
    val_ds = data.subset(fold.val_ids) if fold.val_ids else train_ds
    return spec.with_seed(seed).fit(train_ds, val_ds)


def collect_fold_probabilities(
    plan: FoldPlan,
    specs: Sequence[LearnerSpec],
    data: Dataset,
    jobs: int = 1,
) -> ProbabilityTable:
    """Train every (learner, fold) model and record its probabilities.

    Out-of-fold: each pool sample gets one vector per learner, produced by the
    model whose training side excluded it. Test: every sample gets k vectors
    per learner, one per fold model.
    """
    table = ProbabilityTable(
        len(specs), plan.k, data.class_count, [s.display_name for s in specs]
    )

    def run_task(t: int, j: int):
        spec, fold = specs[t], plan.folds[j]
        try:
            model = _fit_fold(spec, data, fold, child_seed(plan.seed, t, j))
            heldout = {sid: model.predict_proba(data.features_of(sid)) for sid in fold.heldout_ids}
            test = {sid: model.predict_proba(data.features_of(sid)) for sid in plan.test_ids}
        except VotestackError as exc:
            raise VotestackError(
                f"fold {j}, learner {spec.display_name}: {exc}"
            ) from exc
        return t, j, heldout, test

    tasks = [(t, j) for t in range(len(specs)) for j in range(plan.k)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda tj: run_task(*tj), tasks))
    else:
        results = [run_task(t, j) for t, j in tasks]

    for t, j, heldout, test in sorted(results, key=lambda r: (r[0], r[1])):
        for sid, vec in heldout.items():
            table.put(sid, t, j, vec)
        for sid, vec in test.items():
            table.put(sid, t, j, vec)
    return table


def collapse_out_of_fold(table: ProbabilityTable, pool_ids: Sequence[str]) -> ProbabilityTable:
    """Re-key each pool sample's single out-of-fold vector under SINGLE_FOLD."""
    out = ProbabilityTable(
        table.learner_count, table.fold_count, table.class_count, table.learner_names
    )
    for sid in sorted(str(s) for s in pool_ids):
        for t in range(table.learner_count):
            folds = table.folds_for(sid, t)
            if not folds:
                raise IncompleteTableError(f"no out-of-fold entry for sample {sid!r}, learner {t}")
            if len(folds) != 1:
                raise ShapeError(
                    f"sample {sid!r}, learner {t}: expected one out-of-fold entry, got {len(folds)}"
                )
            out.put(sid, t, SINGLE_FOLD, table.get(sid, t, folds[0]))
    return out


def average_test_probabilities(
    table: ProbabilityTable, test_ids: Sequence[str] | None = None
) -> ProbabilityTable:
    """Collapse the fold dimension by the entrywise mean over all k folds."""
    if table.fold_count < 1:
        raise ConfigError("table has no fold dimension to average")
    ids = sorted(str(s) for s in (test_ids if test_ids is not None else table.sample_ids()))
    out = ProbabilityTable(
        table.learner_count, table.fold_count, table.class_count, table.learner_names
    )
    for sid in ids:
        for t in range(table.learner_count):
            stacked = np.stack([table.get(sid, t, j) for j in range(table.fold_count)])
            out.put(sid, t, SINGLE_FOLD, stacked.mean(axis=0))
    return out


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class: tuple[ClassMetrics, ...]
    sample_count: int
    average: str
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "average": self.average,
            "sample_count": self.sample_count,
            "per_class": [
                {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                }
                for m in self.per_class
            ],
            "warnings": list(self.warnings),
        }


def compute_confusion(
    preds: Mapping[str, int], labels: Mapping[str, int], class_count: int
) -> np.ndarray:
    """Count matrix with true classes on rows and predictions on columns."""
    if not labels:
        raise EmptyInputError("no labeled samples to evaluate")
    cm = np.zeros((class_count, class_count), dtype=np.int64)
    for sid, label in labels.items():
        if sid not in preds:
            raise ShapeError(f"missing prediction for sample {sid!r}")
        cm[int(label), int(preds[sid])] += 1
    return cm


def compute_metrics(cm: np.ndarray, average: str = "macro") -> MetricsReport:
    """One-vs-rest per-class metrics plus the requested multiclass average.

    Zero-denominator cases are reported as 0 with an attached warning so the
    report never carries undefined values. In the binary case the per-class
    entry for class 1 carries the positive-class precision/recall/F1.
    """
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total == 0:
        raise EmptyInputError("empty confusion matrix")
    if average not in ("macro", "micro", "weighted"):
        raise ConfigError(f"unknown average {average!r}")

    c = cm.shape[0]
    notes: list[str] = []
    per_class = []
    for i in range(c):
        tp = int(cm[i, i])
        fp = int(cm[:, i].sum()) - tp
        fn = int(cm[i, :].sum()) - tp
        support = tp + fn
        if tp + fp > 0:
            precision = tp / (tp + fp)
        else:
            precision = 0.0
            notes.append(f"class {i}: precision undefined (never predicted), set to 0")
        if tp + fn > 0:
            recall = tp / (tp + fn)
        else:
            recall = 0.0
            notes.append(f"class {i}: recall undefined (no true samples), set to 0")
        if precision + recall > 0:
            f1 = 2.0 * precision * recall / (precision + recall)
        else:
            f1 = 0.0
            notes.append(f"class {i}: F1 undefined, set to 0")
        per_class.append(ClassMetrics(precision, recall, f1, support))

    accuracy = float(np.trace(cm)) / total
    if average == "macro":
        agg = (
            float(np.mean([m.precision for m in per_class])),
            float(np.mean([m.recall for m in per_class])),
            float(np.mean([m.f1 for m in per_class])),
        )
    elif average == "weighted":
        supports = np.array([m.support for m in per_class], dtype=np.float64)
        weights = supports / supports.sum()
        agg = (
            float(np.sum(weights * [m.precision for m in per_class])),
            float(np.sum(weights * [m.recall for m in per_class])),
            float(np.sum(weights * [m.f1 for m in per_class])),
        )
    else:  # micro: pooled counts; equals accuracy for single-label problems
        tp_all = float(np.trace(cm))
        agg = (tp_all / total, tp_all / total, tp_all / total)

    return MetricsReport(
        accuracy, agg[0], agg[1], agg[2], tuple(per_class), total, average, tuple(notes)
    )


@dataclass(frozen=True)
class PipelineConfig:
    test_fraction: float = 0.2
    k: int = 5
    seed: int = 0
    stratified: bool = True
    fold_val_fraction: float = 0.10
    meta_val_fraction: float = 0.20
    learners: tuple[LearnerSpec, ...] = field(default_factory=lambda: tuple(default_learners()))
    meta: LearnerSpec = field(default_factory=lambda: LearnerSpec("softmax", name="softmax_meta"))
    modes: tuple[RoutingMode, ...] = (RoutingMode.LABEL, RoutingMode.DISAGREEMENT)
    levels: int = 2
    level2: tuple[LearnerSpec, ...] = field(
        default_factory=lambda: tuple(default_learners())
    )
    super_learner: LearnerSpec = field(
        default_factory=lambda: LearnerSpec("softmax", name="softmax_super")
    )
    ablate: bool = False
    compare_metas: bool = False
    average: str = "macro"
    jobs: int = 1

    def __post_init__(self):
        if self.levels not in (2, 3):
            raise ConfigError(f"levels must be 2 or 3, got {self.levels}")
        if not self.learners:
            raise ConfigError("at least one base learner is required")


def _derive_table_roles(table: ProbabilityTable) -> tuple[list[str], list[str]]:
    """Classify table samples into training pool vs test by fold coverage."""
    k = table.fold_count
    if k < 2:
        raise ConfigError("pipeline input table must carry a k-fold structure (k >= 2)")
    pool, test = [], []
    full = set(range(k))
    for sid in table.sample_ids():
        folds_seen = {tuple(table.folds_for(sid, t)) for t in range(table.learner_count)}
        if len(folds_seen) != 1:
            raise ShapeError(f"sample {sid!r}: learners disagree on fold coverage")
        folds = set(folds_seen.pop())
        if folds == full:
            test.append(sid)
        elif len(folds) == 1 and SINGLE_FOLD not in folds:
            pool.append(sid)
        else:
            raise ShapeError(
                f"sample {sid!r}: fold coverage {sorted(folds)} is neither out-of-fold nor full"
            )
    if not pool or not test:
        raise ConfigError("table must contain both out-of-fold and test samples")
    return pool, test


def _metrics_block(preds, labels, class_count, average) -> dict:
    cm = compute_confusion(preds, labels, class_count)
    report = compute_metrics(cm, average)
    block = report.to_dict()
    block["confusion"] = cm.tolist()
    return block


def _fold_summary(values: Mapping[str, list[float]]) -> dict:
    # Population std (divisor k) over the k fold-model evaluations.
    return {
        name: {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
        for name, vals in values.items()
    }


def _train_predictor(config: PipelineConfig, meta_ds, seed: int):
    """Fit the routing predictor: plain meta model (2 levels) or full stack."""
    meta_train, meta_val = split_meta(meta_ds, config.meta_val_fraction, child_seed(seed, 7))
    if len(meta_train) == 0 or len(np.unique([s.label for s in meta_train.meta_samples])) < 2:
        meta_train, meta_val = meta_ds, None
    if config.levels == 3:
        level2 = tuple(
            spec.with_seed(child_seed(seed, 20 + i)) for i, spec in enumerate(config.level2)
        )
        return train_stack(
            meta_train, meta_val, level2, config.super_learner.with_seed(child_seed(seed, 30))
        )
    return train_meta(meta_train, meta_val, config.meta.with_seed(child_seed(seed, 8)))


def _run_core(
    config: PipelineConfig,
    table: ProbabilityTable,
    labels: Mapping[str, int | None],
    pool_ids: Sequence[str],
    test_ids: Sequence[str],
) -> dict:
    """Voting, meta construction, routing, and metrics on a collected table."""
    pool_labels = {}
    for sid in pool_ids:
        if labels.get(sid) is None:
            raise ConfigError(f"training-pool sample {sid!r} has no label")
        pool_labels[sid] = int(labels[sid])

    oof = collapse_out_of_fold(table.restrict_samples(pool_ids), pool_ids)
    votes_pool = vote_table(oof, pool_ids)
    meta_ds = build_meta_training_set(oof, pool_labels, votes_pool, filtered=True)

    meta_skipped = False
    skip_reason = None
    predictor = None
    if len(meta_ds) == 0:
        meta_skipped, skip_reason = True, "no contradictory training samples"
    elif len({s.label for s in meta_ds.meta_samples}) < 2:
        meta_skipped, skip_reason = True, "meta-dataset holds a single class"
    else:
        predictor = _train_predictor(config, meta_ds, config.seed)

    test_avg = average_test_probabilities(table.restrict_samples(test_ids), test_ids)
    votes_test = vote_table(test_avg, test_ids)
    test_labels = {
        sid: int(labels[sid]) for sid in test_ids if labels.get(sid) is not None
    }

    result: dict = {
        "meta": {
            "source_size": meta_ds.provenance.source_size,
            "retained": meta_ds.provenance.retained,
            "filtered": True,
            "skipped": meta_skipped,
            "skip_reason": skip_reason,
        },
        "predictions": {},
    }

    vote_preds = {sid: votes_test[sid].predicted for sid in votes_test}
    result["predictions"]["voting"] = vote_preds
    if test_labels:
        result["voting"] = _metrics_block(vote_preds, test_labels, table.class_count, config.average)

    result["ensemble"] = {}
    for mode in config.modes:
        if mode is RoutingMode.LABEL:
            missing = [sid for sid in test_ids if labels.get(sid) is None]
            if missing:
                raise ModeError(
                    f"label routing requires test labels; missing for {missing[:5]!r}"
                )
            preds = voting_stacking_predict(test_avg, predictor, mode, test_labels)
        else:
            preds = voting_stacking_predict(test_avg, predictor, mode)
        result["predictions"][mode.value] = preds
        if test_labels:
            result["ensemble"][mode.value] = _metrics_block(
                preds, test_labels, table.class_count, config.average
            )
    return result


def _base_learner_sections(
    config: PipelineConfig,
    table: ProbabilityTable,
    test_avg: ProbabilityTable,
    test_labels: Mapping[str, int],
) -> list[dict]:
    sections = []
    for t in range(table.learner_count):
        per_fold: dict[str, list[float]] = {
            "accuracy": [], "precision": [], "recall": [], "f1": []
        }
        for j in range(table.fold_count):
            preds = {sid: argmax_label(table.get(sid, t, j)) for sid in test_labels}
            rep = compute_metrics(
                compute_confusion(preds, test_labels, table.class_count), config.average
            )
            per_fold["accuracy"].append(rep.accuracy)
            per_fold["precision"].append(rep.precision)
            per_fold["recall"].append(rep.recall)
            per_fold["f1"].append(rep.f1)
        avg_preds = {sid: argmax_label(test_avg.get(sid, t)) for sid in test_labels}
        sections.append(
            {
                "name": table.learner_names[t],
                "per_fold": _fold_summary(per_fold),
                "fold_averaged": _metrics_block(
                    avg_preds, test_labels, table.class_count, config.average
                ),
            }
        )
    return sections


def _ablation_grid(
    config: PipelineConfig,
    table: ProbabilityTable,
    labels: Mapping[str, int | None],
    pool_ids: Sequence[str],
    test_ids: Sequence[str],
) -> list[dict]:
    """Rows: growing voting+meta ensembles, then voting-only, meta-only, and
    the full combination at the complete roster size."""
    T = table.learner_count
    two_level = replace(config, levels=2, ablate=False, compare_metas=False)
    rows: list[dict] = []

    for size in range(1, T):
        sub = table.restrict_learners(range(size))
        res = _run_core(two_level, sub, labels, pool_ids, test_ids)
        rows.append(
            {
                "base_learner_count": size,
                "voting": True,
                "meta": True,
                "accuracy": {m: res["ensemble"][m]["accuracy"] for m in res["ensemble"]},
            }
        )

    full = _run_core(two_level, table, labels, pool_ids, test_ids)
    rows.append(
        {
            "base_learner_count": T,
            "voting": True,
            "meta": False,
            "accuracy": {"voting": full["voting"]["accuracy"]},
        }
    )

    # Meta-only: unfiltered meta-dataset, meta decides every test sample.
    pool_labels = {sid: int(labels[sid]) for sid in pool_ids}
    oof = collapse_out_of_fold(table.restrict_samples(pool_ids), pool_ids)
    votes_pool = vote_table(oof, pool_ids)
    meta_all = build_meta_training_set(oof, pool_labels, votes_pool, filtered=False)
    meta_train, meta_val = split_meta(
        meta_all, config.meta_val_fraction, child_seed(config.seed, 7)
    )
    meta_model = train_meta(meta_train, meta_val, config.meta.with_seed(child_seed(config.seed, 8)))
    test_avg = average_test_probabilities(table.restrict_samples(test_ids), test_ids)
    test_labels = {sid: int(labels[sid]) for sid in test_ids if labels.get(sid) is not None}
    stack_preds = {
        sid: argmax_label(
            meta_model.predict_proba(build_meta_features(test_avg.per_learner(sid)))
        )
        for sid in test_labels
    }
    stack_metrics = _metrics_block(stack_preds, test_labels, table.class_count, config.average)
    rows.append(
        {
            "base_learner_count": T,
            "voting": False,
            "meta": True,
            "accuracy": {"stacking": stack_metrics["accuracy"]},
        }
    )

    rows.append(
        {
            "base_learner_count": T,
            "voting": True,
            "meta": True,
            "accuracy": {m: full["ensemble"][m]["accuracy"] for m in full["ensemble"]},
        }
    )
    return rows


def _meta_comparison(
    config: PipelineConfig,
    table: ProbabilityTable,
    labels: Mapping[str, int | None],
    pool_ids: Sequence[str],
    test_ids: Sequence[str],
) -> list[dict]:
    rows = []
    candidates = [
        LearnerSpec("softmax", name="softmax_lr"),
        LearnerSpec("knn", name="knn5"),
        LearnerSpec("gnb", name="gaussian_nb"),
    ]
    for cand in candidates:
        variant = replace(config, meta=cand, levels=2, ablate=False, compare_metas=False)
        res = _run_core(variant, table, labels, pool_ids, test_ids)
        rows.append(
            {
                "meta_learner": cand.display_name,
                "accuracy": {m: res["ensemble"][m]["accuracy"] for m in res["ensemble"]},
            }
        )
    return rows


def run_pipeline(
    config: PipelineConfig,
    dataset: Dataset | None = None,
    table: ProbabilityTable | None = None,
    labels: Mapping[str, int | None] | None = None,
) -> dict:
    """Full evaluation: split, folds, base training (or an ingested table),
    voting, meta construction and training, routing in every configured mode,
    metrics, and the optional ablation / meta-comparison grids.
    """
    if (dataset is None) == (table is None):
        raise ConfigError("exactly one of (dataset, table) must be supplied")
    started = time.monotonic()
    timing: dict[str, float] = {}

    if dataset is not None:
        plan = plan_evaluation(
            dataset,
            config.test_fraction,
            config.k,
            config.seed,
            config.stratified,
            config.fold_val_fraction,
        )
        t0 = time.monotonic()
        table = collect_fold_probabilities(plan, config.learners, dataset, config.jobs)
        timing["base_training_seconds"] = time.monotonic() - t0
        labels = dataset.labels_by_id()
        pool_ids, test_ids = list(plan.pool_ids), list(plan.test_ids)
        plan_info = {"k": plan.k, "stratified": plan.stratified, "warnings": list(plan.warnings)}
    else:
        if labels is None:
            raise ConfigError("labels are required when running from a table")
        pool_ids, test_ids = _derive_table_roles(table)
        plan_info = {"k": table.fold_count, "stratified": None, "warnings": []}

    t0 = time.monotonic()
    core = _run_core(config, table, labels, pool_ids, test_ids)
    timing["ensemble_seconds"] = time.monotonic() - t0

    test_avg = average_test_probabilities(table.restrict_samples(test_ids), test_ids)
    test_labels = {sid: int(labels[sid]) for sid in test_ids if labels.get(sid) is not None}

    report: dict = {
        "config": {
            "test_fraction": config.test_fraction,
            "k": plan_info["k"],
            "seed": config.seed,
            "levels": config.levels,
            "modes": [m.value for m in config.modes],
            "average": config.average,
            "learners": list(table.learner_names),
            "meta_learner": config.meta.display_name,
        },
        "dataset": {
            "class_count": table.class_count,
            "learner_count": table.learner_count,
            "train_pool": len(pool_ids),
            "test_size": len(test_ids),
            "labeled_test": len(test_labels),
        },
        "plan": plan_info,
        "meta": core["meta"],
        "ensemble": core["ensemble"],
        "predictions": core["predictions"],
        "seeds": {"root": config.seed},
    }
    if "voting" in core:
        report["voting"] = core["voting"]
    if test_labels:
        report["base_learners"] = _base_learner_sections(config, table, test_avg, test_labels)
    if config.ablate:
        t0 = time.monotonic()
        report["ablation"] = _ablation_grid(config, table, labels, pool_ids, test_ids)
        timing["ablation_seconds"] = time.monotonic() - t0
    if config.compare_metas:
        report["meta_comparison"] = _meta_comparison(config, table, labels, pool_ids, test_ids)
    if config.levels == 3:
        report["multilevel"] = {
            "level2": [s.display_name for s in config.level2],
            "super_learner": config.super_learner.display_name,
        }

    timing["total_seconds"] = time.monotonic() - started
    report["timing"] = timing
    return report
