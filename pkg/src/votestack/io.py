"""Interchange formats: probability-table CSV (the contract with external
probability exporters), dataset manifests and feature CSVs, fold-plan files,
softmax model snapshots, prediction files, and evaluation reports.

Reals are serialized with 17 significant digits so that a write/read round
trip reproduces every float bit-exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import SINGLE_FOLD, Dataset, ProbabilityTable
from .errors import (
    DuplicateRowError,
    NormalizationError,
    ProbabilityRangeError,
    SchemaError,
    TableParseError,
)
from .evalharness import FoldAssignment, FoldPlan
from .learners import SoftmaxModel

# External producers round their probabilities, so ingestion tolerates a sum
# error up to 1e-6 and renormalizes after acceptance. Sums already within
# 1e-12 of 1 are left untouched: dividing them would only inject last-ulp
# noise and break the bit-exact round-trip law.
INGEST_SUM_TOL = 1e-6
EXACT_SUM_TOL = 1e-12

FOLD_SENTINEL = "single"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _fold_to_text(fold: int) -> str:
    return FOLD_SENTINEL if fold == SINGLE_FOLD else str(fold)


def _fold_from_text(text: str, line_number: int) -> int:
    if text == FOLD_SENTINEL:
        return SINGLE_FOLD
    try:
        fold = int(text)
    except ValueError:
        raise TableParseError(
            f"line {line_number}: fold must be an integer or '{FOLD_SENTINEL}', got {text!r}",
            line_number,
        ) from None
    if fold < 0:
        raise TableParseError(f"line {line_number}: fold must be >= 0", line_number)
    return fold


def write_probability_table(
    table: ProbabilityTable, labels: Mapping[str, int | None], path
) -> None:
    """One CSV row per (sample, learner, fold); label may be empty (unlabeled)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["sample_id", "learner", "fold", "label"]
            + [f"p_{i}" for i in range(table.class_count)]
        )
        for (sid, t, fold), vec in table.items():
            label = labels.get(sid)
            writer.writerow(
                [sid, table.learner_names[t], _fold_to_text(fold), "" if label is None else int(label)]
                + [_fmt(v) for v in vec]
            )


def read_probability_table(path) -> tuple[ProbabilityTable, dict[str, int | None]]:
    """Parse and validate a probability-table CSV.

    Rows whose probabilities sum outside 1 +- 1e-6 are rejected with their
    line number; accepted rows are renormalized to an exact simplex. Returns
    the table plus the per-sample label mapping (None where the label field
    was left empty).
    """
    path = Path(path)
    rows = []
    with path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TableParseError("empty file", 1) from None
        if header[:4] != ["sample_id", "learner", "fold", "label"]:
            raise SchemaError(
                f"bad header {header[:4]!r}, expected sample_id, learner, fold, label"
            )
        prob_cols = header[4:]
        expected = [f"p_{i}" for i in range(len(prob_cols))]
        if not prob_cols or prob_cols != expected:
            raise SchemaError(f"bad probability columns {prob_cols!r}")
        class_count = len(prob_cols)
        if class_count < 2:
            raise SchemaError("a probability table needs at least two classes")

        for line_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4 + class_count:
                raise TableParseError(
                    f"line {line_number}: expected {4 + class_count} fields, got {len(row)}",
                    line_number,
                )
            sid, learner, fold_text, label_text = row[0], row[1], row[2], row[3]
            fold = _fold_from_text(fold_text, line_number)
            if label_text == "":
                label = None
            else:
                try:
                    label = int(label_text)
                except ValueError:
                    raise TableParseError(
                        f"line {line_number}: label must be an integer, got {label_text!r}",
                        line_number,
                    ) from None
                if not (0 <= label < class_count):
                    raise TableParseError(
                        f"line {line_number}: label {label} outside [0, {class_count})",
                        line_number,
                    )
            try:
                probs = np.array([float(v) for v in row[4:]], dtype=np.float64)
            except ValueError:
                raise TableParseError(
                    f"line {line_number}: non-numeric probability", line_number
                ) from None
            if not np.isfinite(probs).all():
                raise TableParseError(
                    f"line {line_number}: non-finite probability", line_number
                )
            if (probs < 0).any():
                raise ProbabilityRangeError(
                    f"line {line_number}: negative probability {probs.min()!r}"
                )
            total = float(probs.sum())
            if abs(total - 1.0) > INGEST_SUM_TOL:
                raise NormalizationError(
                    f"line {line_number}: probabilities sum to {total!r}, "
                    f"outside 1 +- {INGEST_SUM_TOL:g}",
                    observed_sum=total,
                )
            if abs(total - 1.0) > EXACT_SUM_TOL:
                probs = probs / total
            rows.append((line_number, sid, learner, fold, label, probs))

    if not rows:
        raise TableParseError("table has no data rows", 2)

    learner_names = sorted({r[2] for r in rows})
    learner_index = {name: i for i, name in enumerate(learner_names)}
    fold_values = [r[3] for r in rows if r[3] != SINGLE_FOLD]
    fold_count = (max(fold_values) + 1) if fold_values else 0

    table = ProbabilityTable(len(learner_names), fold_count, class_count, learner_names)
    labels: dict[str, int | None] = {}
    seen: set[tuple[str, int, int]] = set()
    for line_number, sid, learner, fold, label, probs in rows:
        key = (sid, learner_index[learner], fold)
        if key in seen:
            raise DuplicateRowError(
                f"line {line_number}: duplicate key (sample {sid!r}, learner {learner!r}, "
                f"fold {_fold_to_text(fold)})"
            )
        seen.add(key)
        if sid in labels and labels[sid] is not None and label is not None and labels[sid] != label:
            raise TableParseError(
                f"line {line_number}: sample {sid!r} labeled both {labels[sid]} and {label}",
                line_number,
            )
        if sid not in labels or labels[sid] is None:
            labels[sid] = label
        table.put(sid, learner_index[learner], fold, probs)
    return table, labels


def merge_probability_tables(
    parts: Sequence[tuple[ProbabilityTable, Mapping[str, int | None]]]
) -> tuple[ProbabilityTable, dict[str, int | None]]:
    """Union tables over disjoint learner names (one exporter run per file)."""
    if not parts:
        raise SchemaError("nothing to merge")
    class_count = parts[0][0].class_count
    fold_count = max(t.fold_count for t, _ in parts)
    names: list[str] = []
    for t, _ in parts:
        if t.class_count != class_count:
            raise SchemaError("tables disagree on class count")
        for name in t.learner_names:
            if name in names:
                raise SchemaError(f"duplicate learner name {name!r} across tables")
            names.append(name)
    merged = ProbabilityTable(len(names), fold_count, class_count, names)
    labels: dict[str, int | None] = {}
    offset = 0
    for t, part_labels in parts:
        for (sid, learner, fold), vec in t.items():
            merged.put(sid, learner + offset, fold, vec)
        for sid, label in part_labels.items():
            if sid in labels and labels[sid] is not None and label is not None and labels[sid] != label:
                raise SchemaError(f"sample {sid!r} labeled inconsistently across tables")
            if sid not in labels or labels[sid] is None:
                labels[sid] = label
        offset += t.learner_count
    return merged, labels


def write_manifest(dataset: Dataset, path, name: str = "dataset", notes: str = "") -> None:
    payload = {
        "name": name,
        "class_count": dataset.class_count,
        "class_names": dataset.class_names,
        "feature_dim": dataset.feature_dim,
        "sample_count": len(dataset),
        "notes": notes,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_manifest(path) -> dict:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"manifest is not valid JSON: {exc}") from exc
    for key in ("class_count", "feature_dim", "sample_count"):
        if key not in payload:
            raise SchemaError(f"manifest missing field {key!r}")
    if payload.get("class_names") is not None:
        if len(payload["class_names"]) != payload["class_count"]:
            raise SchemaError("manifest class_names length must equal class_count")
    return payload


def write_features(dataset: Dataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "label"] + [f"f_{i}" for i in range(dataset.feature_dim)])
        for i, sid in enumerate(dataset.ids):
            writer.writerow(
                [sid, int(dataset.labels[i])] + [_fmt(v) for v in dataset.features[i]]
            )


def read_dataset(manifest_path, features_path) -> Dataset:
    """Load a manifest + feature CSV pair, checking them against each other."""
    manifest = read_manifest(manifest_path)
    expected_dim = int(manifest["feature_dim"])
    class_count = int(manifest["class_count"])

    ids, labels, rows = [], [], []
    with Path(features_path).open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TableParseError("empty features file", 1) from None
        if header[:2] != ["sample_id", "label"]:
            raise SchemaError(f"bad features header {header[:2]!r}")
        if len(header) - 2 != expected_dim:
            raise SchemaError(
                f"features file has {len(header) - 2} feature columns, "
                f"manifest declares {expected_dim}"
            )
        for line_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 + expected_dim:
                raise TableParseError(
                    f"line {line_number}: expected {2 + expected_dim} fields, got {len(row)}",
                    line_number,
                )
            ids.append(row[0])
            try:
                labels.append(int(row[1]))
                rows.append([float(v) for v in row[2:]])
            except ValueError:
                raise TableParseError(
                    f"line {line_number}: non-numeric label or feature", line_number
                ) from None
    if len(ids) != int(manifest["sample_count"]):
        raise SchemaError(
            f"features file has {len(ids)} samples, manifest declares {manifest['sample_count']}"
        )
    features = np.array(rows, dtype=np.float64).reshape(len(ids), expected_dim)
    return Dataset(ids, features, labels, class_count, manifest.get("class_names"))


def write_dataset(dataset: Dataset, manifest_path, features_path, name: str = "dataset") -> None:
    write_manifest(dataset, manifest_path, name)
    write_features(dataset, features_path)


def write_fold_plan(plan: FoldPlan, path) -> None:
    payload = {
        "k": plan.k,
        "seed": plan.seed,
        "stratified": plan.stratified,
        "test_ids": list(plan.test_ids),
        "folds": [
            {
                "train_ids": list(f.train_ids),
                "val_ids": list(f.val_ids),
                "heldout_ids": list(f.heldout_ids),
            }
            for f in plan.folds
        ],
        "warnings": list(plan.warnings),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_fold_plan(path) -> FoldPlan:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"fold plan is not valid JSON: {exc}") from exc
    try:
        folds = tuple(
            FoldAssignment(
                tuple(f["train_ids"]), tuple(f["val_ids"]), tuple(f["heldout_ids"])
            )
            for f in payload["folds"]
        )
        plan = FoldPlan(
            tuple(payload["test_ids"]),
            folds,
            int(payload["k"]),
            int(payload["seed"]),
            bool(payload["stratified"]),
            tuple(payload.get("warnings", [])),
        )
    except KeyError as exc:
        raise SchemaError(f"fold plan missing field {exc}") from exc
    plan.validate()
    return plan


def write_model(model: SoftmaxModel, path) -> None:
    """Snapshot: flat weight list plus the shape header."""
    payload = {
        "kind": "softmax",
        "class_count": model.class_count,
        "feature_dim": model.feature_dim,
        "weights": [float(v) for v in model.weights.ravel()],
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_model(path) -> SoftmaxModel:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"model snapshot is not valid JSON: {exc}") from exc
    if payload.get("kind") != "softmax":
        raise SchemaError(f"unsupported model kind {payload.get('kind')!r}")
    c, d = int(payload["class_count"]), int(payload["feature_dim"])
    weights = np.array(payload["weights"], dtype=np.float64)
    if weights.size != c * (d + 1):
        raise SchemaError(
            f"weight count {weights.size} does not match shape ({c}, {d + 1})"
        )
    return SoftmaxModel(weights.reshape(c, d + 1), c, d)


def write_predictions(preds: Mapping[str, int], path, labels: Mapping[str, int] | None = None) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "predicted", "label"])
        for sid in sorted(preds):
            label = "" if labels is None or labels.get(sid) is None else int(labels[sid])
            writer.writerow([sid, int(preds[sid]), label])


def read_predictions(path) -> tuple[dict[str, int], dict[str, int]]:
    preds: dict[str, int] = {}
    labels: dict[str, int] = {}
    with Path(path).open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["sample_id", "predicted"]:
            raise SchemaError(f"bad predictions header {header!r}")
        for line_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2:
                raise TableParseError(f"line {line_number}: expected >= 2 fields", line_number)
            try:
                preds[row[0]] = int(row[1])
                if len(row) > 2 and row[2] != "":
                    labels[row[0]] = int(row[2])
            except ValueError:
                raise TableParseError(
                    f"line {line_number}: non-integer prediction or label", line_number
                ) from None
    return preds, labels


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_report(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"report is not valid JSON: {exc}") from exc
