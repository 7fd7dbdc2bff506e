"""Reader for the engine's fold-plan JSON files (the split contract)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .config import ExportConfigError


@dataclass(frozen=True)
class Fold:
    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]
    heldout_ids: tuple[str, ...]


@dataclass(frozen=True)
class FoldPlan:
    k: int
    seed: int
    test_ids: tuple[str, ...]
    folds: tuple[Fold, ...]

    @property
    def pool_ids(self) -> tuple[str, ...]:
        return tuple(sorted(sid for f in self.folds for sid in f.heldout_ids))

    def all_ids(self) -> set[str]:
        ids = set(self.test_ids)
        for fold in self.folds:
            ids.update(fold.train_ids, fold.val_ids, fold.heldout_ids)
        return ids


def read_fold_plan(path) -> FoldPlan:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ExportConfigError(f"fold plan {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ExportConfigError(f"fold plan is not valid JSON: {exc}") from None
    try:
        folds = tuple(
            Fold(tuple(f["train_ids"]), tuple(f["val_ids"]), tuple(f["heldout_ids"]))
            for f in payload["folds"]
        )
        plan = FoldPlan(int(payload["k"]), int(payload["seed"]), tuple(payload["test_ids"]), folds)
    except KeyError as exc:
        raise ExportConfigError(f"fold plan missing field {exc}") from None
    if plan.k != len(plan.folds):
        raise ExportConfigError(f"fold plan declares k={plan.k} but holds {len(plan.folds)} folds")
    return plan
