"""Writer for the probability-table CSV consumed by the ensemble engine.

Header: sample_id, learner, fold, label, p_0 ... p_{c-1}; the fold column is
an integer or the sentinel "single"; reals carry 17 significant digits.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

import numpy as np

FOLD_SENTINEL = "single"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_table_rows(
    path,
    class_count: int,
    rows: Iterable[tuple[str, str, int | None, int | None, np.ndarray]],
) -> int:
    """Rows are (sample_id, learner, fold or None, label or None, probs)."""
    path = Path(path)
    count = 0
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["sample_id", "learner", "fold", "label"] + [f"p_{i}" for i in range(class_count)]
        )
        for sample_id, learner, fold, label, probs in rows:
            probs = np.asarray(probs, dtype=np.float64)
            if probs.shape != (class_count,):
                raise ValueError(f"row for {sample_id!r} has shape {probs.shape}")
            total = probs.sum()
            if abs(total - 1.0) > 1e-6:
                raise ValueError(f"row for {sample_id!r} sums to {total!r}")
            writer.writerow(
                [
                    sample_id,
                    learner,
                    FOLD_SENTINEL if fold is None else int(fold),
                    "" if label is None else int(label),
                ]
                + [_fmt(v) for v in probs]
            )
            count += 1
    return count
