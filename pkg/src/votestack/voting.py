"""Soft voting: entrywise mean of per-learner probability vectors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import SINGLE_FOLD, ProbabilityTable, argmax_label, validate_probability_vector
from .errors import ShapeError


@dataclass(frozen=True)
class VoteResult:
    averaged: np.ndarray
    predicted: int
    per_learner: tuple[np.ndarray, ...]


def soft_vote(per_learner: Sequence[np.ndarray]) -> VoteResult:
    """Average the T vectors with uniform 1/T weights and take the argmax."""
    if len(per_learner) < 1:
        raise ShapeError("soft_vote needs at least one probability vector")
    vecs = [validate_probability_vector(p) for p in per_learner]
    c = vecs[0].shape[0]
    if any(v.shape[0] != c for v in vecs):
        raise ShapeError("per-learner vectors disagree on class count")
    averaged = validate_probability_vector(np.mean(np.stack(vecs), axis=0))
    return VoteResult(averaged, argmax_label(averaged), tuple(vecs))


def vote_table(
    table: ProbabilityTable, sample_ids: Sequence[str]
) -> dict[str, VoteResult]:
    """Apply soft_vote per sample on a fold-collapsed table.

    Requires every (sample, learner) entry at the SINGLE fold key; a missing
    entry raises with the hole named.
    """
    out: dict[str, VoteResult] = {}
    for sid in sorted(str(s) for s in sample_ids):
        out[sid] = soft_vote(table.per_learner(sid, SINGLE_FOLD))
    return out
