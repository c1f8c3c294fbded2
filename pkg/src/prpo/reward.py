"""Verifiable rule-based rewards.

Rewards live on exactly three levels: 1.0 for a correct answer, 0.1 for
a well-formatted but wrong one, 0.0 for malformed output. Regression
counts as correct when the normalized absolute error is strictly below
0.1, where the normalizer is the train-split label range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateRangeError
from .serialize import KIND_NUMBER, ExtractedAnswer

CORRECT = "correct"
FORMATTED_WRONG = "formatted_wrong"
MALFORMED = "malformed"

_VALUE_BY_BRANCH = {CORRECT: 1.0, FORMATTED_WRONG: 0.1, MALFORMED: 0.0}

NMAE_CORRECT_THRESHOLD = 0.1


@dataclass(frozen=True)
class RewardRecord:
    value: float
    branch: str  # CORRECT | FORMATTED_WRONG | MALFORMED
    nmae: float | None = None

    def __post_init__(self):
        if self.branch not in _VALUE_BY_BRANCH:
            raise ValueError(f"unknown branch {self.branch!r}")
        if self.value != _VALUE_BY_BRANCH[self.branch]:
            raise ValueError(f"value {self.value} inconsistent with branch {self.branch}")


def nmae(y_true: float, y_pred: float, label_range: tuple[float, float]) -> float:
    """Absolute error normalized by the label range; may exceed 1."""
    lo, hi = label_range
    if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
        raise DegenerateRangeError(f"label_range must satisfy min < max, got {label_range}")
    if not (math.isfinite(y_true) and math.isfinite(y_pred)):
        raise ValueError("nmae inputs must be finite")
    return abs(y_true - y_pred) / (hi - lo)


def classification_reward(answer: ExtractedAnswer, y_true: str) -> RewardRecord:
    """1.0 on case-folded match, 0.1 when formatted but wrong, else 0.0."""
    if not answer.well_formatted:
        return RewardRecord(0.0, MALFORMED)
    predicted = answer.label if answer.label is not None else answer.raw
    if predicted.strip().casefold() == y_true.strip().casefold():
        return RewardRecord(1.0, CORRECT)
    return RewardRecord(0.1, FORMATTED_WRONG)


def regression_reward(
    answer: ExtractedAnswer, y_true: float, label_range: tuple[float, float]
) -> RewardRecord:
    """1.0 when nmae < 0.1, 0.1 for any other valid number, else 0.0."""
    if answer.kind != KIND_NUMBER or answer.value is None:
        return RewardRecord(0.0, MALFORMED)
    error = nmae(y_true, answer.value, label_range)
    if error < NMAE_CORRECT_THRESHOLD:
        return RewardRecord(1.0, CORRECT, nmae=error)
    return RewardRecord(0.1, FORMATTED_WRONG, nmae=error)
