"""Binarisation, Dice score, voting ensembles and threshold grid search for
scoring predicted phase fields against ground truth."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

THRESHOLD_RANGE = (0.1, 0.6)
THRESHOLD_STEP = 0.05


@dataclass(frozen=True)
class ThresholdPair:
    thr_pred: float
    thr_gt: float

    def __post_init__(self):
        lo, hi = THRESHOLD_RANGE
        for v in (self.thr_pred, self.thr_gt):
            if not lo - 1e-12 <= v <= hi + 1e-12:
                raise ValueError(f"threshold {v} outside the search range {THRESHOLD_RANGE}")


def binarize(field, thr: float) -> np.ndarray:
    """Mask of values strictly above ``thr``."""
    return np.asarray(field) > thr


def _same_shape(items: Sequence[np.ndarray]):
    shapes = {np.shape(a) for a in items}
    if len(shapes) != 1:
        raise ValueError(f"shape mismatch: {sorted(shapes)}")


def dice(pred, gt) -> float:
    """``2 |P & G| / (|P| + |G|)``; two empty masks score 1."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    _same_shape([pred, gt])
    total = int(pred.sum()) + int(gt.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(pred, gt).sum()) / total


def hard_vote(masks: Sequence) -> np.ndarray:
    """Pixel is set when strictly more than half of the masks set it."""
    if len(masks) == 0:
        raise ValueError("hard_vote needs at least one mask")
    masks = [np.asarray(m, dtype=bool) for m in masks]
    _same_shape(masks)
    votes = np.sum(masks, axis=0)
    return 2 * votes > len(masks)


def soft_vote(fields: Sequence) -> np.ndarray:
    """Pixelwise mean of the model fields."""
    if len(fields) == 0:
        raise ValueError("soft_vote needs at least one field")
    fields = [np.asarray(f, dtype=float) for f in fields]
    _same_shape(fields)
    return np.mean(fields, axis=0)


def threshold_grid(step: float = THRESHOLD_STEP, lo: float = THRESHOLD_RANGE[0],
                   hi: float = THRESHOLD_RANGE[1]) -> np.ndarray:
    n = int(round((hi - lo) / step))
    return np.round(lo + step * np.arange(n + 1), 12)


def predict_mask(pred, thr_pred: float, mode: str = "single") -> np.ndarray:
    """Binary prediction for one sample.

    ``mode="single"`` binarises one field; ``"soft"`` binarises the mean of a
    list of model fields; ``"hard"`` binarises each model and takes the
    majority.
    """
    if mode == "single":
        return binarize(pred, thr_pred)
    if mode == "soft":
        return binarize(soft_vote(pred), thr_pred)
    if mode == "hard":
        return hard_vote([binarize(f, thr_pred) for f in pred])
    raise ValueError(f"unknown evaluation mode {mode!r}")


def dice_grid(preds: Sequence, gts: Sequence, step: float = THRESHOLD_STEP, mode: str = "single") -> np.ndarray:
    """Mean Dice over the set for every (thr_gt, thr_pred) grid pair.

    Entry ``[i, j]`` uses ``thr_gt = grid[i]`` and ``thr_pred = grid[j]``.
    """
    if len(preds) == 0 or len(preds) != len(gts):
        raise ValueError("need equally sized, non-empty prediction and target sets")
    grid = threshold_grid(step)
    scores = np.zeros((len(grid), len(grid)))
    for p, g in zip(preds, gts):
        g = np.asarray(g)
        pm = [predict_mask(p, t, mode) for t in grid]
        for i, tg in enumerate(grid):
            gm = binarize(g, tg)
            for j in range(len(grid)):
                scores[i, j] += dice(pm[j], gm)
    return scores / len(preds)


def threshold_search(preds: Sequence, gts: Sequence, step: float = THRESHOLD_STEP,
                     mode: str = "single") -> tuple[ThresholdPair, float]:
    """Exhaustive search for the threshold pair maximising mean Dice.

    Ties go to the lexicographically smallest ``(thr_gt, thr_pred)``.
    """
    scores = dice_grid(preds, gts, step, mode)
    grid = threshold_grid(step)
    # row-major argmax returns the first maximiser: smallest thr_gt, then thr_pred
    i, j = np.unravel_index(int(np.argmax(scores)), scores.shape)
    return ThresholdPair(thr_pred=float(grid[j]), thr_gt=float(grid[i])), float(scores[i, j])
