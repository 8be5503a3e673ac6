"""Segmentation overlap metrics."""

import numpy as np

from ..errors import ShapeMismatchError

THRESHOLD = 0.5


def binarize(values: np.ndarray, threshold: float = THRESHOLD) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) >= threshold


def dice_score(pred: np.ndarray, gt: np.ndarray, threshold: float = THRESHOLD) -> float:
    """2|A∩B| / (|A| + |B|) after thresholding; 1.0 when both masks are empty."""
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatchError("dice_score", pred.shape, gt.shape)
    a, b = binarize(pred, threshold), binarize(gt, threshold)
    size = int(a.sum()) + int(b.sum())
    if size == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / size
