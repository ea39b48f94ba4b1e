"""Evaluation metrics: support-weighted F1 and accuracy for single- and multi-label predictions."""

from typing import List, Tuple

import numpy as np
import numpy.typing as npt
from sklearn.metrics import accuracy_score, f1_score

from balds.error import BALDSShapeError

DECISION_THRESHOLD = 0.5


def _decisions(
    predictions: npt.ArrayLike, labels: npt.ArrayLike
) -> Tuple[npt.NDArray[np.int64], npt.NDArray[np.int64], bool]:
    """
    Bring predictions and labels to comparable integer decisions.

    2-D labels are multi-label: predictions are thresholded at 0.5. 1-D labels
    are class indices: 2-D predictions are reduced by argmax.
    """
    pred = np.asarray(predictions)
    true = np.asarray(labels)
    if pred.shape[0] != true.shape[0]:
        raise BALDSShapeError(f"{pred.shape[0]} predictions for {true.shape[0]} labels")
    if pred.shape[0] == 0:
        raise BALDSShapeError("cannot score an empty prediction set")
    if true.ndim == 2:
        if pred.shape != true.shape:
            raise BALDSShapeError(f"predictions {pred.shape} for labels {true.shape}")
        return (pred >= DECISION_THRESHOLD).astype(np.int64), true.astype(np.int64), True
    if pred.ndim == 2:
        pred = np.argmax(pred, axis=-1)
    return pred.astype(np.int64), true.astype(np.int64), False


def weighted_f1(predictions: npt.ArrayLike, labels: npt.ArrayLike) -> float:
    """Per-class F1 averaged with class-support weights; zero-support classes carry no weight."""
    pred, true, _ = _decisions(predictions, labels)
    return float(f1_score(true, pred, average="weighted", zero_division=0))


def per_class_f1(
    predictions: npt.ArrayLike, labels: npt.ArrayLike, num_classes: int
) -> List[float]:
    pred, true, multilabel = _decisions(predictions, labels)
    if multilabel:
        scores = f1_score(true, pred, average=None, zero_division=0)
    else:
        scores = f1_score(
            true, pred, labels=list(range(num_classes)), average=None, zero_division=0
        )
    return [float(s) for s in scores]


def accuracy(predictions: npt.ArrayLike, labels: npt.ArrayLike) -> float:
    """Fraction of correct frames; multi-label counts every (frame, class) decision."""
    pred, true, multilabel = _decisions(predictions, labels)
    if multilabel:
        return float(np.mean(pred == true))
    return float(accuracy_score(true, pred))
