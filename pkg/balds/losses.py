"""Training costs: weighted soft DICE (multi-label), cross-entropy (single-label) and the masked sequence cost."""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import numpy.typing as npt

from balds.error import BALDSLabelError, BALDSShapeError
from balds.network import NumericArray

DICE_EPS = 1e-6
PROBABILITY_FLOOR = 1e-12


def dice_class_weights(labels: npt.ArrayLike) -> NumericArray:
    """
    Inverse class frequency of a labeled set, normalized to mean 1.

    Frequencies are Laplace-smoothed, `w_c ∝ (N + 2) / (n_c + 1)`, so a class
    absent from the labeled set still gets a finite (largest) weight.
    """
    labels = np.asarray(labels, dtype=np.float64)
    if labels.ndim != 2:
        raise BALDSShapeError(f"labels of shape {labels.shape}; expected (N, C)")
    counts = labels.sum(axis=0)
    raw = (labels.shape[0] + 2.0) / (counts + 1.0)
    return np.asarray(raw / raw.mean(), dtype=np.float64)


def _check_dice_inputs(
    pred: NumericArray, target: NumericArray, class_weights: NumericArray
) -> None:
    if pred.shape != target.shape:
        raise BALDSShapeError(
            f"prediction shape {pred.shape} differs from target shape {target.shape}"
        )
    if class_weights.shape != (pred.shape[-1],):
        raise BALDSShapeError(
            f"{class_weights.shape[0]} class weights for {pred.shape[-1]} classes"
        )
    if np.any(class_weights < 0) or not np.any(class_weights > 0):
        raise BALDSLabelError("class weights must be nonnegative and not all zero")
    if np.any((target != 0) & (target != 1)):
        raise BALDSLabelError("DICE targets must be binary")


def dice_loss_and_grad(
    pred: npt.ArrayLike,
    target: npt.ArrayLike,
    class_weights: Optional[npt.ArrayLike] = None,
    eps: float = DICE_EPS,
) -> Tuple[float, NumericArray]:
    """Weighted soft DICE loss over a batch and its gradient with respect to `pred`."""
    p = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    g = np.atleast_2d(np.asarray(target, dtype=np.float64))
    w = (
        np.ones(p.shape[-1])
        if class_weights is None
        else np.asarray(class_weights, dtype=np.float64)
    )
    _check_dice_inputs(p, g, w)

    intersection = np.sum(p * g, axis=0)
    denominator = np.sum(p, axis=0) + np.sum(g, axis=0) + eps
    dice = (2.0 * intersection + eps) / denominator
    total_weight = w.sum()
    loss = float(np.sum(w * (1.0 - dice)) / total_weight)

    grad = (
        -(w / total_weight)
        * (2.0 * g * denominator - (2.0 * intersection + eps))
        / (denominator * denominator)
    )
    return loss, np.reshape(grad, np.shape(pred))


def dice_loss(
    pred: npt.ArrayLike,
    target: npt.ArrayLike,
    class_weights: Optional[npt.ArrayLike] = None,
    eps: float = DICE_EPS,
) -> float:
    """
    Weighted soft DICE loss.

    Per class `c`, `dice_c = (2 Σ p g + eps) / (Σ p + Σ g + eps)` with the sums
    running over the batch; the loss is `Σ_c w_c (1 - dice_c) / Σ_c w_c`.
    """
    loss, _ = dice_loss_and_grad(pred, target, class_weights, eps)
    return loss


def _check_targets(target: npt.NDArray[np.int64], num_classes: int) -> None:
    if np.any(target < 0) or np.any(target >= num_classes):
        raise BALDSLabelError(f"target class outside [0, {num_classes})")


def cross_entropy(pred: npt.ArrayLike, target: int) -> float:
    """`-log pred[target]` for one softmax vector, with `pred` clamped at 1e-12."""
    p = np.asarray(pred, dtype=np.float64)
    if p.ndim != 1:
        raise BALDSShapeError(f"prediction of shape {p.shape}; expected (C,)")
    _check_targets(np.asarray([target], dtype=np.int64), p.shape[0])
    return float(-np.log(max(p[target], PROBABILITY_FLOOR)))


def cross_entropy_costs(
    pred: npt.ArrayLike, targets: npt.ArrayLike
) -> Tuple[NumericArray, NumericArray]:
    """
    Per-frame cross-entropy and its gradient with respect to `pred`.

    `pred` has shape (..., C) and `targets` the leading shape (...). The gradient
    of frame i's cost is `-1 / pred[i, target_i]` on the target class and zero
    elsewhere.
    """
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(targets, dtype=np.int64)
    if p.shape[:-1] != t.shape:
        raise BALDSShapeError(
            f"targets of shape {t.shape} for predictions of shape {p.shape}"
        )
    _check_targets(t, p.shape[-1])
    picked = np.take_along_axis(p, t[..., np.newaxis], axis=-1)[..., 0]
    clamped = np.maximum(picked, PROBABILITY_FLOOR)
    costs = -np.log(clamped)
    grad = np.zeros_like(p)
    np.put_along_axis(grad, t[..., np.newaxis], (-1.0 / clamped)[..., np.newaxis], axis=-1)
    return costs, grad


@dataclass(frozen=True)
class MaskedLoss:
    """
    A masked mean cost.

    Attributes:
        value: Mean cost over annotated frames (0 when none are annotated)
        frame_weights: Derivative of `value` with respect to each frame cost, `mask / mask.sum()`
        empty: True when no frame is annotated, so there is no gradient

    """

    value: float
    frame_weights: NumericArray
    empty: bool


def masked_sequence_loss(costs: npt.ArrayLike, mask: npt.ArrayLike) -> MaskedLoss:
    """Mean frame cost over the frames whose mask is 1."""
    c = np.asarray(costs, dtype=np.float64)
    m = np.asarray(mask).astype(np.float64)
    if c.shape != m.shape:
        raise BALDSShapeError(
            f"{c.shape} frame costs for an annotation mask of shape {m.shape}"
        )
    annotated = m.sum()
    if annotated == 0:
        return MaskedLoss(0.0, np.zeros_like(c), True)
    weights = m / annotated
    # Masked frames contribute exactly 0, whatever their cost
    value = float(np.sum(np.where(m > 0, c, 0.0)) / annotated)
    return MaskedLoss(value, weights, False)
