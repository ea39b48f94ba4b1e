"""
Train-from-scratch loops and test-time prediction.

Frame networks are trained on annotated frames with the weighted DICE loss;
recurrent networks are trained on whole (partially annotated) videos with the
masked cross-entropy, so unannotated frames still drive the hidden state but
contribute no cost.
"""

from dataclasses import dataclass, field
from typing import List, Literal, Sequence, Tuple

import numpy as np

from balds.balds_config import ExperimentConfig, TaskName
from balds.bayes import TRAINING_STREAM, mc_forward, mc_forward_sequence, posterior_mean, sample_masks
from balds.error import BALDSNumericalError
from balds.logger import balds_logger
from balds.losses import (
    cross_entropy_costs,
    dice_class_weights,
    dice_loss_and_grad,
    masked_sequence_loss,
)
from balds.network import (
    Head,
    NetworkSpec,
    NumericArray,
    ParameterStore,
    backward,
    forward,
    frame_network,
    sequence_network,
)
from balds.optimizer import adam_step
from balds.pool import Video

SHUFFLE_STREAM = 21

StopReason = Literal["threshold", "epoch_cap", "empty"]


@dataclass(frozen=True)
class TrainingSettings:
    max_epochs: int
    cost_threshold: float
    learning_rate: float
    weight_decay: float
    batch_size: int

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> "TrainingSettings":
        learning_rate = config["learning_rate"]
        assert learning_rate is not None
        return cls(
            config["max_epochs"],
            config["cost_threshold"],
            learning_rate,
            config["weight_decay"],
            config["batch_size"],
        )


@dataclass
class TrainingReport:
    epochs: int
    final_cost: float
    stop_reason: StopReason
    costs: List[float] = field(default_factory=list)


def build_network(
    task: TaskName, feature_dim: int, num_classes: int, dropout: float
) -> NetworkSpec:
    """Sigmoid frame network for the multi-label task, softmax recurrent network for phases."""
    if task == "multilabel":
        return frame_network(feature_dim, num_classes, p=dropout, head=Head.SIGMOID)
    return sequence_network(feature_dim, num_classes, p=dropout, head=Head.SOFTMAX)


def _finish(epoch: int, cost: float, settings: TrainingSettings, costs: List[float]) -> bool:
    if not np.isfinite(cost):
        raise BALDSNumericalError(f"training cost became {cost} in epoch {epoch + 1}")
    balds_logger.debug(f"Epoch {epoch + 1}: mean cost {cost:.6g}")
    costs.append(cost)
    return cost < settings.cost_threshold


def train_frames(
    spec: NetworkSpec,
    params: ParameterStore,
    features: NumericArray,
    labels: NumericArray,
    settings: TrainingSettings,
    seed: int,
) -> TrainingReport:
    """
    Minimize the weighted DICE loss over shuffled mini-batches.

    Class weights come from the label frequencies of the whole training set;
    every mini-batch draws its own dropout masks.
    """
    count = features.shape[0]
    if count == 0:
        return TrainingReport(0, 0.0, "empty")
    weights = dice_class_weights(labels)
    rng = np.random.default_rng(np.random.SeedSequence([seed, SHUFFLE_STREAM]))
    batches = range(0, count, settings.batch_size)
    costs: List[float] = []
    for epoch in range(settings.max_epochs):
        order = rng.permutation(count)
        total = 0.0
        for number, start in enumerate(batches):
            index = order[start : start + settings.batch_size]
            masks = sample_masks(
                spec, seed, epoch * len(batches) + number, TRAINING_STREAM
            )
            result = forward(spec, params, features[index], masks, keep_cache=True)
            value, grad = dice_loss_and_grad(result.output, labels[index], weights)
            adam_step(
                params,
                backward(spec, params, result, grad),
                settings.learning_rate,
                settings.weight_decay,
            )
            total += value * index.shape[0]
        if _finish(epoch, total / count, settings, costs):
            return TrainingReport(epoch + 1, costs[-1], "threshold", costs)
    return TrainingReport(settings.max_epochs, costs[-1], "epoch_cap", costs)


@dataclass(frozen=True)
class TrainingSequence:
    features: NumericArray
    labels: NumericArray
    mask: NumericArray


def training_sequences(videos: Sequence[Video]) -> List[TrainingSequence]:
    """Annotated videos, each cut after its last annotated frame (later frames cannot affect the cost)."""
    sequences = []
    for video in videos:
        annotated = np.flatnonzero(video.mask)
        if annotated.size == 0:
            continue
        stop = int(annotated[-1]) + 1
        sequences.append(
            TrainingSequence(
                video.features[:stop], video.labels[:stop], video.mask[:stop].astype(np.float64)
            )
        )
    return sequences


def _pad(
    sequences: Sequence[TrainingSequence], feature_dim: int
) -> Tuple[NumericArray, NumericArray, NumericArray]:
    length = max(s.features.shape[0] for s in sequences)
    x = np.zeros((len(sequences), length, feature_dim))
    y = np.zeros((len(sequences), length), dtype=np.int64)
    m = np.zeros((len(sequences), length))
    for row, s in enumerate(sequences):
        size = s.features.shape[0]
        x[row, :size] = s.features
        y[row, :size] = s.labels
        m[row, :size] = s.mask
    return x, y, m


def train_sequences(
    spec: NetworkSpec,
    params: ParameterStore,
    sequences: Sequence[TrainingSequence],
    settings: TrainingSettings,
    seed: int,
) -> TrainingReport:
    """
    Minimize the masked cross-entropy with full BPTT over mini-batches of videos.

    Each video's cost is the mean over its annotated frames; a batch's cost is
    the mean over its videos. Videos are zero-padded at the end, which leaves
    earlier hidden states untouched.
    """
    if len(sequences) == 0:
        return TrainingReport(0, 0.0, "empty")
    rng = np.random.default_rng(np.random.SeedSequence([seed, SHUFFLE_STREAM]))
    batches = range(0, len(sequences), settings.batch_size)
    costs: List[float] = []
    for epoch in range(settings.max_epochs):
        order = rng.permutation(len(sequences))
        total = 0.0
        for number, start in enumerate(batches):
            batch = [sequences[i] for i in order[start : start + settings.batch_size]]
            x, y, m = _pad(batch, spec.input_dim)
            masks = sample_masks(
                spec, seed, epoch * len(batches) + number, TRAINING_STREAM
            )
            result = forward(spec, params, x, masks, keep_cache=True)
            frame_costs, frame_grads = cross_entropy_costs(result.output, y)
            weights = np.zeros_like(m)
            batch_cost = 0.0
            for row in range(len(batch)):
                loss = masked_sequence_loss(frame_costs[row], m[row])
                batch_cost += loss.value
                weights[row] = loss.frame_weights
            grad = frame_grads * (weights / len(batch))[..., np.newaxis]
            adam_step(
                params,
                backward(spec, params, result, grad),
                settings.learning_rate,
                settings.weight_decay,
            )
            total += batch_cost
        if _finish(epoch, total / len(sequences), settings, costs):
            return TrainingReport(epoch + 1, costs[-1], "threshold", costs)
    return TrainingReport(settings.max_epochs, costs[-1], "epoch_cap", costs)


def predict_frames(
    spec: NetworkSpec,
    params: ParameterStore,
    features: NumericArray,
    passes: int,
    seed: int,
    workers: int = 1,
) -> NumericArray:
    """MC posterior mean over `passes` dropout passes; `passes=0` is the deterministic pass."""
    if passes == 0:
        return forward(spec, params, features).output
    return posterior_mean(mc_forward(spec, params, features, passes, seed, workers=workers))


def predict_sequence(
    spec: NetworkSpec,
    params: ParameterStore,
    sequence: NumericArray,
    passes: int,
    seed: int,
    workers: int = 1,
) -> NumericArray:
    if passes == 0:
        return forward(spec, params, sequence).output
    return posterior_mean(
        mc_forward_sequence(spec, params, sequence, passes, seed, workers=workers)
    )
