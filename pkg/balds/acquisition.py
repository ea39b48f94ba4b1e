"""
Acquisition functions over Monte-Carlo posteriors.

Every function reduces the pass axis (axis 0) of `PosteriorSamples` and keeps the
remaining item axes, so one call scores a single frame, a batch of frames or
every frame of a sequence. Softmax posteriors give one score per item (Variance
gives a per-class vector); sigmoid posteriors treat each class as an independent
Bernoulli and give per-class vectors.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from scipy.special import xlogy

from balds.bayes import PosteriorSamples, posterior_mean
from balds.error import BALDSEmptyGroupError
from balds.network import Head, NumericArray

# Seed-sequence stream of the random baseline's shuffle
RANDOM_STREAM = 3


class AcquisitionKind(str, Enum):
    VARIANCE = "variance"
    VARIATION_RATIO = "variation_ratio"
    ENTROPY = "entropy"
    MUTUAL_INFORMATION = "mutual_information"
    RANDOM = "random"


class AggregationKind(str, Enum):
    MAX = "max"
    MEAN = "mean"


@dataclass(frozen=True)
class ScoredItem:
    item_id: str
    score: float
    per_class: Optional[Tuple[float, ...]] = None


AcquisitionFunction = Callable[[PosteriorSamples], NumericArray]

_registry: Dict[AcquisitionKind, AcquisitionFunction] = {}


def acquisition_function(
    kind: AcquisitionKind,
) -> Callable[[AcquisitionFunction], AcquisitionFunction]:
    def decorator(func: AcquisitionFunction) -> AcquisitionFunction:
        _registry[kind] = func
        return func

    return decorator


def get_acquisition_function(kind: AcquisitionKind) -> AcquisitionFunction:
    if kind not in _registry:
        raise KeyError(f"{kind.value} has no posterior-based scoring function")
    return _registry[kind]


def _entropy(p: NumericArray, head: Head) -> NumericArray:
    if head == Head.SOFTMAX:
        return np.asarray(-np.sum(xlogy(p, p), axis=-1), dtype=np.float64)
    return np.asarray(-xlogy(p, p) - xlogy(1.0 - p, 1.0 - p), dtype=np.float64)


@acquisition_function(AcquisitionKind.VARIANCE)
def variance(samples: PosteriorSamples) -> NumericArray:
    """Population variance (divide by T) of the T likelihoods, per class."""
    return np.asarray(np.var(samples.samples, axis=0), dtype=np.float64)


@acquisition_function(AcquisitionKind.VARIATION_RATIO)
def variation_ratio(samples: PosteriorSamples) -> NumericArray:
    """
    `1 - f_m / T`, where `f_m` counts the passes voting for the modal outcome.

    Softmax: votes are per-pass argmax classes. Sigmoid: each class is
    binarized at 0.5 and the mode is taken over {0, 1}.
    """
    s = samples.samples
    passes = samples.passes
    if samples.head == Head.SOFTMAX:
        votes = np.argmax(s, axis=-1)
        counts = np.stack(
            [np.sum(votes == c, axis=0) for c in range(samples.num_classes)], axis=-1
        )
        mode = counts.max(axis=-1)
    else:
        positive = np.sum(s >= 0.5, axis=0)
        mode = np.maximum(positive, passes - positive)
    return np.asarray(1.0 - mode / passes, dtype=np.float64)


@acquisition_function(AcquisitionKind.ENTROPY)
def entropy(samples: PosteriorSamples) -> NumericArray:
    """Predictive entropy of the posterior mean (natural log, `0 log 0 = 0`)."""
    return _entropy(posterior_mean(samples), samples.head)


@acquisition_function(AcquisitionKind.MUTUAL_INFORMATION)
def mutual_information(samples: PosteriorSamples) -> NumericArray:
    """Entropy of the mean minus the mean per-pass entropy, clamped at 0."""
    predictive = _entropy(posterior_mean(samples), samples.head)
    expected = np.mean(_entropy(samples.samples, samples.head), axis=0)
    return np.asarray(np.maximum(predictive - expected, 0.0), dtype=np.float64)


def aggregate(scores: npt.ArrayLike, kind: AggregationKind) -> float:
    values = np.asarray(scores, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise BALDSEmptyGroupError("cannot aggregate an empty score vector")
    if kind == AggregationKind.MAX:
        return float(values.max())
    return float(values.mean())


def acquisition_scores(
    samples: PosteriorSamples,
    kind: AcquisitionKind,
    aggregation: AggregationKind,
) -> Tuple[NumericArray, Optional[NumericArray]]:
    """
    One scalar score per item, plus the per-class vectors it was aggregated from.

    Returns arrays shaped like the item axes of `samples` (everything between
    the pass axis and the class axis); the per-class array is None when the
    metric is already a scalar per item.
    """
    item_shape = samples.samples.shape[1:-1]
    if kind == AcquisitionKind.RANDOM:
        return np.zeros(item_shape), None
    raw = get_acquisition_function(kind)(samples)
    if raw.shape == item_shape:
        return raw, None
    if aggregation == AggregationKind.MAX:
        return raw.max(axis=-1), raw
    return raw.mean(axis=-1), raw


def rank_pool(
    scored: Sequence[ScoredItem], kind: AcquisitionKind, seed: int
) -> List[str]:
    """
    Order item ids for querying.

    Uncertainty kinds sort by descending score, ties broken by ascending item id.
    Random ignores scores and returns a seeded shuffle of the ids.
    """
    if len(scored) == 0:
        raise BALDSEmptyGroupError("no items to rank")
    if kind == AcquisitionKind.RANDOM:
        ids = sorted(item.item_id for item in scored)
        rng = np.random.default_rng(np.random.SeedSequence([seed, RANDOM_STREAM]))
        return [ids[i] for i in rng.permutation(len(ids))]
    return [item.item_id for item in sorted(scored, key=lambda s: (-s.score, s.item_id))]
