"""
Monte-Carlo dropout inference.

Every dropout mask is drawn from a generator keyed by (seed, stream, layer, pass),
so the masks a pass sees do not depend on scoring order, batching or the number
of worker threads.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional

import numpy as np
import numpy.typing as npt

from balds.error import BALDSNetworkSpecError, BALDSShapeError
from balds.network import Head, NetworkSpec, NumericArray, ParameterStore, forward

TRAINING_STREAM = 1
INFERENCE_STREAM = 2


@dataclass(frozen=True)
class DropoutMaskSet:
    """
    Binary keep-masks for every dropout site of a network.

    Attributes:
        masks: Layer index -> {0, 1} mask over that layer's width
        probabilities: Layer index -> drop probability used to scale kept units
        seed: Seed the masks were drawn from
        pass_index: Forward-pass counter the masks were drawn for
        stream: Generator stream (training or inference)

    """

    masks: Dict[int, NumericArray]
    probabilities: Dict[int, float]
    seed: int = 0
    pass_index: int = 0
    stream: int = INFERENCE_STREAM

    @classmethod
    def ones(cls, spec: NetworkSpec) -> "DropoutMaskSet":
        """Keep every unit, with probabilities 0: identical to a maskless pass."""
        sites = spec.dropout_sites()
        return cls(
            {index: np.ones(width) for index, (width, _) in sites.items()},
            {index: 0.0 for index in sites},
        )

    def validate(self, spec: NetworkSpec) -> None:
        sites = spec.dropout_sites()
        if set(sites) != set(self.masks) or set(sites) != set(self.probabilities):
            raise BALDSShapeError(
                f"masks for layers {sorted(self.masks)}, network has dropout at {sorted(sites)}"
            )
        for index, (width, _) in sites.items():
            if self.masks[index].shape != (width,):
                raise BALDSShapeError(
                    f"mask for layer {index} has shape {self.masks[index].shape}, layer width is {width}"
                )

    def multiplier(self, layer: int) -> Optional[NumericArray]:
        """Mask scaled by `1/(1-p)`; `p = 1` drops everything."""
        if layer not in self.masks:
            return None
        p = self.probabilities[layer]
        scale = 0.0 if p >= 1.0 else 1.0 / (1.0 - p)
        return self.masks[layer] * scale


def sample_masks(
    spec: NetworkSpec,
    seed: int,
    pass_index: int = 0,
    stream: int = INFERENCE_STREAM,
    p: Optional[Mapping[int, float]] = None,
) -> DropoutMaskSet:
    """
    Draw independent Bernoulli(1 - p) keep-masks for every dropout site.

    `p` overrides the per-layer drop probabilities of `spec`.
    """
    masks: Dict[int, NumericArray] = {}
    probabilities: Dict[int, float] = {}
    for index, (width, default_p) in spec.dropout_sites().items():
        prob = default_p if p is None else p.get(index, default_p)
        if not 0.0 <= prob <= 1.0:
            raise BALDSNetworkSpecError(
                f"layer {index}: dropout probability {prob} outside [0, 1]"
            )
        rng = np.random.default_rng(
            np.random.SeedSequence([seed, stream, index, pass_index])
        )
        masks[index] = (rng.random(width) >= prob).astype(np.float64)
        probabilities[index] = prob
    return DropoutMaskSet(masks, probabilities, seed, pass_index, stream)


@dataclass(frozen=True)
class PosteriorSamples:
    """
    Head outputs of T stochastic passes.

    `samples` has the pass axis first: (T, C) for one frame, (T, N, C) for a
    batch of frames, (T, L, C) for one sequence and (T, B, L, C) for a batch of
    sequences.
    """

    samples: NumericArray
    head: Head
    masks: List[DropoutMaskSet] = field(default_factory=list, compare=False)

    def __post_init__(self) -> None:
        if self.samples.ndim < 2 or self.samples.shape[0] < 1:
            raise BALDSShapeError(
                f"posterior samples of shape {self.samples.shape}; need at least one pass"
            )

    @property
    def passes(self) -> int:
        return int(self.samples.shape[0])

    @property
    def num_classes(self) -> int:
        return int(self.samples.shape[-1])


def _run_passes(
    spec: NetworkSpec,
    params: ParameterStore,
    input: npt.ArrayLike,
    passes: int,
    seed: int,
    stream: int,
    workers: int,
) -> PosteriorSamples:
    if passes < 1:
        raise BALDSShapeError(f"at least one Monte-Carlo pass is required, got {passes}")
    x = np.asarray(input, dtype=np.float64)
    masks = [sample_masks(spec, seed, t, stream) for t in range(passes)]

    def run(t: int) -> NumericArray:
        return forward(spec, params, x, masks[t]).output

    first = run(0)
    samples = np.empty((passes,) + first.shape)
    samples[0] = first
    if workers > 1 and passes > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = {t: executor.submit(run, t) for t in range(1, passes)}
            for t, future in futures.items():
                samples[t] = future.result()
    else:
        for t in range(1, passes):
            samples[t] = run(t)
    return PosteriorSamples(samples, spec.head, masks)


def mc_forward(
    spec: NetworkSpec,
    params: ParameterStore,
    input: npt.ArrayLike,
    passes: int,
    seed: int,
    stream: int = INFERENCE_STREAM,
    workers: int = 1,
) -> PosteriorSamples:
    """Classify a frame, or a batch of frames, `passes` times with fresh masks per pass."""
    if spec.is_recurrent:
        raise BALDSNetworkSpecError(
            "mc_forward needs a frame network; use mc_forward_sequence for recurrent networks"
        )
    return _run_passes(spec, params, input, passes, seed, stream, workers)


def mc_forward_sequence(
    spec: NetworkSpec,
    params: ParameterStore,
    sequence: npt.ArrayLike,
    passes: int,
    seed: int,
    stream: int = INFERENCE_STREAM,
    workers: int = 1,
) -> PosteriorSamples:
    """
    Classify a sequence `passes` times.

    Each pass draws one mask set at the start of the sequence and reuses it at
    every time-step; the LSTM state starts at zero and threads through the
    whole sequence.
    """
    if not spec.is_recurrent:
        raise BALDSNetworkSpecError("mc_forward_sequence needs a recurrent network")
    return _run_passes(spec, params, sequence, passes, seed, stream, workers)


def posterior_mean(samples: PosteriorSamples) -> NumericArray:
    return np.asarray(samples.samples.mean(axis=0), dtype=np.float64)
