"""Central finite-difference verification of analytic gradients."""

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from balds.bayes import DropoutMaskSet
from balds.network import (
    Gradients,
    NetworkSpec,
    NumericArray,
    ParameterStore,
    backward,
    forward,
)

DEFAULT_STEP = 1e-5
ERROR_FLOOR = 1e-6

# Maps a head output to (loss value, d loss / d output)
OutputLoss = Callable[[NumericArray], Tuple[float, NumericArray]]


@dataclass(frozen=True)
class GradCheckResult:
    max_relative_error: float
    worst_entry: Tuple[int, str, Tuple[int, ...]]
    checked: int


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic) + abs(numeric), ERROR_FLOOR)


def numerical_gradients(
    loss_fn: Callable[[ParameterStore], float],
    params: ParameterStore,
    h: float = DEFAULT_STEP,
) -> Gradients:
    """`(L(w + h) - L(w - h)) / 2h` for every parameter entry, restoring each entry afterwards."""
    grads = params.zeros_like()
    for index, name, value in params.items():
        flat = value.reshape(-1)
        out = grads[index][name].reshape(-1)
        for k in range(flat.size):
            original = flat[k]
            flat[k] = original + h
            plus = loss_fn(params)
            flat[k] = original - h
            minus = loss_fn(params)
            flat[k] = original
            out[k] = (plus - minus) / (2.0 * h)
    return grads


def compare_gradients(analytic: Gradients, numeric: Gradients) -> GradCheckResult:
    worst = 0.0
    worst_entry: Tuple[int, str, Tuple[int, ...]] = (-1, "", ())
    checked = 0
    for index, layer in enumerate(analytic):
        for name, a in layer.items():
            n = numeric[index][name]
            for position in np.ndindex(a.shape):
                error = relative_error(float(a[position]), float(n[position]))
                checked += 1
                if error > worst:
                    worst = error
                    worst_entry = (index, name, position)
    return GradCheckResult(worst, worst_entry, checked)


def check_network_gradients(
    spec: NetworkSpec,
    params: ParameterStore,
    input: NumericArray,
    loss: OutputLoss,
    masks: Optional[DropoutMaskSet] = None,
    h: float = DEFAULT_STEP,
) -> GradCheckResult:
    """Compare `backward` against central differences of `loss(forward(...).output)`."""
    result = forward(spec, params, input, masks, keep_cache=True)
    _, output_grad = loss(result.output)
    analytic = backward(spec, params, result, output_grad)

    def loss_fn(store: ParameterStore) -> float:
        value, _ = loss(forward(spec, store, input, masks).output)
        return value

    return compare_gradients(analytic, numerical_gradients(loss_fn, params, h))
