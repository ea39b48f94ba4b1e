"""Adam with coupled L2 weight decay."""

import numpy as np

from balds.error import BALDSShapeError
from balds.network import Gradients, ParameterStore

DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_EPS = 1e-8


def adam_step(
    params: ParameterStore,
    grads: Gradients,
    lr: float,
    weight_decay: float = 0.0,
    beta1: float = DEFAULT_BETA1,
    beta2: float = DEFAULT_BETA2,
    eps: float = DEFAULT_EPS,
) -> ParameterStore:
    """
    Apply one bias-corrected Adam update in place and return `params`.

    The decay term `weight_decay * w` is added to the gradient before the
    moment updates (classic L2, not the decoupled AdamW form).
    """
    if len(grads) != len(params.params):
        raise BALDSShapeError(
            f"{len(grads)} gradient layers for {len(params.params)} parameter layers"
        )
    params.step_count += 1
    step = params.step_count
    first_correction = 1.0 - beta1**step
    second_correction = 1.0 - beta2**step
    for index, name, value in params.items():
        grad = grads[index].get(name)
        if grad is None or grad.shape != value.shape:
            raise BALDSShapeError(
                f"gradient for layer {index} parameter {name} does not match shape {value.shape}"
            )
        if weight_decay:
            grad = grad + weight_decay * value
        m = params.first_moment[index][name]
        v = params.second_moment[index][name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        value -= lr * (m / first_correction) / (np.sqrt(v / second_correction) + eps)
    return params
