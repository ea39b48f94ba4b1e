"""
Minimal differentiable network engine.

A network is an ordered stack of `Dense`, `Lstm` and `Dropout` layers followed by
a sigmoid or softmax head. Frame networks take `(F,)` or `(N, F)` inputs;
recurrent networks take `(L, F)` or `(B, L, F)` sequences and run every
non-recurrent layer over all time-steps at once.

Dropout is inverted: a kept unit is scaled by `1/(1-p)` at mask time, so a pass
without masks is the deterministic `p -> 0` limit.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
from scipy.special import expit, softmax

from balds.error import (
    BALDSMissingCacheError,
    BALDSNetworkSpecError,
    BALDSNumericalError,
    BALDSShapeError,
)

if TYPE_CHECKING:
    from balds.bayes import DropoutMaskSet

NumericArray = npt.NDArray[np.float64]
LayerParams = Dict[str, NumericArray]
Gradients = List[LayerParams]

# Seed-sequence stream of the parameter initialization
INIT_STREAM = 7


class Activation(str, Enum):
    RELU = "relu"
    TANH = "tanh"
    IDENTITY = "identity"


class Head(str, Enum):
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int
    activation: Activation = Activation.RELU


@dataclass(frozen=True)
class Lstm:
    """LSTM layer; `recurrent_p` is the dropout probability on the hidden state fed back into the gates."""

    in_dim: int
    hidden: int
    recurrent_p: float = 0.0


@dataclass(frozen=True)
class Dropout:
    p: float


LayerSpec = Union[Dense, Lstm, Dropout]


@dataclass(frozen=True)
class NetworkSpec:
    """
    Architecture of a network.

    Attributes:
        layers: Ordered layers; adjacent dimensions must agree
        head: Output nonlinearity applied to the last layer

    """

    layers: Tuple[LayerSpec, ...]
    head: Head

    def __post_init__(self) -> None:
        self.widths()

    def widths(self) -> List[int]:
        """Input width of every layer followed by the output width."""
        if len(self.layers) == 0:
            raise BALDSNetworkSpecError("a network needs at least one layer")
        first = self.layers[0]
        if isinstance(first, Dropout):
            raise BALDSNetworkSpecError("the first layer must be Dense or Lstm")
        width = first.in_dim
        widths: List[int] = []
        for index, layer in enumerate(self.layers):
            widths.append(width)
            if isinstance(layer, Dropout):
                if not 0.0 <= layer.p <= 1.0:
                    raise BALDSNetworkSpecError(
                        f"layer {index}: dropout probability {layer.p} outside [0, 1]"
                    )
                continue
            if layer.in_dim != width:
                raise BALDSNetworkSpecError(
                    f"layer {index}: expects {layer.in_dim} inputs, previous layer yields {width}"
                )
            if isinstance(layer, Dense):
                width = layer.out_dim
            else:
                if not 0.0 <= layer.recurrent_p <= 1.0:
                    raise BALDSNetworkSpecError(
                        f"layer {index}: recurrent dropout probability {layer.recurrent_p} outside [0, 1]"
                    )
                width = layer.hidden
            if width < 1:
                raise BALDSNetworkSpecError(f"layer {index}: width must be positive")
        widths.append(width)
        return widths

    @property
    def input_dim(self) -> int:
        return self.widths()[0]

    @property
    def output_dim(self) -> int:
        return self.widths()[-1]

    @property
    def is_recurrent(self) -> bool:
        return any(isinstance(layer, Lstm) for layer in self.layers)

    def dropout_sites(self) -> Dict[int, Tuple[int, float]]:
        """Layer index -> (mask width, drop probability) for every masked connection."""
        widths = self.widths()
        sites: Dict[int, Tuple[int, float]] = {}
        for index, layer in enumerate(self.layers):
            if isinstance(layer, Dropout):
                sites[index] = (widths[index], layer.p)
            elif isinstance(layer, Lstm):
                sites[index] = (layer.hidden, layer.recurrent_p)
        return sites


def frame_network(
    feature_dim: int,
    num_classes: int,
    p: float = 0.5,
    head: Head = Head.SIGMOID,
    hidden: Sequence[int] = (64, 32),
) -> NetworkSpec:
    """Dense(F->64, ReLU) -> Dropout -> Dense(64->32, ReLU) -> Dropout -> Dense(32->C) -> head."""
    layers: List[LayerSpec] = []
    width = feature_dim
    for units in hidden:
        layers.append(Dense(width, units, Activation.RELU))
        layers.append(Dropout(p))
        width = units
    layers.append(Dense(width, num_classes, Activation.IDENTITY))
    return NetworkSpec(tuple(layers), head)


def sequence_network(
    feature_dim: int,
    num_classes: int,
    p: float = 0.5,
    head: Head = Head.SOFTMAX,
    hidden: Sequence[int] = (64, 32),
    lstm_hidden: int = 32,
) -> NetworkSpec:
    """The frame encoder with an LSTM (recurrent dropout) inserted before the output layer."""
    layers: List[LayerSpec] = []
    width = feature_dim
    for units in hidden:
        layers.append(Dense(width, units, Activation.RELU))
        layers.append(Dropout(p))
        width = units
    layers.append(Lstm(width, lstm_hidden, recurrent_p=p))
    layers.append(Dropout(p))
    layers.append(Dense(lstm_hidden, num_classes, Activation.IDENTITY))
    return NetworkSpec(tuple(layers), head)


class ParameterStore:
    """Per-layer weights and biases, plus the Adam moments that belong to them."""

    def __init__(self, params: List[LayerParams]) -> None:
        self.params = params
        self.first_moment: Gradients = [
            {name: np.zeros_like(value) for name, value in layer.items()}
            for layer in params
        ]
        self.second_moment: Gradients = [
            {name: np.zeros_like(value) for name, value in layer.items()}
            for layer in params
        ]
        self.step_count = 0

    def items(self) -> Iterator[Tuple[int, str, NumericArray]]:
        for index, layer in enumerate(self.params):
            for name, value in layer.items():
                yield index, name, value

    def zeros_like(self) -> Gradients:
        return [
            {name: np.zeros_like(value) for name, value in layer.items()}
            for layer in self.params
        ]

    def copy(self) -> ParameterStore:
        clone = ParameterStore(
            [{name: value.copy() for name, value in layer.items()} for layer in self.params]
        )
        clone.first_moment = [
            {name: value.copy() for name, value in layer.items()}
            for layer in self.first_moment
        ]
        clone.second_moment = [
            {name: value.copy() for name, value in layer.items()}
            for layer in self.second_moment
        ]
        clone.step_count = self.step_count
        return clone

    @property
    def num_parameters(self) -> int:
        return sum(value.size for _, _, value in self.items())


def expected_shapes(spec: NetworkSpec) -> List[Dict[str, Tuple[int, ...]]]:
    shapes: List[Dict[str, Tuple[int, ...]]] = []
    for layer in spec.layers:
        if isinstance(layer, Dense):
            shapes.append({"W": (layer.in_dim, layer.out_dim), "b": (layer.out_dim,)})
        elif isinstance(layer, Lstm):
            gates = 4 * layer.hidden
            shapes.append(
                {
                    "W": (layer.in_dim, gates),
                    "U": (layer.hidden, gates),
                    "b": (gates,),
                }
            )
        else:
            shapes.append({})
    return shapes


def init_params(spec: NetworkSpec, seed: int) -> ParameterStore:
    """
    Initialize parameters deterministically from `seed`.

    Dense weights are He-uniform (limit sqrt(6 / fan_in)); LSTM weights are
    uniform in +-1/sqrt(hidden) with the forget-gate bias set to 1. Biases are
    otherwise zero. The same (spec, seed) always yields identical values.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, INIT_STREAM]))
    params: List[LayerParams] = []
    for layer in spec.layers:
        if isinstance(layer, Dense):
            limit = np.sqrt(6.0 / layer.in_dim)
            params.append(
                {
                    "W": rng.uniform(-limit, limit, (layer.in_dim, layer.out_dim)),
                    "b": np.zeros(layer.out_dim),
                }
            )
        elif isinstance(layer, Lstm):
            hidden = layer.hidden
            limit = 1.0 / np.sqrt(hidden)
            bias = np.zeros(4 * hidden)
            bias[hidden : 2 * hidden] = 1.0
            params.append(
                {
                    "W": rng.uniform(-limit, limit, (layer.in_dim, 4 * hidden)),
                    "U": rng.uniform(-limit, limit, (hidden, 4 * hidden)),
                    "b": bias,
                }
            )
        else:
            params.append({})
    return ParameterStore(params)


def check_params(spec: NetworkSpec, params: ParameterStore) -> None:
    shapes = expected_shapes(spec)
    if len(params.params) != len(shapes):
        raise BALDSShapeError(
            f"parameter store has {len(params.params)} layers, network has {len(shapes)}"
        )
    for index, (layer, expected) in enumerate(zip(params.params, shapes)):
        if set(layer) != set(expected):
            raise BALDSShapeError(
                f"layer {index}: parameters {sorted(layer)} do not match {sorted(expected)}"
            )
        for name, shape in expected.items():
            if layer[name].shape != shape:
                raise BALDSShapeError(
                    f"layer {index} parameter {name}: shape {layer[name].shape}, expected {shape}"
                )


@dataclass(frozen=True)
class LstmState:
    hidden: NumericArray
    cell: NumericArray

    @classmethod
    def zeros(cls, shape: Tuple[int, ...]) -> LstmState:
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass
class LstmStepCache:
    h_prev: NumericArray
    c_prev: NumericArray
    i: NumericArray
    f: NumericArray
    g: NumericArray
    o: NumericArray
    tanh_c: NumericArray


@dataclass
class LayerCache:
    input: NumericArray
    pre_activation: Optional[NumericArray] = None
    multiplier: Optional[NumericArray] = None
    steps: Optional[List[LstmStepCache]] = None


@dataclass
class ForwardResult:
    """
    Everything a forward pass produced.

    Attributes:
        activations: Output of every layer, in the batched internal layout
        head_output: Head output in the batched internal layout
        output: Head output in the caller's layout (unbatched input -> unbatched output)
        cache: Per-layer values needed by `backward`, when requested

    """

    activations: List[NumericArray]
    head_output: NumericArray
    output: NumericArray
    cache: Optional[List[LayerCache]]


def _check_finite(values: NumericArray, where: str) -> None:
    if not np.all(np.isfinite(values)):
        raise BALDSNumericalError(f"{where} produced NaN or Inf")


def _activate(kind: Activation, pre: NumericArray) -> NumericArray:
    if kind == Activation.RELU:
        return np.maximum(pre, 0.0)
    if kind == Activation.TANH:
        return np.tanh(pre)
    return pre


def _activation_grad(
    kind: Activation, pre: NumericArray, out: NumericArray
) -> NumericArray:
    if kind == Activation.RELU:
        return (pre > 0.0).astype(np.float64)
    if kind == Activation.TANH:
        return 1.0 - out * out
    return np.ones_like(pre)


def apply_head(head: Head, logits: NumericArray) -> NumericArray:
    if head == Head.SIGMOID:
        return np.asarray(expit(logits), dtype=np.float64)
    return np.asarray(softmax(logits, axis=-1), dtype=np.float64)


def _head_backward(
    head: Head, output: NumericArray, grad: NumericArray
) -> NumericArray:
    if head == Head.SIGMOID:
        return grad * output * (1.0 - output)
    inner = np.sum(grad * output, axis=-1, keepdims=True)
    return output * (grad - inner)


def _lstm_cell(
    projected: NumericArray,
    state: LstmState,
    recurrent: NumericArray,
    multiplier: Optional[NumericArray],
) -> Tuple[LstmState, LstmStepCache]:
    hidden = state.hidden.shape[-1]
    h_in = state.hidden * multiplier if multiplier is not None else state.hidden
    z = projected + h_in @ recurrent
    i = expit(z[..., :hidden])
    f = expit(z[..., hidden : 2 * hidden])
    g = np.tanh(z[..., 2 * hidden : 3 * hidden])
    o = expit(z[..., 3 * hidden :])
    cell = f * state.cell + i * g
    tanh_c = np.tanh(cell)
    new_state = LstmState(o * tanh_c, cell)
    return new_state, LstmStepCache(state.hidden, state.cell, i, f, g, o, tanh_c)


def lstm_step(
    state: LstmState,
    input: NumericArray,
    params: LayerParams,
    multiplier: Optional[NumericArray] = None,
) -> Tuple[LstmState, NumericArray]:
    """
    Advance one LSTM time-step.

    Gates are i, f, o = sigmoid(.) and the candidate g = tanh(.) over
    `x W + (h * r) U + b`, where `r` is the recurrent dropout multiplier;
    `c' = f c + i g` and `h' = o tanh(c')`. The output is `h'`.
    """
    hidden = params["U"].shape[0]
    if state.hidden.shape[-1] != hidden or state.cell.shape[-1] != hidden:
        raise BALDSShapeError(
            f"LSTM state width {state.hidden.shape[-1]}, layer hidden size {hidden}"
        )
    if input.shape[-1] != params["W"].shape[0]:
        raise BALDSShapeError(
            f"LSTM input width {input.shape[-1]}, layer expects {params['W'].shape[0]}"
        )
    new_state, _ = _lstm_cell(
        input @ params["W"] + params["b"], state, params["U"], multiplier
    )
    return new_state, new_state.hidden


def _lstm_sequence(
    x: NumericArray,
    params: LayerParams,
    multiplier: Optional[NumericArray],
    keep_cache: bool,
) -> Tuple[NumericArray, Optional[List[LstmStepCache]]]:
    batch, length, _ = x.shape
    hidden = params["U"].shape[0]
    projected = x @ params["W"] + params["b"]
    state = LstmState.zeros((batch, hidden))
    outputs = np.empty((batch, length, hidden))
    steps: Optional[List[LstmStepCache]] = [] if keep_cache else None
    for t in range(length):
        state, step = _lstm_cell(projected[:, t, :], state, params["U"], multiplier)
        outputs[:, t, :] = state.hidden
        if steps is not None:
            steps.append(step)
    return outputs, steps


def _promote(spec: NetworkSpec, x: NumericArray) -> Tuple[NumericArray, bool]:
    expected = 3 if spec.is_recurrent else 2
    if x.ndim == expected - 1:
        x = x[np.newaxis, ...]
        squeeze = True
    elif x.ndim == expected:
        squeeze = False
    else:
        layout = "(L, F) or (B, L, F)" if spec.is_recurrent else "(F,) or (N, F)"
        raise BALDSShapeError(f"input of shape {x.shape}; expected {layout}")
    if x.shape[-1] != spec.input_dim:
        raise BALDSShapeError(
            f"input has {x.shape[-1]} features, network expects {spec.input_dim}"
        )
    return x, squeeze


def forward(
    spec: NetworkSpec,
    params: ParameterStore,
    input: NumericArray,
    masks: Optional["DropoutMaskSet"] = None,
    keep_cache: bool = False,
) -> ForwardResult:
    """
    Run the network on `input`.

    With `masks=None` no dropout is applied. Otherwise every dropout site
    multiplies by its mask scaled by `1/(1-p)`; in sequences the same multiplier
    is used at every time-step.
    """
    check_params(spec, params)
    if masks is not None:
        masks.validate(spec)
    h, squeeze = _promote(spec, np.asarray(input, dtype=np.float64))

    activations: List[NumericArray] = []
    caches: Optional[List[LayerCache]] = [] if keep_cache else None
    for index, layer in enumerate(spec.layers):
        layer_params = params.params[index]
        multiplier = masks.multiplier(index) if masks is not None else None
        if isinstance(layer, Dense):
            pre = h @ layer_params["W"] + layer_params["b"]
            out = _activate(layer.activation, pre)
            cache = LayerCache(input=h, pre_activation=pre)
        elif isinstance(layer, Dropout):
            out = h * multiplier if multiplier is not None else h
            cache = LayerCache(input=h, multiplier=multiplier)
        else:
            out, steps = _lstm_sequence(h, layer_params, multiplier, keep_cache)
            cache = LayerCache(input=h, multiplier=multiplier, steps=steps)
        _check_finite(out, f"layer {index}")
        activations.append(out)
        if caches is not None:
            caches.append(cache)
        h = out

    head_output = apply_head(spec.head, h)
    _check_finite(head_output, "head")
    output = head_output[0] if squeeze else head_output
    return ForwardResult(activations, head_output, output, caches)


def _lstm_backward(
    params: LayerParams, cache: LayerCache, delta: NumericArray
) -> Tuple[NumericArray, LayerParams]:
    assert cache.steps is not None
    W, U = params["W"], params["U"]
    x = cache.input
    r = cache.multiplier
    batch, length, _ = x.shape
    hidden = U.shape[0]

    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros_like(params["b"])
    dx = np.empty_like(x)
    dh_next = np.zeros((batch, hidden))
    dc_next = np.zeros((batch, hidden))
    for t in reversed(range(length)):
        s = cache.steps[t]
        dh = delta[:, t, :] + dh_next
        dc = dc_next + dh * s.o * (1.0 - s.tanh_c * s.tanh_c)
        dz = np.concatenate(
            [
                dc * s.g * s.i * (1.0 - s.i),
                dc * s.c_prev * s.f * (1.0 - s.f),
                dc * s.i * (1.0 - s.g * s.g),
                dh * s.tanh_c * s.o * (1.0 - s.o),
            ],
            axis=-1,
        )
        h_in = s.h_prev * r if r is not None else s.h_prev
        dW += x[:, t, :].T @ dz
        dU += h_in.T @ dz
        db += dz.sum(axis=0)
        dx[:, t, :] = dz @ W.T
        dh_in = dz @ U.T
        dh_next = dh_in * r if r is not None else dh_in
        dc_next = dc * s.f
    return dx, {"W": dW, "U": dU, "b": db}


def backward(
    spec: NetworkSpec,
    params: ParameterStore,
    result: ForwardResult,
    loss_grad: NumericArray,
) -> Gradients:
    """
    Back-propagate `loss_grad` (dLoss / d head output) through a cached forward pass.

    Sequences are differentiated through every time-step (full BPTT). Units
    zeroed by a dropout mask pass no gradient.
    """
    if result.cache is None:
        raise BALDSMissingCacheError()
    grad = np.asarray(loss_grad, dtype=np.float64)
    if grad.size != result.head_output.size:
        raise BALDSShapeError(
            f"loss gradient of shape {grad.shape} for head output {result.head_output.shape}"
        )
    grads = params.zeros_like()
    delta = _head_backward(
        spec.head, result.head_output, grad.reshape(result.head_output.shape)
    )
    for index in reversed(range(len(spec.layers))):
        layer = spec.layers[index]
        cache = result.cache[index]
        layer_params = params.params[index]
        if isinstance(layer, Dense):
            assert cache.pre_activation is not None
            dpre = delta * _activation_grad(
                layer.activation, cache.pre_activation, result.activations[index]
            )
            flat_in = cache.input.reshape(-1, layer.in_dim)
            flat_dpre = dpre.reshape(-1, layer.out_dim)
            grads[index] = {"W": flat_in.T @ flat_dpre, "b": flat_dpre.sum(axis=0)}
            delta = dpre @ layer_params["W"].T
        elif isinstance(layer, Dropout):
            if cache.multiplier is not None:
                delta = delta * cache.multiplier
        else:
            delta, grads[index] = _lstm_backward(layer_params, cache, delta)
    for index, name, value in _iter_grads(grads):
        _check_finite(value, f"gradient of layer {index} parameter {name}")
    return grads


def _iter_grads(grads: Gradients) -> Iterator[Tuple[int, str, NumericArray]]:
    for index, layer in enumerate(grads):
        for name, value in layer.items():
            yield index, name, value
