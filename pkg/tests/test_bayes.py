import numpy as np
import pytest

from balds.bayes import (
    INFERENCE_STREAM,
    TRAINING_STREAM,
    DropoutMaskSet,
    PosteriorSamples,
    mc_forward,
    mc_forward_sequence,
    posterior_mean,
    sample_masks,
)
from balds.error import BALDSNetworkSpecError, BALDSShapeError
from balds.network import (
    Activation,
    Dense,
    Dropout,
    Head,
    Lstm,
    LstmState,
    NetworkSpec,
    apply_head,
    forward,
    frame_network,
    init_params,
    lstm_step,
    sequence_network,
)


def test_masks_are_keyed_by_seed_pass_and_stream() -> None:
    spec = frame_network(8, 3, p=0.5)
    first = sample_masks(spec, 7, 3)
    again = sample_masks(spec, 7, 3)
    for layer in first.masks:
        assert np.array_equal(first.masks[layer], again.masks[layer])
        assert set(np.unique(first.masks[layer])) <= {0.0, 1.0}

    next_pass = sample_masks(spec, 7, 4)
    training = sample_masks(spec, 7, 3, TRAINING_STREAM)
    assert not np.array_equal(first.masks[1], next_pass.masks[1])
    assert not np.array_equal(first.masks[1], training.masks[1])
    assert first.stream == INFERENCE_STREAM and training.stream == TRAINING_STREAM


def test_mask_probabilities() -> None:
    spec = frame_network(8, 3, p=0.5, hidden=(4000,))
    masks = sample_masks(spec, 0)
    assert masks.masks[1].mean() == pytest.approx(0.5, abs=0.05)
    assert np.all(masks.multiplier(1) == 2.0 * masks.masks[1])

    kept = sample_masks(spec, 0, p={1: 0.0})
    assert np.all(kept.masks[1] == 1.0)
    with pytest.raises(BALDSNetworkSpecError):
        sample_masks(spec, 0, p={1: 1.5})


def test_mask_set_validation() -> None:
    spec = frame_network(4, 2, hidden=(3,))
    with pytest.raises(BALDSShapeError):
        DropoutMaskSet({1: np.ones(5)}, {1: 0.5}).validate(spec)
    with pytest.raises(BALDSShapeError):
        DropoutMaskSet({}, {}).validate(spec)
    DropoutMaskSet.ones(spec).validate(spec)


def test_zero_dropout_matches_deterministic_pass() -> None:
    spec = frame_network(5, 3, p=0.0, hidden=(6, 4))
    params = init_params(spec, 0)
    x = np.random.default_rng(0).standard_normal((7, 5))
    samples = mc_forward(spec, params, x, 6, seed=1)
    deterministic = forward(spec, params, x).output
    assert samples.samples.shape == (6, 7, 3)
    for t in range(6):
        assert np.array_equal(samples.samples[t], deterministic)

    recurrent = sequence_network(5, 3, p=0.0, hidden=(6,), lstm_hidden=4)
    rparams = init_params(recurrent, 0)
    sequence = np.random.default_rng(1).standard_normal((9, 5))
    rsamples = mc_forward_sequence(recurrent, rparams, sequence, 3, seed=1)
    expected = forward(recurrent, rparams, sequence).output
    for t in range(3):
        assert np.array_equal(rsamples.samples[t], expected)


def test_passes_are_stochastic_and_reproducible() -> None:
    spec = frame_network(5, 3, p=0.5, hidden=(32, 16))
    params = init_params(spec, 0)
    x = np.random.default_rng(0).standard_normal((4, 5))
    first = mc_forward(spec, params, x, 5, seed=2)
    second = mc_forward(spec, params, x, 5, seed=2)
    assert np.array_equal(first.samples, second.samples)
    assert not np.array_equal(first.samples[0], first.samples[1])
    assert first.passes == 5 and first.num_classes == 3


def test_worker_count_does_not_change_samples() -> None:
    spec = sequence_network(4, 3, p=0.5, hidden=(8,), lstm_hidden=5)
    params = init_params(spec, 1)
    sequences = np.random.default_rng(3).standard_normal((2, 6, 4))
    serial = mc_forward_sequence(spec, params, sequences, 8, seed=5, workers=1)
    threaded = mc_forward_sequence(spec, params, sequences, 8, seed=5, workers=4)
    assert np.array_equal(serial.samples, threaded.samples)


def test_sequence_masks_fixed_across_time_steps() -> None:
    spec = NetworkSpec(
        (
            Lstm(3, 4, recurrent_p=0.5),
            Dropout(0.5),
            Dense(4, 2, Activation.IDENTITY),
        ),
        Head.SOFTMAX,
    )
    params = init_params(spec, 2)
    sequence = np.random.default_rng(5).standard_normal((8, 3))
    samples = mc_forward_sequence(spec, params, sequence, 3, seed=4)

    for t in range(3):
        masks = samples.masks[t]
        recurrent = masks.multiplier(0)
        output = masks.multiplier(1)
        assert recurrent is not None and output is not None
        state = LstmState.zeros((4,))
        steps = []
        for i in range(8):
            state, h = lstm_step(state, sequence[i], params.params[0], recurrent)
            steps.append(h * output)
        dense = params.params[2]
        expected = apply_head(Head.SOFTMAX, np.stack(steps) @ dense["W"] + dense["b"])
        assert np.allclose(samples.samples[t], expected)


def test_forward_kind_checks() -> None:
    frame = frame_network(4, 2, hidden=(3,))
    recurrent = sequence_network(4, 2, hidden=(3,), lstm_hidden=3)
    with pytest.raises(BALDSNetworkSpecError):
        mc_forward(recurrent, init_params(recurrent, 0), np.zeros((5, 4)), 2, seed=0)
    with pytest.raises(BALDSNetworkSpecError):
        mc_forward_sequence(frame, init_params(frame, 0), np.zeros((5, 4)), 2, seed=0)
    with pytest.raises(BALDSShapeError):
        mc_forward(frame, init_params(frame, 0), np.zeros(4), 0, seed=0)


def test_posterior_mean() -> None:
    rng = np.random.default_rng(6)
    raw = rng.dirichlet(np.ones(4), size=(10, 3))
    samples = PosteriorSamples(raw, Head.SOFTMAX)
    mean = posterior_mean(samples)
    assert mean.shape == (3, 4)
    assert np.allclose(mean.sum(axis=-1), 1.0)

    shuffled = PosteriorSamples(raw[rng.permutation(10)], Head.SOFTMAX)
    assert np.allclose(posterior_mean(shuffled), mean)

    with pytest.raises(BALDSShapeError):
        PosteriorSamples(np.zeros((0, 4)), Head.SOFTMAX)


def test_inverted_dropout_keeps_expectation() -> None:
    spec = NetworkSpec(
        (
            Dense(4, 6, Activation.TANH),
            Dropout(0.5),
            Dense(6, 3, Activation.IDENTITY),
        ),
        Head.SOFTMAX,
    )
    params = init_params(spec, 0)
    x = np.random.default_rng(8).standard_normal(4)
    deterministic = forward(spec, params, x).activations[2]
    draws = np.stack(
        [forward(spec, params, x, sample_masks(spec, 3, t)).activations[2] for t in range(10_000)]
    )
    standard_error = draws.std(axis=0) / np.sqrt(draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - deterministic) <= 3 * standard_error)


def test_short_run_mean_agrees_with_long_run() -> None:
    spec = frame_network(4, 3, p=0.5, head=Head.SOFTMAX, hidden=(16,))
    params = init_params(spec, 2)
    x = np.random.default_rng(9).standard_normal(4)
    short = mc_forward(spec, params, x, 100, seed=1)
    long_run = mc_forward(spec, params, x, 10_000, seed=2)
    standard_error = long_run.samples.std(axis=0) / np.sqrt(100)
    difference = np.abs(posterior_mean(short) - posterior_mean(long_run))
    assert np.all(difference <= 3 * standard_error)


def test_constant_input_through_stateless_lstm() -> None:
    spec = NetworkSpec(
        (
            Dense(3, 5),
            Dropout(0.5),
            Lstm(5, 4, recurrent_p=0.5),
            Dropout(0.5),
            Dense(4, 2, Activation.IDENTITY),
        ),
        Head.SOFTMAX,
    )
    params = init_params(spec, 4)
    lstm = params.params[2]
    # No recurrent weights and a closed forget gate: nothing carries between steps
    lstm["U"][...] = 0.0
    lstm["W"][:, 4:8] = 0.0
    lstm["b"][4:8] = -1e3
    sequence = np.tile(np.array([0.3, -1.1, 0.8]), (6, 1))

    samples = mc_forward_sequence(spec, params, sequence, 5, seed=3).samples
    assert samples.shape == (5, 6, 2)
    for t in range(1, 6):
        assert np.allclose(samples[:, t], samples[:, 0], rtol=0.0, atol=1e-12)
    assert np.ptp(samples[:, 0, 0]) > 0.0
