import numpy as np
import pytest

from balds.error import BALDSConfigError
from balds.synthetic import (
    DEFAULT_PREVALENCES,
    MultiLabelTaskSpec,
    PhaseTaskSpec,
    generate_multilabel,
    generate_phases,
    orthonormal_signatures,
)


def test_signatures_are_orthonormal() -> None:
    signatures = orthonormal_signatures(7, 16, 3)
    assert signatures.shape == (7, 16)
    assert np.allclose(signatures @ signatures.T, np.eye(7))
    with pytest.raises(BALDSConfigError):
        orthonormal_signatures(7, 4, 3)


def test_multilabel_generation() -> None:
    spec = MultiLabelTaskSpec(num_videos=50, noise=0.0)
    dataset = generate_multilabel(spec, 2)
    assert dataset.task == "multilabel"
    assert (dataset.feature_dim, dataset.num_classes) == (64, 7)
    assert len(dataset.videos) == 50 and dataset.total_frames == 50 * 200
    assert [v.id for v in dataset.videos[:2]] == ["v000", "v001"]

    labels = np.concatenate([v.labels for v in dataset.videos])
    assert np.allclose(labels.mean(axis=0), DEFAULT_PREVALENCES, atol=0.03)

    # Without noise the features are exactly the sum of the present signatures
    signatures = orthonormal_signatures(7, 16, 2)
    video = dataset.videos[4]
    assert np.allclose(video.features, video.labels @ signatures)


def test_generation_is_seeded() -> None:
    spec = MultiLabelTaskSpec(num_videos=3, frames_per_video=10)
    first, second = generate_multilabel(spec, 9), generate_multilabel(spec, 9)
    other = generate_multilabel(spec, 10)
    for a, b, c in zip(first.videos, second.videos, other.videos):
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)
        assert not np.array_equal(a.features, c.features)


def test_multilabel_spec_validation() -> None:
    with pytest.raises(BALDSConfigError):
        MultiLabelTaskSpec(num_classes=3)
    with pytest.raises(BALDSConfigError):
        MultiLabelTaskSpec(num_classes=2, prevalences=(0.5, 1.0))
    with pytest.raises(BALDSConfigError):
        MultiLabelTaskSpec(noise=-0.1)


def test_transition_matrix() -> None:
    spec = PhaseTaskSpec(num_phases=4, mean_dwell=(2.0, 4.0, 5.0, 10.0), skip=0.25)
    matrix = spec.transition_matrix()
    assert matrix.shape == (5, 5)
    assert np.allclose(matrix.sum(axis=1), 1.0)
    assert np.allclose(np.diag(matrix)[:4], [0.5, 0.75, 0.8, 0.9])
    assert matrix[0, 2] == pytest.approx(0.5 * 0.25)
    assert matrix[2, 3] == pytest.approx(0.2)
    assert matrix[4, 4] == 1.0
    assert np.all(np.tril(matrix, -1) == 0.0)


def test_fixed_dwell_staircase() -> None:
    spec = PhaseTaskSpec(num_phases=4, mean_dwell=(3.0,) * 4, fixed_dwell=3, num_videos=2)
    dataset = generate_phases(spec, 0)
    for video in dataset.videos:
        assert video.labels.tolist() == [0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]


def test_phases_move_strictly_forward() -> None:
    spec = PhaseTaskSpec(num_videos=20)
    dataset = generate_phases(spec, 1)
    assert dataset.task == "phase" and dataset.num_classes == 7
    for video in dataset.videos:
        steps = np.diff(video.labels)
        assert video.labels[0] == 0 and video.labels[-1] == 6
        assert np.all((steps == 0) | (steps == 1))
        assert video.features.shape == (video.labels.shape[0], 16)


def test_mean_dwell() -> None:
    spec = PhaseTaskSpec(num_phases=2, mean_dwell=(10.0, 3.0), num_videos=300, noise=0.0)
    dataset = generate_phases(spec, 4)
    first_phase = [int(np.sum(v.labels == 0)) for v in dataset.videos]
    assert np.mean(first_phase) == pytest.approx(10.0, abs=1.5)
    assert min(first_phase) >= 1


def test_phase_spec_validation() -> None:
    with pytest.raises(BALDSConfigError):
        PhaseTaskSpec(num_phases=3)
    with pytest.raises(BALDSConfigError):
        PhaseTaskSpec(skip=1.0)
    with pytest.raises(BALDSConfigError):
        PhaseTaskSpec(fixed_dwell=0)
