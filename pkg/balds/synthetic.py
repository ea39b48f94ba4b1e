"""
Synthetic stand-ins for surgical-video corpora.

The multi-label task draws per-frame instrument presence from independent
Bernoulli prevalences (two of the seven default classes are rare). The phase
task walks an ordered Markov chain whose self-loops set the dwell time of each
phase. Both emit features as class signatures plus Gaussian noise; the
signatures are orthonormal, so noise 0 makes either task perfectly separable.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from balds.dataset import Dataset, VideoRecord, video_id_for
from balds.error import BALDSConfigError
from balds.network import NumericArray

DEFAULT_PREVALENCES: Tuple[float, ...] = (0.60, 0.05, 0.51, 0.03, 0.08, 0.09, 0.12)
DEFAULT_MEAN_DWELL: Tuple[float, ...] = (24.0, 62.0, 16.0, 62.0, 8.0, 22.0, 6.0)

SIGNATURE_STREAM = 11
LABEL_STREAM = 12
NOISE_STREAM = 13


def orthonormal_signatures(num_classes: int, feature_dim: int, seed: int) -> NumericArray:
    """(C, F) matrix with orthonormal rows."""
    if feature_dim < num_classes:
        raise BALDSConfigError(
            f"{num_classes} linearly independent signatures need at least {num_classes} features"
        )
    rng = np.random.default_rng(np.random.SeedSequence([seed, SIGNATURE_STREAM]))
    q, _ = np.linalg.qr(rng.standard_normal((feature_dim, num_classes)))
    return np.asarray(q.T, dtype=np.float64)


@dataclass(frozen=True)
class MultiLabelTaskSpec:
    num_classes: int = 7
    feature_dim: int = 64
    prevalences: Tuple[float, ...] = DEFAULT_PREVALENCES
    noise: float = 0.3
    num_videos: int = 60
    frames_per_video: int = 200

    def __post_init__(self) -> None:
        if len(self.prevalences) != self.num_classes:
            raise BALDSConfigError(
                f"{len(self.prevalences)} prevalences for {self.num_classes} classes"
            )
        if any(not 0.0 < p < 1.0 for p in self.prevalences):
            raise BALDSConfigError("class prevalences must lie in (0, 1)")
        if self.noise < 0 or self.num_videos < 1 or self.frames_per_video < 1:
            raise BALDSConfigError("noise must be >= 0 and counts positive")


@dataclass(frozen=True)
class PhaseTaskSpec:
    """
    Ordered phase chain.

    Attributes:
        mean_dwell: Expected frames spent in each phase; self-loop = 1 - 1/dwell
        skip: Probability of jumping over the next phase (0 keeps the chain strictly forward)
        fixed_dwell: When set, every phase lasts exactly this many frames

    """

    num_phases: int = 7
    feature_dim: int = 16
    mean_dwell: Tuple[float, ...] = DEFAULT_MEAN_DWELL
    skip: float = 0.0
    noise: float = 0.3
    num_videos: int = 60
    fixed_dwell: Optional[int] = None

    def __post_init__(self) -> None:
        if len(self.mean_dwell) != self.num_phases:
            raise BALDSConfigError(
                f"{len(self.mean_dwell)} dwell times for {self.num_phases} phases"
            )
        if any(d < 1.0 for d in self.mean_dwell):
            raise BALDSConfigError("mean dwell times must be at least one frame")
        if not 0.0 <= self.skip < 1.0:
            raise BALDSConfigError("skip probability must lie in [0, 1)")
        if self.fixed_dwell is not None and self.fixed_dwell < 1:
            raise BALDSConfigError("fixed dwell must be at least one frame")
        if self.noise < 0 or self.num_videos < 1:
            raise BALDSConfigError("noise must be >= 0 and the video count positive")

    @property
    def self_loops(self) -> NumericArray:
        return 1.0 - 1.0 / np.asarray(self.mean_dwell, dtype=np.float64)

    def transition_matrix(self) -> NumericArray:
        """
        (K+1, K+1) row-stochastic matrix; state K is the absorbing end of the video.

        Leaving phase k skips to k+2 with probability `skip` (only when k+2 is a
        phase) and otherwise advances to k+1, the last phase advancing to the end.
        """
        k_count = self.num_phases
        matrix = np.zeros((k_count + 1, k_count + 1))
        for k, stay in enumerate(self.self_loops):
            leave = 1.0 - stay
            matrix[k, k] = stay
            if k + 2 < k_count and self.skip > 0:
                matrix[k, k + 2] = leave * self.skip
                matrix[k, k + 1] = leave * (1.0 - self.skip)
            else:
                matrix[k, k + 1] = leave
        matrix[k_count, k_count] = 1.0
        return matrix


def generate_multilabel(spec: MultiLabelTaskSpec, seed: int) -> Dataset:
    signatures = orthonormal_signatures(spec.num_classes, spec.feature_dim, seed)
    label_rng = np.random.default_rng(np.random.SeedSequence([seed, LABEL_STREAM]))
    noise_rng = np.random.default_rng(np.random.SeedSequence([seed, NOISE_STREAM]))
    prevalences = np.asarray(spec.prevalences)
    videos = []
    for index in range(spec.num_videos):
        draws = label_rng.random((spec.frames_per_video, spec.num_classes))
        labels = (draws < prevalences).astype(np.int64)
        features = labels @ signatures + spec.noise * noise_rng.standard_normal(
            (spec.frames_per_video, spec.feature_dim)
        )
        videos.append(VideoRecord(video_id_for(index), features, labels))
    return Dataset("multilabel", spec.feature_dim, spec.num_classes, videos)


def sample_phase_path(
    spec: PhaseTaskSpec, transitions: NumericArray, rng: np.random.Generator
) -> NumericArray:
    """
    Phase index of every frame of one video.

    Dwell times are drawn directly from their geometric distribution, which is
    the same law as stepping the chain's self-loop frame by frame.
    """
    end = spec.num_phases
    stays = np.diag(transitions)
    phases = []
    state = 0
    while state != end:
        if spec.fixed_dwell is not None:
            dwell = spec.fixed_dwell
        else:
            dwell = int(rng.geometric(1.0 - stays[state]))
        phases.extend([state] * dwell)
        leave = transitions[state].copy()
        leave[state] = 0.0
        if spec.fixed_dwell is not None:
            state += 1
        else:
            state = int(rng.choice(end + 1, p=leave / leave.sum()))
    return np.asarray(phases, dtype=np.int64)


def generate_phases(spec: PhaseTaskSpec, seed: int) -> Dataset:
    signatures = orthonormal_signatures(spec.num_phases, spec.feature_dim, seed)
    transitions = spec.transition_matrix()
    label_rng = np.random.default_rng(np.random.SeedSequence([seed, LABEL_STREAM]))
    noise_rng = np.random.default_rng(np.random.SeedSequence([seed, NOISE_STREAM]))
    videos = []
    for index in range(spec.num_videos):
        phases = sample_phase_path(spec, transitions, label_rng)
        features = signatures[phases] + spec.noise * noise_rng.standard_normal(
            (phases.shape[0], spec.feature_dim)
        )
        videos.append(VideoRecord(video_id_for(index), features, phases))
    return Dataset("phase", spec.feature_dim, spec.num_phases, videos)
