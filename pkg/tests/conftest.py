from typing import Any, Dict

import pytest

from balds.balds_config import ExperimentConfig, resolve_config
from balds.dataset import Dataset
from balds.logger import init_logger
from balds.network import Activation, Dense, Dropout, Head, Lstm, NetworkSpec
from balds.synthetic import (
    MultiLabelTaskSpec,
    PhaseTaskSpec,
    generate_multilabel,
    generate_phases,
)


@pytest.fixture(scope="session", autouse=True)
def console_logger() -> None:
    init_logger()


def tiny_multilabel_dataset(noise: float = 0.0, num_videos: int = 8) -> Dataset:
    return generate_multilabel(
        MultiLabelTaskSpec(
            num_classes=3,
            feature_dim=6,
            prevalences=(0.5, 0.3, 0.4),
            noise=noise,
            num_videos=num_videos,
            frames_per_video=20,
        ),
        5,
    )


def tiny_phase_dataset(noise: float = 0.0, num_videos: int = 8) -> Dataset:
    return generate_phases(
        PhaseTaskSpec(
            num_phases=3,
            feature_dim=6,
            mean_dwell=(5.0, 5.0, 5.0),
            noise=noise,
            num_videos=num_videos,
        ),
        5,
    )


@pytest.fixture()
def multilabel_dataset() -> Dataset:
    return tiny_multilabel_dataset()


@pytest.fixture()
def phase_dataset() -> Dataset:
    return tiny_phase_dataset()


def desk_config(**overrides: Any) -> ExperimentConfig:
    """Small, fast settings for runs on the tiny datasets."""
    data: Dict[str, Any] = {
        "task": "multilabel",
        "granularity": "frame",
        "acquisition": "entropy",
        "aggregation": "mean",
        "mc_passes": 4,
        "dropout": 0.1,
        "initial_fraction": 0.2,
        "step_fraction": 0.2,
        "final_fraction": 0.6,
        "max_epochs": 8,
        "cost_threshold": 0.0,
        "learning_rate": 0.01,
        "batch_size": 32,
        "segment_length": 5,
        "repetitions": 2,
    }
    data.update(overrides)
    return resolve_config(data)


@pytest.fixture()
def config() -> ExperimentConfig:
    return desk_config()


@pytest.fixture()
def dense_spec() -> NetworkSpec:
    return NetworkSpec(
        (
            Dense(4, 6, Activation.TANH),
            Dropout(0.3),
            Dense(6, 3, Activation.IDENTITY),
        ),
        Head.SIGMOID,
    )


@pytest.fixture()
def recurrent_spec() -> NetworkSpec:
    return NetworkSpec(
        (
            Dense(3, 5, Activation.TANH),
            Dropout(0.2),
            Lstm(5, 4, recurrent_p=0.25),
            Dropout(0.2),
            Dense(4, 3, Activation.IDENTITY),
        ),
        Head.SOFTMAX,
    )


# Pretty-print test names
def pytest_collection_modifyitems(session: Any, config: Any, items: Any) -> None:
    for item in items:
        item._nodeid = "\n" + item.nodeid + "\n"
