"""
The active-learning experiment loop.

One run labels the first videos, then alternates (train from the fixed
initialization, evaluate on the test videos, score the unlabeled pool with MC
dropout, query one budget step from the oracle) until the final fraction is
reached.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, cast

import numpy as np

from balds.acquisition import (
    AcquisitionKind,
    AggregationKind,
    ScoredItem,
    acquisition_scores,
    rank_pool,
)
from balds.balds_config import ExperimentConfig
from balds.bayes import mc_forward, mc_forward_sequence
from balds.dataset import Dataset, OracleReplay, VideoRecord, load_dataset, oracle_label
from balds.error import BALDSConfigError, BALDSStatisticsError
from balds.logger import balds_logger
from balds.metrics import accuracy, per_class_f1, weighted_f1
from balds.network import NetworkSpec, NumericArray, ParameterStore, init_params
from balds.pool import (
    Frame,
    OccurrenceRow,
    Pool,
    Video,
    apply_annotations,
    occurrence_report,
    score_group,
    select_next,
)
from balds.stats import SignificanceReport, wilcoxon_signed_rank
from balds.synthetic import (
    MultiLabelTaskSpec,
    PhaseTaskSpec,
    generate_multilabel,
    generate_phases,
)
from balds.tracer import balds_tracer
from balds.training import (
    TrainingReport,
    TrainingSettings,
    build_network,
    predict_frames,
    predict_sequence,
    train_frames,
    train_sequences,
    training_sequences,
)

# Seed offsets separating trials and baseline repetitions
TRIAL_SEED_STRIDE = 1000
BASELINE_SEED_STRIDE = 100


@dataclass
class Checkpoint:
    """
    State of a run after training on one labeled set.

    Attributes:
        round: Annotation round that produced the labeled set (0 = initial set)
        annotated_fraction: Annotated share of the training frames
        annotated_frames: Annotated training frames
        weighted_f1: Support-weighted F1 on the test videos
        accuracy: Test accuracy
        per_class_f1: Test F1 of every class
        selected: Item ids labeled in this round
        occurrences: Class balance of the labeled set
        epochs: Epochs trained
        stop_reason: "threshold", "epoch_cap" or "empty"
        final_cost: Mean training cost of the last epoch

    """

    round: int
    annotated_fraction: float
    annotated_frames: int
    weighted_f1: float
    accuracy: float
    per_class_f1: List[float]
    selected: List[str]
    occurrences: OccurrenceRow
    epochs: int
    stop_reason: str
    final_cost: float


@dataclass
class RunResult:
    config: ExperimentConfig
    checkpoints: List[Checkpoint] = field(default_factory=list)
    exhausted: bool = False
    wall_clock: float = 0.0

    def f1_curve(self) -> List[float]:
        return [c.weighted_f1 for c in self.checkpoints]

    def accuracy_curve(self) -> List[float]:
        return [c.accuracy for c in self.checkpoints]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": dict(self.config),
            "checkpoints": [asdict(c) for c in self.checkpoints],
            "exhausted": self.exhausted,
            "wall_clock": self.wall_clock,
        }


def default_dataset(config: ExperimentConfig) -> Dataset:
    """The desk-scale synthetic corpus of the configured task."""
    if config["task"] == "multilabel":
        return generate_multilabel(MultiLabelTaskSpec(), config["data_seed"])
    return generate_phases(PhaseTaskSpec(), config["data_seed"])


def load_experiment_dataset(config: ExperimentConfig) -> Dataset:
    dataset_path = config["dataset_path"]
    if dataset_path is None:
        return default_dataset(config)
    dataset = load_dataset(dataset_path)
    if dataset.task != config["task"]:
        raise BALDSConfigError(
            f"dataset {dataset_path} holds a {dataset.task} task, config asks for {config['task']}"
        )
    return dataset


def checkpoint_count(config: ExperimentConfig) -> int:
    span = config["final_fraction"] - config["initial_fraction"]
    return int(round(span / config["step_fraction"])) + 1


def _train(
    spec: NetworkSpec, params: ParameterStore, pool: Pool, config: ExperimentConfig
) -> TrainingReport:
    settings = TrainingSettings.from_config(config)
    if spec.is_recurrent:
        return train_sequences(
            spec, params, training_sequences(pool.annotated_videos()), settings, config["init_seed"]
        )
    videos = pool.annotated_videos()
    if not videos:
        empty = np.zeros((0, spec.input_dim))
        return train_frames(
            spec, params, empty, np.zeros((0, pool.num_classes)), settings, config["init_seed"]
        )
    features = np.concatenate([v.features[v.mask] for v in videos])
    labels = np.concatenate([v.labels[v.mask] for v in videos])
    return train_frames(spec, params, features, labels, settings, config["init_seed"])


def evaluate(
    spec: NetworkSpec,
    params: ParameterStore,
    test: Sequence[VideoRecord],
    config: ExperimentConfig,
    num_classes: int,
) -> Tuple[float, float, List[float]]:
    """Weighted F1, accuracy and per-class F1 of the MC posterior mean on the test videos."""
    if spec.is_recurrent:
        probabilities = np.concatenate(
            [
                predict_sequence(
                    spec,
                    params,
                    video.features,
                    config["mc_passes"],
                    config["mc_seed"],
                    config["workers"],
                )
                for video in test
            ]
        )
    else:
        probabilities = predict_frames(
            spec,
            params,
            np.concatenate([video.features for video in test]),
            config["mc_passes"],
            config["mc_seed"],
            config["workers"],
        )
    labels = np.concatenate([video.labels for video in test])
    return (
        weighted_f1(probabilities, labels),
        accuracy(probabilities, labels),
        per_class_f1(probabilities, labels, num_classes),
    )


def _frame_scores(
    spec: NetworkSpec, params: ParameterStore, videos: Sequence[Video], config: ExperimentConfig
) -> List[Tuple[NumericArray, Optional[NumericArray]]]:
    """Per-frame acquisition scores (and per-class vectors) of every given video, in one batched MC run."""
    kind = AcquisitionKind(config["acquisition"])
    aggregation = AggregationKind(config["aggregation"])
    lengths = [video.length for video in videos]
    if spec.is_recurrent:
        padded = np.zeros((len(videos), max(lengths), spec.input_dim))
        for row, video in enumerate(videos):
            padded[row, : video.length] = video.features
        samples = mc_forward_sequence(
            spec, params, padded, config["mc_passes"], config["mc_seed"], workers=config["workers"]
        )
        scores, per_class = acquisition_scores(samples, kind, aggregation)
        return [
            (scores[row, :length], None if per_class is None else per_class[row, :length])
            for row, length in enumerate(lengths)
        ]
    samples = mc_forward(
        spec,
        params,
        np.concatenate([video.features for video in videos]),
        config["mc_passes"],
        config["mc_seed"],
        workers=config["workers"],
    )
    scores, per_class = acquisition_scores(samples, kind, aggregation)
    bounds = np.cumsum([0] + lengths)
    return [
        (
            scores[bounds[i] : bounds[i + 1]],
            None if per_class is None else per_class[bounds[i] : bounds[i + 1]],
        )
        for i in range(len(videos))
    ]


def _score_frames(
    spec: NetworkSpec, params: ParameterStore, frames: Sequence[Frame], config: ExperimentConfig
) -> List[ScoredItem]:
    """A frame network scores each frame on its own, so only the unlabeled frames are passed."""
    if not frames:
        return []
    samples = mc_forward(
        spec,
        params,
        np.stack([frame.features for frame in frames]),
        config["mc_passes"],
        config["mc_seed"],
        workers=config["workers"],
    )
    scores, per_class = acquisition_scores(
        samples, AcquisitionKind(config["acquisition"]), AggregationKind(config["aggregation"])
    )
    return [
        ScoredItem(
            frame.id,
            float(scores[row]),
            None if per_class is None else tuple(float(v) for v in per_class[row]),
        )
        for row, frame in enumerate(frames)
    ]


def score_pool(
    spec: NetworkSpec, params: ParameterStore, pool: Pool, config: ExperimentConfig
) -> List[ScoredItem]:
    """Score every unlabeled unit by aggregating the MC scores of its frames."""
    aggregation = AggregationKind(config["aggregation"])
    videos = pool.unlabeled_videos()
    if AcquisitionKind(config["acquisition"]) == AcquisitionKind.RANDOM:
        return [ScoredItem(unit.id, 0.0) for v in videos for unit in pool.unlabeled_units(v.id)]
    if pool.granularity == "frame" and not spec.is_recurrent:
        return _score_frames(spec, params, pool.unlabeled_frames(), config)
    scored: List[ScoredItem] = []
    for video, (scores, per_class) in zip(videos, _frame_scores(spec, params, videos, config)):
        for unit in pool.unlabeled_units(video.id):
            vector = None
            if unit.length == 1 and per_class is not None:
                vector = tuple(float(v) for v in per_class[unit.start])
            scored.append(
                ScoredItem(unit.id, score_group(scores[unit.start : unit.end], aggregation), vector)
            )
    return scored


def round_seed(seed: int, round_index: int) -> int:
    return int(np.random.SeedSequence([seed, round_index]).generate_state(1)[0])


def run_active_learning(
    config: ExperimentConfig, dataset: Optional[Dataset] = None
) -> RunResult:
    """
    Run one active-learning experiment.

    Every round retrains from the same initialization. Pool exhaustion sets
    `exhausted` and ends the run after the checkpoint of the last labeled set.
    """
    started = time.monotonic()
    if dataset is None:
        dataset = load_experiment_dataset(config)
    train, test = dataset.split()
    oracle = OracleReplay(dataset.videos)
    pool = Pool.from_records(
        train, config["granularity"], config["segment_length"], dataset.task, dataset.num_classes
    )
    spec = build_network(dataset.task, dataset.feature_dim, dataset.num_classes, config["dropout"])
    initial = init_params(spec, config["init_seed"])
    step_frames = max(1, int(round(config["step_fraction"] * pool.total_frames)))
    rounds = checkpoint_count(config)
    kind = AcquisitionKind(config["acquisition"])
    result = RunResult(config)

    with balds_tracer.run("active_learning_run", config):
        initial_units = pool.initial_units(config["initial_fraction"])
        selected = [unit.id for unit in initial_units]
        apply_annotations(pool, initial_units, oracle_label(oracle, selected), 0)
        for round_index in range(rounds):
            with balds_tracer.span(
                "round", {"round": round_index, "annotated_fraction": pool.annotated_fraction}
            ):
                params = initial.copy()
                report = _traced_train(spec, params, pool, config)
                f1, acc, class_f1 = evaluate(spec, params, test, config, dataset.num_classes)
                checkpoint = Checkpoint(
                    round=round_index,
                    annotated_fraction=pool.annotated_fraction,
                    annotated_frames=pool.annotated_frames,
                    weighted_f1=f1,
                    accuracy=acc,
                    per_class_f1=class_f1,
                    selected=selected,
                    occurrences=occurrence_report(pool, round_index),
                    epochs=report.epochs,
                    stop_reason=report.stop_reason,
                    final_cost=report.final_cost,
                )
                result.checkpoints.append(checkpoint)
                balds_logger.info(
                    f"Round {round_index}: {100 * checkpoint.annotated_fraction:.1f}% annotated, "
                    f"F1 {f1:.4f}, accuracy {acc:.4f}, stopped by {report.stop_reason}"
                )
                if report.stop_reason == "epoch_cap":
                    balds_logger.warning(
                        f"Cost threshold {config['cost_threshold']} not reached in {report.epochs} epochs"
                    )
                if round_index == rounds - 1:
                    break
                if not pool.unlabeled:
                    result.exhausted = True
                    balds_logger.warning(f"Pool exhausted after round {round_index}")
                    break

                with balds_tracer.span("score_pool") as score_span:
                    scored = score_pool(spec, params, pool, config)
                    score_span.set_attribute("items_scored", len(scored))
                ranked = rank_pool(scored, kind, round_seed(config["mc_seed"], round_index))
                selection = select_next(pool, ranked, step_frames)
                selected = selection.item_ids
                apply_annotations(
                    pool, selection.items, oracle_label(oracle, selected), round_index + 1
                )
                if selection.exhausted:
                    result.exhausted = True
                    balds_logger.warning(
                        f"Pool exhausted in round {round_index + 1}: {selection.frame_count} of {step_frames} frames acquired"
                    )
    result.wall_clock = time.monotonic() - started
    return result


def _traced_train(
    spec: NetworkSpec, params: ParameterStore, pool: Pool, config: ExperimentConfig
) -> TrainingReport:
    with balds_tracer.span("train") as span:
        report = _train(spec, params, pool, config)
        span.set_attribute("epochs", report.epochs)
        span.set_attribute("stop_reason", report.stop_reason)
        span.set_attribute("final_cost", report.final_cost)
    return report


@dataclass
class Comparison:
    """
    An acquisition method against the averaged random baseline.

    Attributes:
        method: One run of the method per trial
        baselines: The random-baseline runs of every trial
        baseline_f1: Per trial, the baseline weighted-F1 curve averaged over repetitions
        baseline_accuracy: Per trial, the averaged baseline accuracy curve
        significance: Wilcoxon test over every (trial, checkpoint) pair, if it could be computed

    """

    method: List[RunResult]
    baselines: List[List[RunResult]]
    baseline_f1: List[List[float]]
    baseline_accuracy: List[List[float]]
    significance: Optional[SignificanceReport]


def trial_config(config: ExperimentConfig, trial: int) -> ExperimentConfig:
    return cast(
        ExperimentConfig,
        {
            **config,
            "init_seed": config["init_seed"] + trial,
            "mc_seed": config["mc_seed"] + TRIAL_SEED_STRIDE * trial,
        },
    )


def baseline_config(
    config: ExperimentConfig, repetition: int, distinct_seeds: bool = True
) -> ExperimentConfig:
    offset = BASELINE_SEED_STRIDE * (repetition + 1) if distinct_seeds else 0
    return cast(
        ExperimentConfig,
        {**config, "acquisition": "random", "mc_seed": config["mc_seed"] + offset},
    )


def _average(curves: Sequence[Sequence[float]]) -> List[float]:
    length = min(len(curve) for curve in curves)
    return [float(v) for v in np.mean([list(curve[:length]) for curve in curves], axis=0)]


def compare_to_random(
    config: ExperimentConfig,
    dataset: Optional[Dataset] = None,
    distinct_baseline_seeds: bool = True,
) -> Comparison:
    """
    Run the configured method and `repetitions` random baselines for every trial.

    Baseline curves are averaged per checkpoint before the test; pairs from all
    trials are pooled into one Wilcoxon signed-rank test on weighted F1.
    """
    if dataset is None:
        dataset = load_experiment_dataset(config)
    methods: List[RunResult] = []
    baselines: List[List[RunResult]] = []
    baseline_f1: List[List[float]] = []
    baseline_accuracy: List[List[float]] = []
    method_pairs: List[float] = []
    baseline_pairs: List[float] = []
    for trial in range(config["trials"]):
        current = trial_config(config, trial)
        variants = [
            baseline_config(current, r, distinct_baseline_seeds)
            for r in range(config["repetitions"])
        ]
        with ThreadPoolExecutor(max_workers=max(1, config["workers"])) as executor:
            method_future = executor.submit(run_active_learning, current, dataset)
            futures = [executor.submit(run_active_learning, v, dataset) for v in variants]
            method = method_future.result()
            runs = [future.result() for future in futures]
        averaged_f1 = _average([run.f1_curve() for run in runs])
        averaged_accuracy = _average([run.accuracy_curve() for run in runs])
        paired = min(len(averaged_f1), len(method.checkpoints))
        method_pairs.extend(method.f1_curve()[:paired])
        baseline_pairs.extend(averaged_f1[:paired])
        methods.append(method)
        baselines.append(runs)
        baseline_f1.append(averaged_f1)
        baseline_accuracy.append(averaged_accuracy)

    significance: Optional[SignificanceReport] = None
    try:
        significance = wilcoxon_signed_rank(method_pairs, baseline_pairs)
        balds_logger.info(
            f"{config['acquisition']}+{config['aggregation']} vs random: "
            f"p = {significance.p_value:.4g} ({significance.band})"
        )
    except BALDSStatisticsError as e:
        balds_logger.warning(f"No significance test: {e.message}")
    return Comparison(methods, baselines, baseline_f1, baseline_accuracy, significance)
