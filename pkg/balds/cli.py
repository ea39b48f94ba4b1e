import os
import typing
from typing import Callable, List, Optional, TypeVar

import typer
from rich import print
from typing_extensions import Annotated

from balds.balds_config import ExperimentConfig, load_config
from balds.dataset import save_dataset
from balds.error import BALDSConfigError, BALDSErrorCode, BALDSException
from balds.harness import compare_to_random, run_active_learning
from balds.logger import balds_logger, config_logger, init_logger
from balds.report import (
    comparison_document,
    occurrence_table,
    performance_table,
    read_result,
    render_csv,
    render_text,
    run_document,
    write_result,
)
from balds.synthetic import (
    DEFAULT_PREVALENCES,
    MultiLabelTaskSpec,
    PhaseTaskSpec,
    generate_multilabel,
    generate_phases,
)
from balds.tracer import balds_tracer

app = typer.Typer()

T = TypeVar("T")

EXIT_CODES = {
    BALDSErrorCode.ConfigError.value: 2,
    BALDSErrorCode.DataFormatError.value: 3,
    BALDSErrorCode.UnknownItem.value: 3,
    BALDSErrorCode.NonFiniteValue.value: 4,
}


def exit_code_for(error: BALDSException) -> Optional[int]:
    if error.balds_error_code is None:
        return None
    return EXIT_CODES.get(error.balds_error_code)


def guarded(action: Callable[[], T]) -> T:
    """Run a command body, turning configuration, data and numerical failures into exit codes."""
    try:
        return action()
    except BALDSException as e:
        code = exit_code_for(e)
        if code is None:
            raise
        print(f"[red]{e}[/red]")
        raise typer.Exit(code=code)


def prepare(config_path: str) -> ExperimentConfig:
    init_logger()
    try:
        config = load_config(config_path)
    except OSError as e:
        raise BALDSConfigError(f"cannot read {config_path}: {e.strerror}")
    config_logger(config)
    balds_tracer.config(config)
    return config


@app.command()
def generate(
    task: Annotated[str, typer.Argument(help="multilabel or phase")],
    output: Annotated[str, typer.Option("--output", "-o", help="Dataset file to write")],
    seed: Annotated[int, typer.Option("--seed", help="Generator seed")] = 2,
    videos: Annotated[int, typer.Option("--videos", help="Number of videos")] = 60,
    frames: Annotated[
        int, typer.Option("--frames", help="Frames per video (multilabel only)")
    ] = 200,
    features: Annotated[
        typing.Optional[int],
        typer.Option("--features", help="Feature dimension (default: the task's own)"),
    ] = None,
    noise: Annotated[float, typer.Option("--noise", help="Gaussian noise level")] = 0.3,
) -> None:
    """Generate a synthetic dataset file."""

    def body() -> None:
        init_logger()
        if task == "multilabel":
            dataset = generate_multilabel(
                MultiLabelTaskSpec(
                    num_classes=len(DEFAULT_PREVALENCES),
                    noise=noise,
                    num_videos=videos,
                    frames_per_video=frames,
                    feature_dim=features or MultiLabelTaskSpec.feature_dim,
                ),
                seed,
            )
        elif task == "phase":
            dataset = generate_phases(
                PhaseTaskSpec(
                    feature_dim=features or PhaseTaskSpec.feature_dim,
                    noise=noise,
                    num_videos=videos,
                ),
                seed,
            )
        else:
            raise BALDSConfigError(f"unknown task '{task}'")
        save_dataset(dataset, output)
        typer.echo(f"Wrote {dataset.total_frames} frames in {len(dataset.videos)} videos to {output}")

    guarded(body)


@app.command()
def run(
    config_path: Annotated[str, typer.Argument(help="Experiment config (key=value)")],
    output: Annotated[str, typer.Option("--output", "-o", help="Result file to write")],
) -> None:
    """Run one active-learning experiment."""

    def body() -> None:
        config = prepare(config_path)
        result = run_active_learning(config)
        write_result(run_document(result), output)
        typer.echo(f"Wrote {len(result.checkpoints)} checkpoints to {output}")

    guarded(body)


@app.command()
def compare(
    config_path: Annotated[str, typer.Argument(help="Experiment config (key=value)")],
    output: Annotated[str, typer.Option("--output", "-o", help="Result file to write")],
) -> None:
    """Run the configured method against the averaged random baseline."""

    def body() -> None:
        config = prepare(config_path)
        comparison = compare_to_random(config)
        write_result(comparison_document(comparison), output)
        if comparison.significance is not None:
            typer.echo(
                f"p = {comparison.significance.p_value:.4g} ({comparison.significance.band})"
            )
        typer.echo(f"Wrote comparison to {output}")

    guarded(body)


@app.command()
def report(
    results: Annotated[List[str], typer.Argument(help="Result files")],
    csv_dir: Annotated[
        typing.Optional[str],
        typer.Option("--csv-dir", help="Also write every table as CSV into this directory"),
    ] = None,
) -> None:
    """Print performance and class-occurrence tables for result files."""

    def body() -> None:
        init_logger()
        documents = []
        for path in results:
            try:
                documents.append(read_result(path))
            except OSError as e:
                raise BALDSConfigError(f"cannot read {path}: {e.strerror}")
        tables = [performance_table(documents)] + [occurrence_table(d) for d in documents]
        for table in tables:
            typer.echo(render_text(table))
        if csv_dir is not None:
            os.makedirs(csv_dir, exist_ok=True)
            names = ["performance.csv"] + [f"occurrence_{i}.csv" for i in range(len(documents))]
            for name, table in zip(names, tables):
                with open(os.path.join(csv_dir, name), "w") as f:
                    f.write(render_csv(table))
            balds_logger.info(f"Wrote {len(tables)} CSV tables to {csv_dir}")

    guarded(body)


if __name__ == "__main__":
    app()
