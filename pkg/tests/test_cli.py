import hashlib
import json
import os
from pathlib import Path

from typer.testing import CliRunner

from balds.cli import app, exit_code_for
from balds.dataset import load_dataset
from balds.error import BALDSDataError, BALDSNumericalError, BALDSStatisticsError

runner = CliRunner()


def flat(output: str) -> str:
    return " ".join(output.split())


def write_config(directory: Path, dataset_path: str, **extra: str) -> str:
    lines = [
        "task=multilabel",
        "acquisition=entropy",
        "mc_passes=2",
        "dropout=0.1",
        "initial_fraction=0.2",
        "step_fraction=0.2",
        "final_fraction=0.4",
        "max_epochs=2",
        "learning_rate=0.01",
        "batch_size=32",
        f"dataset_path={dataset_path}",
    ] + [f"{key}={value}" for key, value in extra.items()]
    path = os.path.join(directory, "experiment.conf")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    return path


def generate_small(directory: Path) -> str:
    path = os.path.join(directory, "small.balds")
    result = runner.invoke(
        app,
        ["generate", "multilabel", "-o", path, "--videos", "6", "--frames", "20", "--features", "8"],
    )
    assert result.exit_code == 0, result.output
    assert "Wrote 120 frames in 6 videos" in result.output
    return path


def test_generate(tmp_path: Path) -> None:
    dataset = load_dataset(generate_small(tmp_path))
    assert dataset.task == "multilabel"
    assert (dataset.feature_dim, dataset.num_classes) == (8, 7)

    phases = os.path.join(tmp_path, "phases.balds")
    result = runner.invoke(app, ["generate", "phase", "-o", phases, "--videos", "3"])
    assert result.exit_code == 0, result.output
    assert load_dataset(phases).task == "phase"

    result = runner.invoke(app, ["generate", "tracking", "-o", phases])
    assert result.exit_code == 2
    assert "unknown task" in result.output


def test_run_and_report(tmp_path: Path) -> None:
    config_path = write_config(tmp_path, generate_small(tmp_path))
    output = os.path.join(tmp_path, "result.json")
    result = runner.invoke(app, ["run", config_path, "-o", output])
    assert result.exit_code == 0, result.output
    assert "Wrote 2 checkpoints" in result.output
    with open(output) as f:
        document = json.load(f)
    assert document["label"] == "entropy+mean"
    assert len(document["checkpoints"]) == 2

    csv_dir = os.path.join(tmp_path, "tables")
    result = runner.invoke(app, ["report", output, output, "--csv-dir", csv_dir])
    assert result.exit_code == 0, result.output
    assert "Weighted F1 % (accuracy %)" in result.output
    assert sorted(os.listdir(csv_dir)) == [
        "occurrence_0.csv",
        "occurrence_1.csv",
        "performance.csv",
    ]
    with open(os.path.join(csv_dir, "performance.csv")) as f:
        assert f.readline() == "annotated %,entropy+mean,entropy+mean\n"


def test_exit_codes(tmp_path: Path) -> None:
    dataset_path = generate_small(tmp_path)
    output = os.path.join(tmp_path, "result.json")

    bad_key = write_config(tmp_path, dataset_path, learning_rat="0.1")
    result = runner.invoke(app, ["run", bad_key, "-o", output])
    assert result.exit_code == 2

    result = runner.invoke(app, ["run", os.path.join(tmp_path, "missing.conf"), "-o", output])
    assert result.exit_code == 2

    corrupt = os.path.join(tmp_path, "corrupt.balds")
    with open(dataset_path, "rb") as f, open(corrupt, "wb") as g:
        g.write(f.read()[:-40])
    result = runner.invoke(app, ["run", write_config(tmp_path, corrupt), "-o", output])
    assert result.exit_code == 3

    missing = write_config(tmp_path, os.path.join(tmp_path, "missing.balds"))
    result = runner.invoke(app, ["run", missing, "-o", output])
    assert result.exit_code == 3
    assert "cannot read dataset" in flat(result.output)

    body = b"BALDS v1 task=multilabel F=2 C=7\nvideo v000 1\nvideo v001 0\n"
    body += b"frame v000 0 0.5 1 | 0 1 0 0 0 0 0\n"
    empty = os.path.join(tmp_path, "empty-video.balds")
    with open(empty, "wb") as g:
        g.write(body + f"end 1 {hashlib.sha256(body).hexdigest()}\n".encode())
    result = runner.invoke(app, ["run", write_config(tmp_path, empty), "-o", output])
    assert result.exit_code == 3
    assert "v001 has no frames" in flat(result.output)

    phases = os.path.join(tmp_path, "phases.balds")
    assert runner.invoke(app, ["generate", "phase", "-o", phases, "--videos", "3"]).exit_code == 0
    result = runner.invoke(app, ["run", write_config(tmp_path, phases), "-o", output])
    assert result.exit_code == 2
    assert "holds a phase task" in flat(result.output)

    result = runner.invoke(app, ["report", os.path.join(tmp_path, "missing.json")])
    assert result.exit_code == 2
    assert not os.path.exists(output)


def test_exit_code_mapping() -> None:
    assert exit_code_for(BALDSNumericalError("cost became nan")) == 4
    assert exit_code_for(BALDSDataError("bad header")) == 3
    assert exit_code_for(BALDSStatisticsError("too few pairs")) is None


def test_compare(tmp_path: Path) -> None:
    config_path = write_config(tmp_path, generate_small(tmp_path), repetitions="2")
    output = os.path.join(tmp_path, "comparison.json")
    result = runner.invoke(app, ["compare", config_path, "-o", output])
    assert result.exit_code == 0, result.output
    assert "Wrote comparison" in result.output
    with open(output) as f:
        document = json.load(f)
    assert len(document["baseline"]["weighted_f1"]) == 2
    assert len(document["trials"]) == 1

    result = runner.invoke(app, ["report", output])
    assert result.exit_code == 0, result.output
    assert "random (avg)" in result.output
