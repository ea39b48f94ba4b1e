"""
Result files and report tables.

Result files are JSON documents validated against `balds-result.schema.json` and
written with sorted keys, so two identical runs differ only in `wall_clock`.
Reports lay results out as a performance grid (rows: annotated percentage,
columns: methods, cells `F1% (accuracy%)`) and an occurrence grid per result
(rows: rounds, columns: classes, cells `share% (coverage%)`), rendered as CSV or
as aligned text.
"""

import csv
import io
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Dict, List, Sequence

import numpy as np
from jsonschema import ValidationError, validate
from rich import box
from rich.console import Console
from rich.table import Table

from balds.balds_config import ExperimentConfig
from balds.error import BALDSDataError
from balds.harness import Comparison, RunResult

RESULT_VERSION = "1"


def method_label(config: ExperimentConfig) -> str:
    if config["acquisition"] == "random":
        label = "random"
    else:
        label = f'{config["acquisition"]}+{config["aggregation"]}'
    if config["granularity"] != "frame":
        label = f'{config["granularity"]} {label}'
    return label


def run_document(run: RunResult) -> Dict[str, Any]:
    document = run.to_dict()
    document["version"] = RESULT_VERSION
    document["label"] = method_label(run.config)
    return document


def _average_coverage(runs: Sequence[RunResult]) -> List[List[float]]:
    length = min(len(run.checkpoints) for run in runs)
    return [
        np.mean([run.checkpoints[i].occurrences.coverage for run in runs], axis=0).tolist()
        for i in range(length)
    ]


def comparison_document(comparison: Comparison) -> Dict[str, Any]:
    """The first trial's method run, its averaged baseline, every trial's paired curves and the test."""
    document = run_document(comparison.method[0])
    document["baseline"] = {
        "weighted_f1": comparison.baseline_f1[0],
        "accuracy": comparison.baseline_accuracy[0],
        "coverage": _average_coverage(comparison.baselines[0]),
    }
    document["trials"] = [
        {"method_f1": method.f1_curve(), "baseline_f1": baseline}
        for method, baseline in zip(comparison.method, comparison.baseline_f1)
    ]
    document["significance"] = (
        None if comparison.significance is None else comparison.significance.to_dict()
    )
    return document


def validate_result(document: Dict[str, Any]) -> None:
    schema_file = resources.files("balds").joinpath("balds-result.schema.json")
    with schema_file.open("r") as f:
        schema = json.load(f)
    try:
        validate(instance=document, schema=schema)
    except ValidationError as e:
        raise BALDSDataError(f"Result validation error: {e.message}")


def dumps_result(document: Dict[str, Any]) -> str:
    return json.dumps(document, sort_keys=True, indent=2) + "\n"


def write_result(document: Dict[str, Any], path: str) -> None:
    validate_result(document)
    with open(path, "w") as f:
        f.write(dumps_result(document))


def read_result(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r") as f:
            document: Dict[str, Any] = json.load(f)
    except json.JSONDecodeError as e:
        raise BALDSDataError(f"{path} is not JSON: {e.msg}", line=e.lineno, offset=e.pos)
    validate_result(document)
    return document


@dataclass
class ReportTable:
    title: str
    header: List[str]
    rows: List[List[str]] = field(default_factory=list)


def _percent(value: float) -> str:
    return f"{100.0 * value:.1f}"


def performance_table(documents: Sequence[Dict[str, Any]]) -> ReportTable:
    """
    Weighted F1 and accuracy of every result, by annotated percentage.

    Results carrying an averaged baseline add a random-baseline column and a
    significance column.
    """
    header = ["annotated %"]
    columns: List[Dict[int, str]] = []
    for document in documents:
        header.append(document.get("label", method_label(document["config"])))
        columns.append(
            {
                round(100 * c["annotated_fraction"]): f'{_percent(c["weighted_f1"])} ({_percent(c["accuracy"])})'
                for c in document["checkpoints"]
            }
        )
        if "baseline" in document:
            header.append("random (avg)")
            baseline = document["baseline"]
            columns.append(
                {
                    round(100 * c["annotated_fraction"]): f"{_percent(f1)} ({_percent(acc)})"
                    for c, f1, acc in zip(
                        document["checkpoints"], baseline["weighted_f1"], baseline["accuracy"]
                    )
                }
            )
        if document.get("significance"):
            header.append("significance")
            band = document["significance"]["band"]
            columns.append(
                {round(100 * c["annotated_fraction"]): band for c in document["checkpoints"]}
            )
    table = ReportTable("Weighted F1 % (accuracy %)", header)
    for percent in sorted({p for column in columns for p in column}):
        table.rows.append([str(percent)] + [column.get(percent, "-") for column in columns])
    return table


def occurrence_table(document: Dict[str, Any]) -> ReportTable:
    """Per class, share of the labeled set and (in parentheses) coverage of all occurrences, before each round."""
    label = document.get("label", method_label(document["config"]))
    checkpoints = document["checkpoints"]
    num_classes = len(checkpoints[0]["occurrences"]["share"]) if checkpoints else 0
    table = ReportTable(
        f"Class occurrence % (coverage %): {label}",
        ["round", "annotated %"] + [f"class {c}" for c in range(num_classes)],
    )
    for checkpoint in checkpoints:
        occurrences = checkpoint["occurrences"]
        table.rows.append(
            [str(checkpoint["round"]), _percent(checkpoint["annotated_fraction"])]
            + [
                f"{share:.1f} ({coverage:.1f})"
                for share, coverage in zip(occurrences["share"], occurrences["coverage"])
            ]
        )
    if "baseline" in document:
        for index, coverage in enumerate(document["baseline"]["coverage"]):
            table.rows.append(
                [f"random {index}", "-"] + [f"- ({value:.1f})" for value in coverage]
            )
    return table


def render_csv(table: ReportTable) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(table.header)
    writer.writerows(table.rows)
    return buffer.getvalue()


def render_text(table: ReportTable) -> str:
    grid = Table(title=table.title, box=box.SIMPLE)
    for index, heading in enumerate(table.header):
        grid.add_column(heading, justify="left" if index == 0 else "right")
    for row in table.rows:
        grid.add_row(*row)
    buffer = io.StringIO()
    Console(file=buffer, width=200, color_system=None).print(grid)
    return buffer.getvalue()
