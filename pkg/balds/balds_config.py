import json
import os
import re
from importlib import resources
from typing import Any, Dict, Literal, Optional, TypedDict

import yaml
from jsonschema import ValidationError, validate

from balds.error import BALDSConfigError
from balds.logger import balds_logger

TaskName = Literal["multilabel", "phase"]
GranularityName = Literal["frame", "video", "segment"]
AcquisitionName = Literal[
    "variance", "variation_ratio", "entropy", "mutual_information", "random"
]
AggregationName = Literal["max", "mean"]

# Learning rates used for the instrument and phase networks on the full-size data.
TASK_LEARNING_RATES: Dict[str, float] = {"multilabel": 1e-6, "phase": 5e-5}


class ExperimentConfig(TypedDict):
    """
    Data structure containing one active-learning experiment.

    This configuration is typically loaded from a flat `key=value` file.
    Keys are exactly the field names below; unknown keys are rejected.

    Attributes:
        task (str): `multilabel` (frame-wise instrument presence) or `phase` (recurrent phase segmentation)
        granularity (str): Query unit, `frame`, `video` or `segment`
        acquisition (str): Acquisition function, or `random` for the baseline
        aggregation (str): `max` or `mean` reduction of per-class / per-frame scores
        mc_passes (int): Monte Carlo dropout passes T
        dropout (float): Dropout probability of every dropout layer
        initial_fraction (float): Annotated fraction before the first round
        step_fraction (float): Fraction acquired per round
        final_fraction (float): Annotated fraction at which the loop stops
        max_epochs (int): Epoch cap per training run
        cost_threshold (float): Early-stop threshold on the mean epoch cost
        learning_rate (float): Adam learning rate
        weight_decay (float): Coupled L2 weight decay
        batch_size (int): Frames or videos per optimizer step
        segment_length (int): Segment length in frames
        init_seed (int): Parameter initialization seed
        mc_seed (int): Dropout mask and random-acquisition seed
        data_seed (int): Synthetic dataset seed
        repetitions (int): Random-baseline runs averaged by `compare`
        trials (int): Independent paired trials pooled into the significance test
        dataset_path (str): Dataset file, or None to generate one
        workers (int): Thread-pool width
        log_level (str): Level of the `balds` logger
        otlp_logs_endpoint (str): Optional OTLP log endpoint
        otlp_traces_endpoint (str): Optional OTLP trace endpoint

    """

    task: TaskName
    granularity: GranularityName
    acquisition: AcquisitionName
    aggregation: AggregationName
    mc_passes: int
    dropout: float
    initial_fraction: float
    step_fraction: float
    final_fraction: float
    max_epochs: int
    cost_threshold: float
    learning_rate: float
    weight_decay: float
    batch_size: int
    segment_length: int
    init_seed: int
    mc_seed: int
    data_seed: int
    repetitions: int
    trials: int
    dataset_path: Optional[str]
    workers: int
    log_level: str
    otlp_logs_endpoint: Optional[str]
    otlp_traces_endpoint: Optional[str]


DEFAULTS: Dict[str, Any] = {
    "granularity": "frame",
    "acquisition": "entropy",
    "aggregation": "mean",
    "mc_passes": 20,
    "dropout": 0.5,
    "initial_fraction": 0.10,
    "step_fraction": 0.10,
    "final_fraction": 0.60,
    "max_epochs": 100,
    "cost_threshold": 5e-4,
    "learning_rate": None,
    "weight_decay": 1e-4,
    "batch_size": 128,
    "segment_length": 300,
    "init_seed": 0,
    "mc_seed": 1,
    "data_seed": 2,
    "repetitions": 4,
    "trials": 1,
    "dataset_path": None,
    "workers": 1,
    "log_level": "INFO",
    "otlp_logs_endpoint": None,
    "otlp_traces_endpoint": None,
}


def substitute_env_vars(content: str) -> str:
    regex = r"\$\{([^}]+)\}"  # Regex to match ${VAR_NAME} style placeholders

    def replace_func(match: re.Match[str]) -> str:
        var_name = match.group(1)
        value = os.environ.get(var_name, "")
        if value == "":
            balds_logger.warning(
                f"Variable {var_name} would be substituted from the process environment into the experiment config, but is not defined"
            )
        return value

    return re.sub(regex, replace_func, content)


def coerce_value(value: str) -> Any:
    if not value:
        return None
    coerced = yaml.safe_load(value)
    if isinstance(coerced, str):
        # YAML 1.1 reads exponent floats without a dot (5e-4) as strings
        try:
            return float(coerced)
        except ValueError:
            return coerced
    return coerced


def parse_config_text(content: str) -> Dict[str, Any]:
    """Parse flat `key=value` lines; values are coerced to scalars with YAML rules."""
    data: Dict[str, Any] = {}
    for lineno, raw in enumerate(substitute_env_vars(content).splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BALDSConfigError(f"line {lineno}: expected key=value, got '{line}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise BALDSConfigError(f"line {lineno}: empty key")
        if key in data:
            raise BALDSConfigError(f"line {lineno}: duplicate key '{key}'")
        data[key] = coerce_value(value)
    return data


def resolve_config(data: Dict[str, Any]) -> ExperimentConfig:
    """
    Validate a partial configuration and fill in the defaults.

    The data is validated against the configuration file schema, then the
    cross-field constraints are checked.

    Args:
        data (Dict[str, Any]): Keys and values as read from a config file

    Returns:
        ExperimentConfig: The complete configuration

    """

    # Load the JSON schema relative to the package root
    schema_file = resources.files("balds").joinpath("balds-config.schema.json")
    with schema_file.open("r") as f:
        schema = json.load(f)

    try:
        validate(instance=data, schema=schema)
    except ValidationError as e:
        raise BALDSConfigError(f"Validation error: {e.message}")

    merged: Dict[str, Any] = {"task": data["task"], **DEFAULTS, **data}
    if merged["learning_rate"] is None:
        merged["learning_rate"] = TASK_LEARNING_RATES[merged["task"]]

    if not 0 < merged["initial_fraction"] <= merged["final_fraction"] <= 1:
        raise BALDSConfigError(
            "fractions must satisfy 0 < initial_fraction <= final_fraction <= 1"
        )
    if merged["step_fraction"] <= 0:
        raise BALDSConfigError("step_fraction must be positive")

    return merged  # type: ignore


def load_config(config_file_path: str) -> ExperimentConfig:
    """
    Load an `ExperimentConfig` from a flat `key=value` file.

    Args:
        config_file_path (str): The path to the configuration file.

    Returns:
        ExperimentConfig: The loaded configuration, defaults filled in

    """

    with open(config_file_path, "r") as file:
        content = file.read()
    return resolve_config(parse_config_text(content))


def dump_config(config: ExperimentConfig) -> str:
    """Render a configuration back to `key=value` text, keys in schema order."""
    lines = []
    for key, value in config.items():
        rendered = "null" if value is None else json.dumps(value).strip('"')
        lines.append(f"{key}={rendered}")
    return "\n".join(lines) + "\n"
