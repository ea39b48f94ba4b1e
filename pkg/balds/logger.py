"""
Logging for experiment runs.

Everything logs to the `balds` logger. The console handler is installed once by
`init_logger`; `config_logger` applies the level of an experiment config and,
when the config names an OTLP logs endpoint, ships records there as well.
"""

import logging
import os
from typing import TYPE_CHECKING, Any, Optional

from opentelemetry._logs import set_logger_provider
from opentelemetry.exporter.otlp.proto.http._log_exporter import OTLPLogExporter
from opentelemetry.sdk._logs import LoggerProvider, LoggingHandler
from opentelemetry.sdk._logs.export import BatchLogRecordProcessor
from opentelemetry.sdk.resources import Resource

from balds.tracer import current_run_attributes, experiment_attributes

if TYPE_CHECKING:
    from balds.balds_config import ExperimentConfig

balds_logger = logging.getLogger("balds")

CONSOLE_FORMAT = "%(asctime)s %(levelname)-7s %(module)s: %(message)s"

_exporting_handler: Optional[LoggingHandler] = None
_experiment_filter: Optional["ExperimentRecordFilter"] = None


class ExperimentRecordFilter(logging.Filter):
    """Attach the run id and experiment settings to each record.

    Records logged inside `balds_tracer.run` carry that run's settings instead of the
    configured ones, so random baselines on worker threads log as random.
    """

    def __init__(self, config: "ExperimentConfig") -> None:
        super().__init__()
        self.extra = {
            "balds.run_id": os.environ.get("BALDS_RUN_ID", "local"),
            **experiment_attributes(config),
        }

    def filter(self, record: Any) -> bool:
        record.__dict__.update({**self.extra, **(current_run_attributes() or {})})
        return True


# Mitigation for https://github.com/open-telemetry/opentelemetry-python/issues/3193
class _ShortFlushLoggerProvider(LoggerProvider):
    def force_flush(self, timeout_millis: int = 5000) -> bool:
        return super().force_flush(timeout_millis)


def init_logger() -> None:
    if balds_logger.handlers:
        return
    balds_logger.propagate = False
    console = logging.StreamHandler()
    console.setFormatter(logging.Formatter(CONSOLE_FORMAT, datefmt="%H:%M:%S"))
    balds_logger.addHandler(console)


def _exporting(endpoint: str) -> LoggingHandler:
    provider = _ShortFlushLoggerProvider(Resource.create({"service.name": "balds"}))
    provider.add_log_record_processor(
        BatchLogRecordProcessor(OTLPLogExporter(endpoint=endpoint), export_timeout_millis=5000)
    )
    set_logger_provider(provider)
    return LoggingHandler(logger_provider=provider)


def config_logger(config: "ExperimentConfig") -> None:
    global _exporting_handler, _experiment_filter
    balds_logger.setLevel(config["log_level"])

    if _experiment_filter is not None:
        balds_logger.removeFilter(_experiment_filter)
    _experiment_filter = ExperimentRecordFilter(config)
    balds_logger.addFilter(_experiment_filter)

    endpoint = config["otlp_logs_endpoint"]
    if endpoint and _exporting_handler is None:
        _exporting_handler = _exporting(endpoint)
        balds_logger.addHandler(_exporting_handler)
