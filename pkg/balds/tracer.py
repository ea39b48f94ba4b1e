"""
OpenTelemetry spans for experiments.

A run opens `active_learning_run`; every round nests a `round` span holding
`train` and `score_pool`. Spans opened inside `BALDSTracer.run` carry the
experiment attributes of that run's config, other spans those of the config
that was last loaded. Spans finish with an error status when the block raises.
"""

import os
from contextlib import contextmanager
from contextvars import ContextVar
from typing import TYPE_CHECKING, Dict, Iterator, Optional, Tuple, Union

from opentelemetry import trace
from opentelemetry.exporter.otlp.proto.http.trace_exporter import OTLPSpanExporter
from opentelemetry.sdk.resources import Resource
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import BatchSpanProcessor, ConsoleSpanExporter
from opentelemetry.trace import Span, Status, StatusCode

if TYPE_CHECKING:
    from balds.balds_config import ExperimentConfig

SpanAttributes = Dict[str, Union[str, bool, int, float, None]]

# Open spans of the current thread, innermost last
_open_spans: ContextVar[Tuple[Span, ...]] = ContextVar("balds_open_spans", default=())
# Experiment attributes of the run open in the current thread
_run_attributes: ContextVar[Optional[SpanAttributes]] = ContextVar(
    "balds_run_attributes", default=None
)

EXPERIMENT_KEYS = ("task", "granularity", "acquisition", "aggregation", "mc_passes")


def experiment_attributes(config: "ExperimentConfig") -> SpanAttributes:
    return {f"balds.{key}": config[key] for key in EXPERIMENT_KEYS}  # type: ignore


def current_run_attributes() -> Optional[SpanAttributes]:
    return _run_attributes.get()


class BALDSTracer:

    def __init__(self) -> None:
        self.attributes: SpanAttributes = {}

    def config(self, config: "ExperimentConfig") -> None:
        """Install an exporting provider once, if an endpoint or console traces are asked for."""
        self.attributes = experiment_attributes(config)
        endpoint = config["otlp_traces_endpoint"]
        console = bool(os.environ.get("BALDS_CONSOLE_TRACES"))
        if not (endpoint or console) or isinstance(trace.get_tracer_provider(), TracerProvider):
            return
        provider = TracerProvider(resource=Resource.create({"service.name": "balds"}))
        if console:
            provider.add_span_processor(BatchSpanProcessor(ConsoleSpanExporter()))
        if endpoint:
            provider.add_span_processor(BatchSpanProcessor(OTLPSpanExporter(endpoint=endpoint)))
        trace.set_tracer_provider(provider)

    def start_span(
        self, name: str, attributes: SpanAttributes, parent: Optional[Span] = None
    ) -> Span:
        context = trace.set_span_in_context(parent) if parent is not None else None
        span: Span = trace.get_tracer("balds").start_span(name=name, context=context)
        inherited = current_run_attributes() or self.attributes
        for k, v in {**inherited, **attributes}.items():
            if v is not None:
                span.set_attribute(k, v)
        return span

    def end_span(self, span: Span, error: Optional[BaseException] = None) -> None:
        if error is None:
            span.set_status(Status(StatusCode.OK))
        else:
            span.record_exception(error)
            span.set_status(Status(StatusCode.ERROR, description=str(error)))
        span.end()

    @contextmanager
    def span(self, name: str, attributes: Optional[SpanAttributes] = None) -> Iterator[Span]:
        """A span nested under the innermost span opened by this context manager."""
        stack = _open_spans.get()
        current = self.start_span(name, attributes or {}, stack[-1] if stack else None)
        token = _open_spans.set(stack + (current,))
        try:
            yield current
        except BaseException as e:
            self.end_span(current, e)
            raise
        else:
            self.end_span(current)
        finally:
            _open_spans.reset(token)

    @contextmanager
    def run(self, name: str, config: "ExperimentConfig") -> Iterator[Span]:
        """Root span of one experiment; spans and log records inside carry its config's attributes."""
        token = _run_attributes.set(experiment_attributes(config))
        try:
            with self.span(name) as current:
                yield current
        finally:
            _run_attributes.reset(token)


balds_tracer = BALDSTracer()
