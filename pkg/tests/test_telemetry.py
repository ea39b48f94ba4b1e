import logging
from typing import Iterator, List

import pytest
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import SimpleSpanProcessor
from opentelemetry.sdk.trace.export.in_memory_span_exporter import InMemorySpanExporter
from opentelemetry.trace import StatusCode
from pytest_mock import MockerFixture

from balds.dataset import Dataset
from balds.harness import compare_to_random, run_active_learning
from balds.logger import ExperimentRecordFilter, balds_logger, config_logger
from balds.tracer import balds_tracer
from tests.conftest import desk_config


@pytest.fixture()
def exporter(mocker: MockerFixture) -> Iterator[InMemorySpanExporter]:
    memory = InMemorySpanExporter()
    provider = TracerProvider()
    provider.add_span_processor(SimpleSpanProcessor(memory))
    mocker.patch("balds.tracer.trace.get_tracer", provider.get_tracer)
    yield memory
    memory.clear()


def test_spans_nest(exporter: InMemorySpanExporter) -> None:
    with balds_tracer.span("outer", {"label": "a"}) as outer:
        with balds_tracer.span("inner"):
            pass
    with balds_tracer.span("after"):
        pass

    spans = {s.name: s for s in exporter.get_finished_spans()}
    assert spans["inner"].parent is not None
    assert spans["inner"].parent.span_id == outer.get_span_context().span_id
    assert spans["outer"].parent is None
    assert spans["after"].parent is None
    assert spans["outer"].attributes["label"] == "a"
    assert spans["outer"].status.status_code == StatusCode.OK


def test_failed_span_records_error(exporter: InMemorySpanExporter) -> None:
    with pytest.raises(ValueError):
        with balds_tracer.span("failing"):
            raise ValueError("boom")
    with balds_tracer.span("next"):
        pass

    spans = {s.name: s for s in exporter.get_finished_spans()}
    assert spans["failing"].status.status_code == StatusCode.ERROR
    assert [e.name for e in spans["failing"].events] == ["exception"]
    assert spans["next"].parent is None


def test_run_spans(exporter: InMemorySpanExporter, multilabel_dataset: Dataset) -> None:
    run_active_learning(desk_config(max_epochs=2), multilabel_dataset)
    spans = exporter.get_finished_spans()
    names = [s.name for s in spans]
    assert names.count("active_learning_run") == 1
    assert names.count("round") == 3
    assert names.count("train") == 3
    assert names.count("score_pool") == 2

    run = next(s for s in spans if s.name == "active_learning_run")
    assert run.attributes["balds.acquisition"] == "entropy"
    assert run.attributes["balds.mc_passes"] == 4
    round_ids = {s.context.span_id for s in spans if s.name == "round"}
    for s in spans:
        if s.name == "round":
            assert s.parent.span_id == run.context.span_id
        if s.name in ("train", "score_pool"):
            assert s.parent.span_id in round_ids


def test_record_filter() -> None:
    record = logging.LogRecord("balds", logging.INFO, __file__, 1, "message", None, None)
    assert ExperimentRecordFilter(desk_config(acquisition="variance")).filter(record)
    assert record.__dict__["balds.acquisition"] == "variance"
    assert record.__dict__["balds.task"] == "multilabel"
    assert "balds.run_id" in record.__dict__


def test_config_logger_replaces_filter() -> None:
    level = balds_logger.level
    try:
        config_logger(desk_config(log_level="DEBUG"))
        config_logger(desk_config(acquisition="mutual_information", log_level="WARNING"))
        filters = [f for f in balds_logger.filters if isinstance(f, ExperimentRecordFilter)]
        assert len(filters) == 1
        assert filters[0].extra["balds.acquisition"] == "mutual_information"
        assert balds_logger.level == logging.WARNING
    finally:
        for f in list(balds_logger.filters):
            balds_logger.removeFilter(f)
        balds_logger.setLevel(level)


def test_runs_carry_their_own_attributes(
    exporter: InMemorySpanExporter, multilabel_dataset: Dataset
) -> None:
    configured = balds_tracer.attributes
    try:
        balds_tracer.config(desk_config(acquisition="variance"))
        compare_to_random(desk_config(max_epochs=2, acquisition="variance"), multilabel_dataset)
    finally:
        balds_tracer.attributes = configured

    spans = exporter.get_finished_spans()
    roots = {s.context.trace_id: s for s in spans if s.name == "active_learning_run"}
    assert sorted(r.attributes["balds.acquisition"] for r in roots.values()) == [
        "random",
        "random",
        "variance",
    ]
    for s in spans:
        root = roots[s.context.trace_id]
        assert s.attributes["balds.acquisition"] == root.attributes["balds.acquisition"]
    assert any(
        s.name == "train" and s.attributes["balds.acquisition"] == "random" for s in spans
    )


def test_records_carry_run_attributes() -> None:
    records: List[logging.LogRecord] = []
    handler = logging.Handler()
    handler.emit = records.append  # type: ignore[method-assign]
    balds_logger.addHandler(handler)
    level = balds_logger.level
    try:
        config_logger(desk_config(acquisition="entropy"))
        with balds_tracer.run("baseline", desk_config(acquisition="random")):
            balds_logger.warning("inside")
        balds_logger.warning("outside")
    finally:
        balds_logger.removeHandler(handler)
        for f in list(balds_logger.filters):
            balds_logger.removeFilter(f)
        balds_logger.setLevel(level)

    assert [r.__dict__["balds.acquisition"] for r in records] == ["random", "entropy"]
