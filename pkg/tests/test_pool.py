from typing import Any, List

import numpy as np
import pytest

from balds.acquisition import AggregationKind
from balds.dataset import Dataset, OracleReplay, VideoRecord, oracle_label
from balds.error import (
    BALDSAnnotationError,
    BALDSConfigError,
    BALDSEmptyGroupError,
    BALDSLabelError,
    BALDSUnknownItemError,
)
from balds.pool import (
    Pool,
    Segment,
    Video,
    apply_annotations,
    occurrence_report,
    score_group,
    segment_video,
    select_next,
)


def record(video_id: str, labels: List[Any]) -> VideoRecord:
    values = np.asarray(labels, dtype=np.int64)
    return VideoRecord(video_id, np.zeros((values.shape[0], 2)), values)


def annotate(pool: Pool, oracle: OracleReplay, ids: List[str], round_index: int = 0) -> None:
    units = [pool.unit(value) for value in ids]
    apply_annotations(pool, units, oracle_label(oracle, ids), round_index)


def test_segment_video() -> None:
    video = Video.unlabeled(VideoRecord("v000", np.zeros((7, 2)), np.zeros(7, dtype=np.int64)))
    segments = segment_video(video, 3)
    assert [(s.start, s.end) for s in segments] == [(0, 3), (3, 6), (6, 7)]
    assert [s.id for s in segments] == ["v000/00000-00003", "v000/00003-00006", "v000/00006"]
    assert [s.id for s in segment_video(video, 7)] == ["v000"]
    assert segment_video(video, 10)[0].length == 7
    with pytest.raises(BALDSConfigError):
        segment_video(video, 0)
    with pytest.raises(BALDSConfigError):
        Segment("v000", 5, 9, 7)


def test_video_frames() -> None:
    video = Video.unlabeled(VideoRecord("v003", np.arange(8.0).reshape(4, 2), np.zeros(4, dtype=np.int64)))
    assert video.annotated_frames == 0 and not video.fully_annotated
    frame = video.frame(2)
    assert frame.id == "v003/00002"
    assert np.array_equal(frame.features, [4.0, 5.0])
    assert frame.video_id == "v003" and frame.index == 2


def test_pool_units(multilabel_dataset: Dataset) -> None:
    train, _ = multilabel_dataset.split()
    frames = Pool.from_records(train, "frame", 5, "multilabel", 3)
    assert len(frames.unlabeled) == frames.total_frames == 120
    videos = Pool.from_records(train, "video", 5, "multilabel", 3)
    assert sorted(videos.unlabeled) == [v.id for v in train]
    segments = Pool.from_records(train, "segment", 5, "multilabel", 3)
    assert len(segments.unlabeled) == 6 * 4
    assert segments.annotated_fraction == 0.0
    with pytest.raises(BALDSUnknownItemError):
        segments.unit("v099")


def test_initial_units_take_whole_videos(multilabel_dataset: Dataset) -> None:
    train, _ = multilabel_dataset.split()
    pool = Pool.from_records(train, "frame", 5, "multilabel", 3)
    assert {unit.video_id for unit in pool.initial_units(0.10)} == {"v000"}
    # The video crossing the target is included
    assert {unit.video_id for unit in pool.initial_units(0.2)} == {"v000", "v001"}


def test_select_next_greedy() -> None:
    records = [record(f"v00{i}", [0] * 6) for i in range(2)]
    pool = Pool.from_records(records, "segment", 4, "phase", 1)
    ranked = ["v001/00000-00004", "v000/00004-00006", "v000/00000-00004", "v001/00004-00006"]

    selection = select_next(pool, ranked, 5)
    assert selection.item_ids == ["v001/00000-00004", "v000/00004-00006"]
    assert selection.frame_count == 6 and not selection.exhausted

    exhausted = select_next(pool, ranked, 100)
    assert exhausted.frame_count == 12 and exhausted.exhausted

    with pytest.raises(BALDSUnknownItemError):
        select_next(pool, ["v007"], 1)
    with pytest.raises(BALDSConfigError):
        select_next(pool, ranked, 0)


def test_apply_annotations() -> None:
    records = [record("v000", [[1, 0], [0, 1], [1, 1]]), record("v001", [[0, 0], [1, 0]])]
    oracle = OracleReplay(records)
    pool = Pool.from_records(records, "frame", 1, "multilabel", 2)
    annotate(pool, oracle, ["v000/00001", "v001/00000"], round_index=2)

    video = pool.videos["v000"]
    assert video.mask.tolist() == [False, True, False]
    assert video.labels[1].tolist() == [0, 1]
    assert "v000/00001" in pool.labeled and "v000/00001" not in pool.unlabeled
    assert pool.provenance == {"v000/00001": 2, "v001/00000": 2}
    assert pool.annotated_frames == 2
    assert [v.id for v in pool.unlabeled_videos()] == ["v000", "v001"]
    assert [u.id for u in pool.unlabeled_units("v001")] == ["v001/00001"]

    # The oracle's copy of the labels cannot be edited through the pool
    assert not oracle.labels("v000").flags.writeable

    with pytest.raises(BALDSAnnotationError):
        apply_annotations(pool, [pool.unit("v000/00001")], {"v000/00001": np.array([[0, 1]])})



def test_failed_annotation_leaves_pool_unchanged() -> None:
    records = [record("v000", [0, 1, 2]), record("v001", [2, 2])]
    oracle = OracleReplay(records)
    pool = Pool.from_records(records, "frame", 1, "phase", 3)
    annotate(pool, oracle, ["v000/00000"])

    fresh, done = pool.unit("v001/00001"), pool.unit("v000/00000")
    with pytest.raises(BALDSAnnotationError):
        apply_annotations(pool, [fresh, done], oracle_label(oracle, [fresh.id, done.id]))
    with pytest.raises(BALDSLabelError):
        apply_annotations(
            pool,
            [fresh, pool.unit("v000/00002")],
            {fresh.id: np.array([2]), "v000/00002": np.array([2, 2])},
        )
    with pytest.raises(BALDSAnnotationError):
        apply_annotations(pool, [fresh, fresh], {fresh.id: np.array([2])})

    assert pool.videos["v001"].mask.tolist() == [False, False]
    assert pool.videos["v000"].mask.tolist() == [True, False, False]
    assert fresh.id in pool.unlabeled and fresh.id not in pool.labeled
    assert list(pool.provenance) == ["v000/00000"]
    assert pool.annotated_frames == 1


def test_unlabeled_frames() -> None:
    records = [record("v000", [0, 1, 2]), record("v001", [2, 2])]
    oracle = OracleReplay(records)
    pool = Pool.from_records(records, "frame", 1, "phase", 3)
    annotate(pool, oracle, ["v000/00001", "v001/00000", "v001/00001"])

    frames = pool.unlabeled_frames()
    assert [f.id for f in frames] == sorted(pool.unlabeled) == ["v000/00000", "v000/00002"]
    assert [f.index for f in frames] == [0, 2]
    with pytest.raises(BALDSConfigError):
        Pool.from_records(records, "segment", 2, "phase", 3).unlabeled_frames()

def test_partially_annotated_video_stays_in_pool() -> None:
    records = [record("v000", [0] * 5)]
    oracle = OracleReplay(records)
    pool = Pool.from_records(records, "segment", 2, "phase", 1)
    annotate(pool, oracle, ["v000/00002-00004"])
    assert [v.id for v in pool.unlabeled_videos()] == ["v000"]
    annotate(pool, oracle, ["v000/00000-00002", "v000/00004"], round_index=1)
    assert pool.unlabeled_videos() == []
    assert pool.videos["v000"].fully_annotated
    assert pool.annotated_fraction == 1.0


def test_occurrence_report() -> None:
    records = [
        record("v000", [[1, 0, 0], [1, 1, 0]]),
        record("v001", [[0, 1, 0], [1, 0, 0]]),
    ]
    oracle = OracleReplay(records)
    pool = Pool.from_records(records, "video", 1, "multilabel", 3)
    with pytest.raises(BALDSEmptyGroupError):
        occurrence_report(pool, 0)

    annotate(pool, oracle, ["v000"])
    row = occurrence_report(pool, 0)
    assert row.round == 0
    assert row.share == pytest.approx([100.0, 50.0, 0.0])
    assert row.coverage == pytest.approx([200.0 / 3.0, 50.0, 0.0])

    annotate(pool, oracle, ["v001"], round_index=1)
    full = occurrence_report(pool, 1)
    assert full.coverage == pytest.approx([100.0, 100.0, 0.0])


def test_occurrence_report_phases() -> None:
    records = [record("v000", [0, 0, 2, 1])]
    oracle = OracleReplay(records)
    pool = Pool.from_records(records, "frame", 1, "phase", 3)
    annotate(pool, oracle, ["v000/00000", "v000/00002"])
    row = occurrence_report(pool, 0)
    assert row.share == pytest.approx([50.0, 0.0, 50.0])
    assert row.coverage == pytest.approx([50.0, 0.0, 100.0])


def test_score_group() -> None:
    assert score_group([0.2, 0.6], AggregationKind.MAX) == 0.6
    assert score_group([0.2, 0.6], AggregationKind.MEAN) == pytest.approx(0.4)
    with pytest.raises(BALDSEmptyGroupError):
        score_group([], AggregationKind.MEAN)
