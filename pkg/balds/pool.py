"""
Pool bookkeeping for active learning.

Every query unit is a `Segment`: frame granularity uses length-1 segments, video
granularity one segment spanning the whole video, segment granularity the
fixed-length partition from `segment_video`. Budgets are counted in frames for
all three.
"""

from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, Optional, Sequence

import numpy as np
import numpy.typing as npt

from balds.acquisition import AggregationKind, aggregate
from balds.balds_config import GranularityName, TaskName
from balds.dataset import LabelArray, VideoRecord, item_id
from balds.error import (
    BALDSAnnotationError,
    BALDSConfigError,
    BALDSEmptyGroupError,
    BALDSLabelError,
    BALDSUnknownItemError,
)
from balds.network import NumericArray

AnnotationMask = npt.NDArray[np.bool_]


@dataclass(frozen=True)
class Frame:
    """One frame of a video, the unit of frame-level acquisition."""

    id: str
    features: NumericArray
    video_id: str
    index: int


@dataclass(frozen=True)
class Segment:
    """Frames [start, end) of one video."""

    video_id: str
    start: int
    end: int
    video_length: int

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.end <= self.video_length:
            raise BALDSConfigError(
                f"segment [{self.start}, {self.end}) outside a video of {self.video_length} frames"
            )

    @property
    def id(self) -> str:
        return item_id(self.video_id, self.start, self.end, self.video_length)

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass
class Video:
    """
    A training video as the learner sees it.

    Attributes:
        id: Video id
        features: (L, F) frame features
        mask: Per-frame annotation flags
        labels: Labels revealed so far; entries are meaningless where the mask is 0

    """

    id: str
    features: NumericArray
    mask: AnnotationMask
    labels: LabelArray

    @classmethod
    def unlabeled(cls, record: VideoRecord) -> "Video":
        return cls(
            record.id,
            record.features,
            np.zeros(record.length, dtype=np.bool_),
            np.zeros_like(record.labels),
        )

    @property
    def length(self) -> int:
        return int(self.features.shape[0])

    @property
    def annotated_frames(self) -> int:
        return int(self.mask.sum())

    @property
    def fully_annotated(self) -> bool:
        return bool(self.mask.all())

    def frame(self, index: int) -> Frame:
        return Frame(
            item_id(self.id, index, index + 1, self.length),
            self.features[index],
            self.id,
            index,
        )


def segment_video(video: Video, segment_len: int) -> List[Segment]:
    """Consecutive segments of `segment_len` frames; a shorter remainder is kept as the last segment."""
    if segment_len < 1:
        raise BALDSConfigError(f"segment length must be at least 1, got {segment_len}")
    if video.length == 0:
        raise BALDSEmptyGroupError(f"video {video.id} has no frames")
    return [
        Segment(video.id, start, min(start + segment_len, video.length), video.length)
        for start in range(0, video.length, segment_len)
    ]


def score_group(scores: npt.ArrayLike, kind: AggregationKind) -> float:
    """Aggregate per-frame scores of a video or segment."""
    values = np.asarray(scores, dtype=np.float64)
    if values.size == 0:
        raise BALDSEmptyGroupError("cannot score a group without frames")
    return aggregate(values, kind)


@dataclass(frozen=True)
class Selection:
    items: List[Segment]
    frame_count: int
    exhausted: bool

    @property
    def item_ids(self) -> List[str]:
        return [item.id for item in self.items]


@dataclass
class OccurrenceRow:
    """Per-class share of the labeled frames, and share of all the class's occurrences already labeled (percent)."""

    round: int
    share: List[float]
    coverage: List[float]


class Pool:
    """
    Labeled units, unlabeled units and the per-frame annotation masks.

    A unit moves from `unlabeled` to `labeled` exactly once; a partially
    annotated video keeps its still-unlabeled units queryable.
    """

    def __init__(
        self,
        videos: Sequence[Video],
        granularity: GranularityName,
        segment_length: int,
        task: TaskName,
        num_classes: int,
        class_totals: Optional[NumericArray] = None,
    ) -> None:
        self.granularity = granularity
        self.segment_length = segment_length
        self.task = task
        self.num_classes = num_classes
        self.videos: Dict[str, Video] = {video.id: video for video in sorted(videos, key=lambda v: v.id)}
        self.units: Dict[str, List[Segment]] = {
            video_id: self._units_of(video) for video_id, video in self.videos.items()
        }
        self.unlabeled: Dict[str, Segment] = {
            unit.id: unit for units in self.units.values() for unit in units
        }
        self.labeled: Dict[str, Segment] = {}
        self.provenance: Dict[str, int] = {}
        self.class_totals = (
            np.zeros(num_classes) if class_totals is None else np.asarray(class_totals, dtype=np.float64)
        )

    @classmethod
    def from_records(
        cls,
        records: Sequence[VideoRecord],
        granularity: GranularityName,
        segment_length: int,
        task: TaskName,
        num_classes: int,
    ) -> "Pool":
        """Build an all-unlabeled pool, keeping the per-class occurrence totals for reporting."""
        totals = np.zeros(num_classes)
        for record in records:
            totals += class_counts(task, record.labels, num_classes)
        return cls(
            [Video.unlabeled(record) for record in records],
            granularity,
            segment_length,
            task,
            num_classes,
            totals,
        )

    def _units_of(self, video: Video) -> List[Segment]:
        if self.granularity == "frame":
            return segment_video(video, 1)
        if self.granularity == "video":
            return segment_video(video, video.length)
        return segment_video(video, self.segment_length)

    @property
    def total_frames(self) -> int:
        return sum(video.length for video in self.videos.values())

    @property
    def annotated_frames(self) -> int:
        return sum(video.annotated_frames for video in self.videos.values())

    @property
    def annotated_fraction(self) -> float:
        return self.annotated_frames / self.total_frames

    def unit(self, value: str) -> Segment:
        if value in self.unlabeled:
            return self.unlabeled[value]
        if value in self.labeled:
            return self.labeled[value]
        raise BALDSUnknownItemError(value)

    def unlabeled_videos(self) -> List[Video]:
        """Videos with unlabeled units left, in id order."""
        return [video for video in self.videos.values() if not video.fully_annotated]

    def annotated_videos(self) -> List[Video]:
        return [video for video in self.videos.values() if video.annotated_frames > 0]

    def unlabeled_units(self, video_id: str) -> Iterator[Segment]:
        for unit in self.units[video_id]:
            if unit.id in self.unlabeled:
                yield unit

    def unlabeled_frames(self) -> List[Frame]:
        """Every unlabeled frame unit, in video and frame order."""
        if self.granularity != "frame":
            raise BALDSConfigError(f"a {self.granularity} pool has no frame units")
        return [
            video.frame(unit.start)
            for video in self.unlabeled_videos()
            for unit in self.unlabeled_units(video.id)
        ]

    def initial_units(self, fraction: float) -> List[Segment]:
        """All units of the first videos in id order, until `fraction` of the frames is covered."""
        target = fraction * self.total_frames
        chosen: List[Segment] = []
        covered = 0
        for video_id, units in self.units.items():
            if covered >= target:
                break
            chosen.extend(units)
            covered += self.videos[video_id].length
        return chosen

    def labeled_counts(self) -> NumericArray:
        counts = np.zeros(self.num_classes)
        for video in self.videos.values():
            counts += class_counts(self.task, video.labels[video.mask], self.num_classes)
        return counts


def class_counts(task: TaskName, labels: LabelArray, num_classes: int) -> NumericArray:
    """Frames carrying each class."""
    if task == "multilabel":
        return np.asarray(labels, dtype=np.float64).reshape(-1, num_classes).sum(axis=0)
    return np.bincount(np.asarray(labels, dtype=np.int64), minlength=num_classes).astype(np.float64)


def select_next(pool: Pool, ranked_ids: Sequence[str], budget_step: int) -> Selection:
    """
    Take units greedily in rank order until at least `budget_step` new frames are covered.

    The unit crossing the threshold is included. If the ranked units run out
    first, all of them are returned and the selection is flagged exhausted.
    """
    if budget_step < 1:
        raise BALDSConfigError(f"budget step must be at least one frame, got {budget_step}")
    chosen: List[Segment] = []
    frames = 0
    for value in ranked_ids:
        if value not in pool.unlabeled:
            raise BALDSUnknownItemError(value)
        unit = pool.unlabeled[value]
        chosen.append(unit)
        frames += unit.length
        if frames >= budget_step:
            break
    return Selection(chosen, frames, frames < budget_step)


def apply_annotations(
    pool: Pool,
    items: Sequence[Segment],
    labels: Mapping[str, LabelArray],
    round_index: int = 0,
) -> Pool:
    """
    Reveal oracle labels for the queried units and move them to the labeled set.

    Every item is checked first; on any error the pool is left unchanged.
    """
    expected = {item.id for item in items}
    if set(labels) != expected:
        raise BALDSLabelError(
            f"labels cover {sorted(set(labels) ^ expected)} differently from the queried items"
        )
    claimed: Dict[str, AnnotationMask] = {}
    for item in items:
        video = pool.videos.get(item.video_id)
        if video is None:
            raise BALDSUnknownItemError(item.id)
        revealed = np.asarray(labels[item.id])
        if revealed.shape[0] != item.length:
            raise BALDSLabelError(
                f"{revealed.shape[0]} labels for item {item.id} of {item.length} frames"
            )
        mask = claimed.setdefault(video.id, video.mask.copy())
        already = np.flatnonzero(mask[item.start : item.end])
        if already.size > 0:
            raise BALDSAnnotationError(video.id, item.start + int(already[0]))
        mask[item.start : item.end] = True

    for item in items:
        video = pool.videos[item.video_id]
        video.mask[item.start : item.end] = True
        video.labels[item.start : item.end] = labels[item.id]
        pool.unlabeled.pop(item.id, None)
        pool.labeled[item.id] = item
        pool.provenance[item.id] = round_index
    return pool


def occurrence_report(pool: Pool, round: int) -> OccurrenceRow:
    """
    Class balance of the labeled set before an annotation round.

    `share[c]` is the percentage of labeled frames carrying class c, and
    `coverage[c]` the percentage of all of class c's training occurrences that
    are already labeled.
    """
    labeled = pool.annotated_frames
    if labeled == 0:
        raise BALDSEmptyGroupError("occurrence report of an empty labeled set")
    counts = pool.labeled_counts()
    share = 100.0 * counts / labeled
    totals = pool.class_totals
    coverage = np.divide(
        100.0 * counts, totals, out=np.zeros_like(counts), where=totals > 0
    )
    return OccurrenceRow(round, share.tolist(), coverage.tolist())
