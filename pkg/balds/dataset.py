"""
Datasets of labeled videos, their text file format and the replay oracle.

File layout (UTF-8, one record per line):

    BALDS v1 task=<multilabel|phase> F=<int> C=<int>
    video <id> <length>                      (one per video, before any frame)
    frame <video-id> <index> <F floats> | <labels>
    end <frame-count> <sha256 of every preceding byte>

Floats carry 9 significant digits. Multi-label frames list C values in {0, 1};
phase frames list a single phase index.
"""

import hashlib
import math
import re
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from balds.balds_config import TaskName
from balds.error import BALDSDataError, BALDSUnknownItemError
from balds.logger import balds_logger
from balds.network import NumericArray

FORMAT_VERSION = "v1"
TEST_FRACTION = 0.25

LabelArray = npt.NDArray[np.int64]

_header_re = re.compile(r"^BALDS (\S+) task=(\S+) F=(\d+) C=(\d+)$")
_item_re = re.compile(r"^([^/\s]+)(?:/(\d+)(?:-(\d+))?)?$")


@dataclass
class VideoRecord:
    """
    One video with its ground truth.

    Attributes:
        id: Video id; must not contain '/' or whitespace
        features: (L, F) frame features
        labels: (L, C) binary labels (multilabel) or (L,) phase indices (phase)

    """

    id: str
    features: NumericArray
    labels: LabelArray

    @property
    def length(self) -> int:
        return int(self.features.shape[0])


@dataclass
class Dataset:
    task: TaskName
    feature_dim: int
    num_classes: int
    videos: List[VideoRecord]

    @property
    def total_frames(self) -> int:
        return sum(video.length for video in self.videos)

    def video(self, video_id: str) -> VideoRecord:
        for video in self.videos:
            if video.id == video_id:
                return video
        raise BALDSUnknownItemError(video_id)

    def split(self) -> Tuple[List[VideoRecord], List[VideoRecord]]:
        """Train/test split: the last quarter of the videos in id order is the test set."""
        ordered = sorted(self.videos, key=lambda v: v.id)
        if len(ordered) < 2:
            raise BALDSDataError("a dataset needs at least two videos to split")
        num_train = min(len(ordered) - 1, math.ceil(len(ordered) * (1.0 - TEST_FRACTION)))
        return ordered[:num_train], ordered[num_train:]


def video_id_for(index: int) -> str:
    return f"v{index:03d}"


def item_id(video_id: str, start: int, end: int, video_length: int) -> str:
    """
    Id of the frames [start, end) of a video.

    The whole video is its bare id, a single frame is `<video>/<index>` and any
    other range is `<video>/<start>-<end>`.
    """
    if start == 0 and end == video_length:
        return video_id
    if end - start == 1:
        return f"{video_id}/{start:05d}"
    return f"{video_id}/{start:05d}-{end:05d}"


def parse_item_id(value: str) -> Tuple[str, Optional[int], Optional[int]]:
    """Split an item id into (video id, start, end); start and end are None for whole videos."""
    match = _item_re.match(value)
    if match is None:
        raise BALDSUnknownItemError(value)
    video, start, end = match.groups()
    if start is None:
        return video, None, None
    begin = int(start)
    return video, begin, int(end) if end is not None else begin + 1


def _format_float(value: float) -> str:
    return f"{value:.9g}"


def _format_labels(task: TaskName, labels: LabelArray, index: int) -> str:
    if task == "multilabel":
        return " ".join(str(int(v)) for v in labels[index])
    return str(int(labels[index]))


def dataset_lines(dataset: Dataset) -> Iterable[str]:
    yield f"BALDS {FORMAT_VERSION} task={dataset.task} F={dataset.feature_dim} C={dataset.num_classes}\n"
    for video in dataset.videos:
        yield f"video {video.id} {video.length}\n"
    for video in dataset.videos:
        for index in range(video.length):
            features = " ".join(_format_float(v) for v in video.features[index])
            labels = _format_labels(dataset.task, video.labels, index)
            yield f"frame {video.id} {index} {features} | {labels}\n"


def save_dataset(dataset: Dataset, path: str) -> None:
    body = "".join(dataset_lines(dataset)).encode("utf-8")
    digest = hashlib.sha256(body).hexdigest()
    with open(path, "wb") as f:
        f.write(body)
        f.write(f"end {dataset.total_frames} {digest}\n".encode("utf-8"))
    balds_logger.info(
        f"Wrote {len(dataset.videos)} videos ({dataset.total_frames} frames) to {path}"
    )


class _Parser:
    """Line-by-line reader that remembers where each line starts for diagnostics."""

    def __init__(self, content: bytes) -> None:
        self.content = content
        self.line = 0
        self.offset = 0

    def lines(self) -> Iterable[Tuple[int, int, str]]:
        position = 0
        number = 0
        while position < len(self.content):
            newline = self.content.find(b"\n", position)
            number += 1
            if newline < 0:
                raise BALDSDataError(
                    "file is truncated (last line has no terminator)",
                    line=number,
                    offset=position,
                )
            raw = self.content[position:newline]
            try:
                text = raw.decode("utf-8")
            except UnicodeDecodeError:
                raise BALDSDataError("line is not valid UTF-8", line=number, offset=position)
            self.line, self.offset = number, position
            yield number, position, text
            position = newline + 1

    def error(self, message: str) -> BALDSDataError:
        return BALDSDataError(message, line=self.line, offset=self.offset)


def load_dataset(path: str) -> Dataset:
    try:
        with open(path, "rb") as f:
            content = f.read()
    except OSError as e:
        raise BALDSDataError(f"cannot read dataset {path}: {e.strerror}")
    return parse_dataset(content)


def parse_dataset(content: bytes) -> Dataset:
    parser = _Parser(content)
    task: Optional[TaskName] = None
    feature_dim = num_classes = 0
    lengths: Dict[str, int] = {}
    order: List[str] = []
    features: Dict[str, List[List[float]]] = {}
    labels: Dict[str, List[object]] = {}
    trailer: Optional[Tuple[int, str, int]] = None

    for number, offset, text in parser.lines():
        if trailer is not None:
            raise parser.error("content after the end trailer")
        if number == 1:
            match = _header_re.match(text)
            if match is None:
                raise parser.error(f"malformed header {text!r}")
            version, task_name, f_text, c_text = match.groups()
            if version != FORMAT_VERSION:
                raise parser.error(f"unsupported format version {version}")
            if task_name not in ("multilabel", "phase"):
                raise parser.error(f"unknown task {task_name}")
            task = "multilabel" if task_name == "multilabel" else "phase"
            feature_dim, num_classes = int(f_text), int(c_text)
            if feature_dim < 1 or num_classes < 1:
                raise parser.error("feature and class counts must be positive")
            continue

        fields = text.split(" ")
        kind = fields[0]
        if kind == "video":
            if features and any(features.values()):
                raise parser.error("video declaration after frame records")
            if len(fields) != 3 or not fields[2].isdigit():
                raise parser.error(f"malformed video line {text!r}")
            if fields[1] in lengths or "/" in fields[1]:
                raise parser.error(f"invalid or duplicate video id {fields[1]}")
            if int(fields[2]) == 0:
                raise parser.error(f"video {fields[1]} has no frames")
            lengths[fields[1]] = int(fields[2])
            order.append(fields[1])
            features[fields[1]] = []
            labels[fields[1]] = []
        elif kind == "frame":
            _parse_frame(parser, fields, task, feature_dim, num_classes, lengths, features, labels)
        elif kind == "end":
            if len(fields) != 3 or not fields[1].isdigit():
                raise parser.error(f"malformed end trailer {text!r}")
            trailer = (int(fields[1]), fields[2], offset)
        else:
            raise parser.error(f"unknown record type {kind!r}")

    if task is None:
        raise BALDSDataError("empty dataset file", line=0, offset=0)
    if trailer is None:
        raise BALDSDataError(
            "file is truncated (missing end trailer)", line=parser.line + 1, offset=len(content)
        )
    count, digest, trailer_offset = trailer
    total = sum(len(rows) for rows in features.values())
    if count != total:
        raise BALDSDataError(
            f"trailer announces {count} frames, file holds {total}",
            line=parser.line,
            offset=trailer_offset,
        )
    if hashlib.sha256(content[:trailer_offset]).hexdigest() != digest:
        raise BALDSDataError("checksum mismatch", line=parser.line, offset=trailer_offset)

    videos: List[VideoRecord] = []
    for video_id in order:
        if len(features[video_id]) != lengths[video_id]:
            raise BALDSDataError(
                f"video {video_id} declares {lengths[video_id]} frames, file holds {len(features[video_id])}",
                line=parser.line,
                offset=trailer_offset,
            )
        videos.append(
            VideoRecord(
                video_id,
                np.asarray(features[video_id], dtype=np.float64).reshape(-1, feature_dim),
                _label_array(task, labels[video_id], num_classes),
            )
        )
    return Dataset(task, feature_dim, num_classes, videos)


def _label_array(task: TaskName, rows: List[object], num_classes: int) -> LabelArray:
    values = np.asarray(rows, dtype=np.int64)
    if task == "multilabel":
        return values.reshape(-1, num_classes)
    return values.reshape(-1)


def _parse_frame(
    parser: _Parser,
    fields: List[str],
    task: Optional[TaskName],
    feature_dim: int,
    num_classes: int,
    lengths: Dict[str, int],
    features: Dict[str, List[List[float]]],
    labels: Dict[str, List[object]],
) -> None:
    if task is None:
        raise parser.error("frame record before the header")
    if "|" not in fields or len(fields) < 4:
        raise parser.error("malformed frame line")
    video_id, index_text = fields[1], fields[2]
    if video_id not in lengths:
        raise parser.error(f"frame of undeclared video {video_id}")
    if not index_text.isdigit() or int(index_text) != len(features[video_id]):
        raise parser.error(
            f"frame index {index_text} of video {video_id}, expected {len(features[video_id])}"
        )
    if int(index_text) >= lengths[video_id]:
        raise parser.error(f"video {video_id} has only {lengths[video_id]} frames")
    bar = fields.index("|")
    values, label_fields = fields[3:bar], fields[bar + 1 :]
    if len(values) != feature_dim:
        raise parser.error(
            f"dimension mismatch: {len(values)} features, header declares F={feature_dim}"
        )
    try:
        row = [float(v) for v in values]
        label_values = [int(v) for v in label_fields]
    except ValueError:
        raise parser.error("non-numeric feature or label")
    if not all(math.isfinite(v) for v in row):
        raise parser.error("non-finite feature value")
    if task == "multilabel":
        if len(label_values) != num_classes or any(v not in (0, 1) for v in label_values):
            raise parser.error(f"expected {num_classes} binary labels")
        labels[video_id].append(label_values)
    else:
        if len(label_values) != 1 or not 0 <= label_values[0] < num_classes:
            raise parser.error(f"expected one phase index in [0, {num_classes})")
        labels[video_id].append(label_values[0])
    features[video_id].append(row)


class OracleReplay:
    """Simulated annotator: reveals the stored ground truth of any frame range."""

    def __init__(self, videos: Sequence[VideoRecord]) -> None:
        self._labels: Dict[str, LabelArray] = {}
        for video in videos:
            frozen = video.labels.copy()
            frozen.setflags(write=False)
            self._labels[video.id] = frozen

    def labels(self, value: str) -> LabelArray:
        video_id, start, end = parse_item_id(value)
        if video_id not in self._labels:
            raise BALDSUnknownItemError(value)
        truth = self._labels[video_id]
        if start is None or end is None:
            return truth
        if not 0 <= start < end <= truth.shape[0]:
            raise BALDSUnknownItemError(value)
        return truth[start:end]


def oracle_label(oracle: OracleReplay, item_ids: Iterable[str]) -> Dict[str, LabelArray]:
    return {value: oracle.labels(value) for value in item_ids}
