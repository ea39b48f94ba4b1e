"""Errors thrown by balds."""

from enum import Enum
from typing import Optional


class BALDSException(Exception):
    """
    Base class of balds exceptions.

    Attributes:
        message(str): The error message string
        balds_error_code(int): The error code, from the `BALDSErrorCode` enum

    """

    def __init__(self, message: str, balds_error_code: Optional[int] = None):
        self.message = message
        self.balds_error_code = balds_error_code
        super().__init__(self.message)

    def __str__(self) -> str:
        if self.balds_error_code:
            return f"BALDS Error {self.balds_error_code}: {self.message}"
        return f"BALDS Error: {self.message}"


class BALDSErrorCode(Enum):
    ShapeMismatch = 1
    NonFiniteValue = 2
    MissingCache = 3
    InvalidLabel = 4
    ConfigError = 5
    DataFormatError = 6
    UnknownItem = 7
    DoubleAnnotation = 8
    EmptyGroup = 9
    InvalidNetworkSpec = 10
    StatisticsError = 11


class BALDSShapeError(BALDSException):
    """Exception raised when array extents do not agree with a network or with each other."""

    def __init__(self, message: str):
        super().__init__(
            f"Shape mismatch: {message}",
            balds_error_code=BALDSErrorCode.ShapeMismatch.value,
        )


class BALDSNumericalError(BALDSException):
    """Exception raised when an activation, loss or gradient becomes NaN or infinite."""

    def __init__(self, message: str):
        super().__init__(
            f"Non-finite value: {message}",
            balds_error_code=BALDSErrorCode.NonFiniteValue.value,
        )


class BALDSMissingCacheError(BALDSException):
    """Exception raised when backward is called on a forward pass that kept no cache."""

    def __init__(self) -> None:
        super().__init__(
            "backward requires a forward pass run with keep_cache=True",
            balds_error_code=BALDSErrorCode.MissingCache.value,
        )


class BALDSLabelError(BALDSException):
    """Exception raised when a target label is outside the class range."""

    def __init__(self, message: str):
        super().__init__(
            message,
            balds_error_code=BALDSErrorCode.InvalidLabel.value,
        )


class BALDSConfigError(BALDSException):
    """Exception raised when an experiment configuration is invalid."""

    def __init__(self, message: str):
        super().__init__(
            f"Invalid experiment configuration: {message}",
            balds_error_code=BALDSErrorCode.ConfigError.value,
        )


class BALDSDataError(BALDSException):
    """Exception raised when a dataset file is malformed."""

    def __init__(
        self,
        message: str,
        line: Optional[int] = None,
        offset: Optional[int] = None,
    ):
        self.line = line
        self.offset = offset
        location = ""
        if line is not None:
            location = f" (line {line}"
            location += f", byte offset {offset})" if offset is not None else ")"
        super().__init__(
            f"Malformed dataset{location}: {message}",
            balds_error_code=BALDSErrorCode.DataFormatError.value,
        )


class BALDSUnknownItemError(BALDSException):
    """Exception raised when the oracle or the pool is asked about an item it does not hold."""

    def __init__(self, item_id: str):
        self.item_id = item_id
        super().__init__(
            f"Unknown item ID {item_id}",
            balds_error_code=BALDSErrorCode.UnknownItem.value,
        )


class BALDSAnnotationError(BALDSException):
    """Exception raised when a frame would be annotated twice."""

    def __init__(self, video_id: str, index: int):
        super().__init__(
            f"Frame {index} of video {video_id} is already annotated",
            balds_error_code=BALDSErrorCode.DoubleAnnotation.value,
        )


class BALDSEmptyGroupError(BALDSException):
    """Exception raised when a reduction is asked to summarize nothing."""

    def __init__(self, message: str):
        super().__init__(
            message,
            balds_error_code=BALDSErrorCode.EmptyGroup.value,
        )


class BALDSNetworkSpecError(BALDSException):
    """Exception raised when a network specification is inconsistent."""

    def __init__(self, message: str):
        super().__init__(
            f"Invalid network specification: {message}",
            balds_error_code=BALDSErrorCode.InvalidNetworkSpec.value,
        )


class BALDSStatisticsError(BALDSException):
    """Exception raised when a significance test cannot be computed from its inputs."""

    def __init__(self, message: str):
        super().__init__(
            message,
            balds_error_code=BALDSErrorCode.StatisticsError.value,
        )
