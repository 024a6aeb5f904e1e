"""Confidence-routed ECG beat classification on MIT-BIH style records."""

from .errors import ChecksumMismatch, DataError, EcgRouteError, NetworkError, ParseError, ValidationError
from .ingest import CLASSES, Record, Segment

__version__ = "0.1.0"

__all__ = [
    "CLASSES",
    "ChecksumMismatch",
    "DataError",
    "EcgRouteError",
    "NetworkError",
    "ParseError",
    "Record",
    "Segment",
    "ValidationError",
]
