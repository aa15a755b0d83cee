"""Parsing sidecar: turns English questions into dependency (CoNLL-U) and
constituency (bracketed) parses, over HTTP or as a batch CLI."""

from sidecar.backend import (
    HeuristicBackend,
    ModelUnavailable,
    ParseFailure,
    get_backend,
)
from sidecar.convert import batch_convert

__all__ = [
    "HeuristicBackend",
    "ModelUnavailable",
    "ParseFailure",
    "get_backend",
    "batch_convert",
]
