"""
Exceptions Module

Error hierarchy shared by every ACT component.

Each error carries an ``exit_code`` so the command-line layer can translate
failures into distinct process exit codes, the same way the API layer maps
exceptions to HTTP status codes.

Exit Codes:
    - 1: unexpected failure
    - 2: configuration error
    - 3: missing prerequisite stage checkpoint
    - 4: degenerate pseudo-anomaly selection
    - 5: data error (parse / structural / degenerate graph)
    - 6: metric error
"""

from pathlib import Path
from typing import Optional, Union


class ActError(Exception):
    """
    Base ACT Exception

    Attributes:
        exit_code: Process exit code used by the CLI
        detail: Human-readable error detail
    """

    exit_code: int = 1

    def __init__(self, detail: str):
        self.detail = detail
        super().__init__(detail)


class ConfigError(ActError):
    """Invalid or infeasible configuration."""

    exit_code = 2


class MissingStageError(ActError):
    """A later stage was requested without the checkpoint of its prerequisite."""

    exit_code = 3

    def __init__(self, stage: str, detail: Optional[str] = None):
        self.stage = stage
        super().__init__(
            detail
            or f"missing checkpoint for stage '{stage}'; run --stage {stage} first"
        )


class DegenerateSelectionError(ActError):
    """Cantelli thresholding selected no pseudo anomalies (or no pseudo normals)."""

    exit_code = 4


class DataError(ActError):
    """Base class for dataset ingestion and graph-structure failures."""

    exit_code = 5


class ParseError(DataError):
    """Malformed line in a dataset file."""

    def __init__(self, path: Union[str, Path], line: int, detail: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {detail}")


class StructuralError(DataError):
    """Shape, dimension or node-id mismatch."""


class DegenerateGraphError(StructuralError):
    """Graph cannot provide the samples a loss needs (e.g. no non-neighbours)."""


class MetricError(ActError):
    """Metric undefined for the given labels (e.g. a single class)."""

    exit_code = 6
