"""Exception hierarchy shared across the package."""

from __future__ import annotations


class NewscastError(Exception):
    """Base class for all package errors."""


class ParseFailure(NewscastError):
    """No numeric values could be recovered from a digit string."""


class HorizonMismatch(NewscastError):
    """Parsed value count differs from the required horizon."""

    def __init__(self, message: str, parsed: int, expected: int):
        super().__init__(message)
        self.parsed = parsed
        self.expected = expected


class WindowError(NewscastError):
    """Series too short (or stride invalid) for the requested windows."""


class SplitError(NewscastError):
    """Task list cannot be split as requested."""


class MetricError(NewscastError):
    """Metric inputs are malformed (length mismatch, empty)."""


class IngestError(NewscastError):
    """A source record is unreadable or violates the schema.

    ``line`` is 1-based within the source file when known.
    """

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        loc = f"{path or '<input>'}:{line}" if line is not None else (path or "<input>")
        super().__init__(f"{loc}: {message}")
        self.line = line
        self.path = path


class ModeError(NewscastError):
    """Prompt inputs are inconsistent with the requested prompt mode."""


class PromptError(NewscastError):
    """Prompt construction preconditions violated."""


class TransportError(NewscastError):
    """Remote model call failed after exhausting retries."""


class ReplayMiss(NewscastError):
    """Replay transcript holds no reply for the requested bundle."""


class AgentParseError(NewscastError):
    """Agent reply stayed malformed through all repair retries."""

    def __init__(self, message: str, raw_reply: str):
        super().__init__(message)
        self.raw_reply = raw_reply


class EmitError(NewscastError):
    """A training example cannot be written to the dataset file."""


class ScenarioError(NewscastError):
    """Synthetic scenario parameters are impossible."""


class ReportError(NewscastError):
    """Report inputs are inconsistent (e.g. results from different splits)."""


class StageError(NewscastError):
    """A pipeline stage failed; carries the stage tag for diagnostics."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
