"""Exception types shared across the package."""


class TrackingError(Exception):
    """Base class for all dctrack errors."""


class Infeasible(TrackingError):
    """No perfect matching avoids the forbidden cells."""


class SizeExceeded(TrackingError):
    """Instance too large for an exhaustive oracle."""


class EmptyFrame(TrackingError):
    """Affinity requested for a frame with no tracks and no detections."""


class MissingAppearance(TrackingError):
    """Appearance distance requested but one side has no histogram."""


class FrameOrderError(TrackingError):
    """Detections fed to the tracker out of frame order."""


class LayoutError(TrackingError):
    """Internal block-layout bookkeeping violated (a bug upstream)."""


class EmptyGT(TrackingError):
    """Evaluation requested against an empty ground truth."""


class EmptyFile(TrackingError):
    """Input file contains no parseable rows."""


class ParseError(TrackingError):
    """A malformed input line; carries position information."""

    def __init__(self, path, line_no, reason):
        self.path = path
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{path}:{line_no}: {reason}")


class DimensionMismatch(TrackingError):
    """Sidecar histogram row has the wrong number of bins."""
