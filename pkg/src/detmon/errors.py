"""Exception hierarchy shared by all detmon modules.

Two branches matter for the CLI exit codes: ``InputError`` (exit 2) covers
anything wrong with files, flags, or references the user handed us, while
``InvariantViolation`` (exit 3) covers data that parsed fine but breaks a
domain invariant (degenerate boxes, single-class datasets, dimension
mismatches, ...).
"""


class DetmonError(Exception):
    """Base class for all detmon errors."""


class InputError(DetmonError):
    """Bad user input: unreadable files, malformed lines, conflicting flags."""


class InvariantViolation(DetmonError):
    """Well-formed input that violates a domain invariant."""


# --- input errors -----------------------------------------------------------

class ParseError(InputError):
    """A line of an input file could not be parsed; carries the line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class MissingFrame(InputError):
    """A record references a frame_id that is not present where required."""


class ConflictingFlags(InputError):
    """Mutually exclusive CLI flags were given together (or neither)."""


class MissingActivation(InputError):
    """The manifest lacks an activation tensor needed for the requested feature."""


class CorruptTensor(InputError):
    """An activation tensor file has a bad magic, header, or truncated payload."""


class EmptyInput(InputError):
    """An operation that needs at least one element received none."""


class WindowTooLarge(InputError):
    """Sliding window length exceeds the number of frames."""


# --- invariant violations ---------------------------------------------------

class InvalidBox(InvariantViolation):
    """Degenerate or non-finite bounding box coordinates."""


class InvalidScore(InvariantViolation):
    """Detection confidence outside [0, 1]."""


class FrameIdMismatch(InvariantViolation):
    """Parts that must describe the same frame carry different frame_ids."""


class DimensionMismatch(InvariantViolation):
    """Feature vector length does not match the model input dimension."""


class SingleClassDataset(InvariantViolation):
    """Training labels contain only one of the two classes."""


class SingleClassInput(InvariantViolation):
    """A ranking metric needs both classes present."""


class NoPositives(InvariantViolation):
    """Precision-recall area is undefined without positive frames."""


class NoFailureFrames(InvariantViolation):
    """True warning rate is undefined without failure frames."""


class NoEvaluableFrames(InvariantViolation):
    """Every frame in the subset has undefined per-frame mAP."""
