"""Exception hierarchy shared by every chanlingo module."""


class ChanlingoError(Exception):
    """Base class; ``kind`` is the stable machine-readable error name."""

    kind = "error"

    def __str__(self) -> str:
        return f"{self.kind}: {super().__str__()}"


class InvalidArgumentError(ChanlingoError, ValueError):
    kind = "invalid-argument"


class InvalidStateError(ChanlingoError, RuntimeError):
    kind = "invalid-state"


class VocabularyMismatchError(ChanlingoError, ValueError):
    kind = "vocabulary-mismatch"


class CorruptTokenError(ChanlingoError, ValueError):
    kind = "corrupt-token"


class UndefinedNMSEError(ChanlingoError, ZeroDivisionError):
    kind = "undefined-nmse"


class TrainingDivergedError(ChanlingoError, FloatingPointError):
    kind = "training-diverged"


class ParseError(ChanlingoError, ValueError):
    """Malformed file content. ``line`` is 1-based, or None for binary files."""

    kind = "parse-error"

    def __init__(self, message: str, line: int | None = None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}"
        if line is not None:
            where = f"{where}:{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class CheckpointMismatchError(ChanlingoError, ValueError):
    """A checkpoint field (format version, hyperparameter) disagrees with what was expected."""

    kind = "checkpoint-mismatch"

    def __init__(self, field: str, expected, found):
        self.field = field
        super().__init__(f"field {field!r}: expected {expected!r}, found {found!r}")
