"""Exception hierarchy shared by every pipeline stage."""


class SkeletreeError(Exception):
    """Base class for all data errors raised by the package."""


class ParseError(SkeletreeError):
    def __init__(self, message: str, line: int | None = None, offset: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.offset = offset


class EmptyCloud(SkeletreeError):
    pass


class FilterRemovedEverything(EmptyCloud):
    pass


class MissingIntensity(SkeletreeError):
    pass


class LengthMismatch(SkeletreeError):
    pass


class DegenerateInput(SkeletreeError):
    pass


class DegenerateExtent(SkeletreeError):
    pass


class InvalidN(SkeletreeError):
    pass


class OutOfExtent(SkeletreeError):
    pass


class NotForeground(SkeletreeError):
    pass


class EmptyInput(SkeletreeError):
    pass


class EmptyGrid(SkeletreeError):
    pass


class DegenerateFit(SkeletreeError):
    pass


class NotAnEllipse(DegenerateFit):
    pass


class EmptySlice(SkeletreeError):
    pass


class InvalidSpec(SkeletreeError):
    pass


class NoRoot(SkeletreeError):
    pass


class InvalidCount(SkeletreeError):
    pass


class StageError(SkeletreeError):
    """A stage failure re-raised with the name of the stage that produced it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
