"""Exception types shared across the simulator."""


class MmsimError(Exception):
    """Base class for all simulator errors."""


class EmptySide(MmsimError):
    """Operation needs liquidity on a side of the book that is empty."""


class UnknownOrder(MmsimError):
    """Cancel referenced an order id that is not resting in the book."""


class Overconsume(MmsimError):
    """Trade volume exceeds the available opposing liquidity."""


class ParseError(MmsimError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SchemaError(MmsimError):
    """Row or file violates the dataset schema."""


class NonMonotoneTimestamps(MmsimError):
    """Dataset timestamps are not strictly increasing."""


class DatasetTooShort(MmsimError):
    """Dataset cannot cover the episode length plus signal horizon."""


class SteppedAfterDone(MmsimError):
    """step() called on a finished episode."""


class HorizonOutOfRange(MmsimError):
    """Signal horizon reaches past the end of the dataset."""


class WindowOutOfRange(MmsimError):
    """Momentum window reaches before the start of the dataset."""


class EmptyTrace(MmsimError):
    """Metric requested on a trace with no steps."""


class NoFillsOnSide(MmsimError):
    """Return-per-trade is undefined without fills on both sides."""


class ClosedHandle(MmsimError):
    """Binding handle used after close."""


class ShapeError(MmsimError):
    """Action array has wrong shape or non-finite entries."""


class VersionMismatch(MmsimError):
    """Expert dataset manifest schema version is unsupported."""
