"""Exception hierarchy for gazeqc."""


class GazeQCError(Exception):
    """Base class for all toolkit errors."""


class DegenerateVector(GazeQCError, ValueError):
    pass


class ParseError(GazeQCError, ValueError):
    def __init__(self, line, column, reason):
        self.line = line
        self.column = column
        self.reason = reason
        super().__init__(f"line {line}, column {column!r}: {reason}")


class NonMonotonicTimestamps(GazeQCError, ValueError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"timestamps not strictly increasing at sample {index}")


class ChannelLengthMismatch(GazeQCError, ValueError):
    pass


class InsufficientData(GazeQCError, ValueError):
    pass


class NoValidSamples(InsufficientData):
    pass


class DegenerateDesign(GazeQCError, ValueError):
    pass


class RankDeficient(DegenerateDesign):
    pass


class NoUsableBins(GazeQCError, ValueError):
    def __init__(self, fixation):
        self.fixation = fixation
        super().__init__(f"fixation {fixation} has no usable calibration bins")


class WrongLength(GazeQCError, ValueError):
    pass


class InvalidSamples(GazeQCError, ValueError):
    pass


class NotPowerOfTwo(GazeQCError, ValueError):
    pass


class TimestampMismatch(GazeQCError, ValueError):
    pass


class SpectralDivideByZero(GazeQCError, ZeroDivisionError):
    pass


class ConfigInvalid(GazeQCError, ValueError):
    pass
