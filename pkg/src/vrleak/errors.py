"""Exception hierarchy shared by every module."""


class VRLeakError(Exception):
    """Base class for all package errors."""


# parsing / formats
class FormatError(VRLeakError):
    pass


class MalformedRow(FormatError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonMonotonicTime(FormatError):
    pass


class UnnormalizedQuaternion(FormatError):
    pass


class MalformedLine(FormatError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownKind(FormatError):
    pass


class PuzzleIdOutOfRange(FormatError):
    pass


class InvalidValue(VRLeakError, ValueError):
    """A value violates a domain-type invariant."""


class CapabilityDenied(VRLeakError):
    """The attacker tier cannot read the input an attack needs."""


class CapabilityLeak(VRLeakError):
    """An attribute was about to be reported for a tier that cannot observe it."""


# simulation
class EmptyScript(VRLeakError):
    pass


# anthropometry
class EmptyWindow(VRLeakError):
    pass


class NoTposeDetected(VRLeakError):
    pass


class NoButtonEvents(VRLeakError):
    pass


class NoSquatSegment(VRLeakError):
    pass


class NoStimulusPairs(VRLeakError):
    pass


class NegativeLatency(VRLeakError):
    pass


# environment
class InsufficientServers(VRLeakError):
    pass


class NoConvergence(VRLeakError):
    pass


# device fingerprinting
class TooFewFrames(VRLeakError):
    pass


class MissingUfoAnswer(VRLeakError):
    pass


class EmptyTable(VRLeakError):
    pass


# behavior
class MissingPuzzleEvents(VRLeakError):
    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__(f"missing events for puzzles {self.missing}")


class UnrecognizedPassword(VRLeakError):
    pass


class NoGazeHit(VRLeakError):
    pass


class MissingReadAttempt(VRLeakError):
    pass


# inference
class DegenerateLabels(VRLeakError):
    pass


class TooFewExamples(VRLeakError):
    pass


class FeatureVersionMismatch(VRLeakError):
    pass


class MissingFeatures(VRLeakError):
    pass


class EmptyIndex(VRLeakError):
    pass


class IncompleteProbe(VRLeakError):
    pass


# defense
class InvalidEpsilon(VRLeakError, ValueError):
    pass


class InvalidBounds(VRLeakError, ValueError):
    pass
