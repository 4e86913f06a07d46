"""Exception hierarchy shared by all acta modules."""


class ActaError(Exception):
    """Base class for all errors raised by this package."""


# geo
class EmptyTrajectory(ActaError):
    pass


class InsufficientSamples(ActaError):
    pass


class StimulusOutOfRange(ActaError):
    pass


# protocol
class TooFewSessions(ActaError):
    pass


class PlanAlreadyActive(ActaError):
    pass


class UnknownPlace(ActaError):
    pass


class SessionNotActive(ActaError):
    pass


# eeg
class StreamTooShort(ActaError):
    pass


class BandOutOfRange(ActaError):
    pass


class TimestampOutOfRange(ActaError):
    pass


# network metrics
class EmptyGraph(ActaError):
    pass


# learner
class ClassImbalanceFatal(ActaError):
    pass


class DimensionMismatch(ActaError):
    pass


class EmptyDataset(ActaError):
    pass


# pipeline
class NegativeRoundTrip(ActaError):
    pass


class UnknownSession(ActaError):
    pass


# harness
class ScenarioInvalid(ActaError):
    pass


class ModelMissing(ActaError):
    pass


class CorruptLog(ActaError):
    pass


class CommandRejected(ActaError):
    pass
