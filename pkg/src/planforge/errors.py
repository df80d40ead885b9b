"""Exception hierarchy shared by all planforge modules."""


class PlanforgeError(Exception):
    """Base class for every error raised by planforge."""


# geometry
class UnsupportedPair(PlanforgeError):
    pass


# scene model
class UnknownObject(PlanforgeError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ParseError(PlanforgeError):
    def __init__(self, line, reason, path=None):
        self.line = line
        self.reason = reason
        self.path = path
        where = f"{path}:" if path else "line "
        super().__init__(f"{where}{line}: {reason}")


class SchemaError(PlanforgeError):
    def __init__(self, field, reason="", path=None):
        self.field = field
        self.reason = reason
        self.path = path
        msg = f"invalid field '{field}'"
        if reason:
            msg += f": {reason}"
        if path:
            msg += f" ({path})"
        super().__init__(msg)


class CycleError(PlanforgeError):
    pass


class ReferentialIntegrityError(PlanforgeError):
    pass


# scene sampler
class SpecMismatch(PlanforgeError):
    pass


class RejectionExhausted(PlanforgeError):
    pass


# kinematics
class XmlError(PlanforgeError):
    pass


class UnsupportedElement(PlanforgeError):
    pass


class KinematicLoop(PlanforgeError):
    pass


class MissingLimit(PlanforgeError):
    pass


class DimensionMismatch(PlanforgeError, ValueError):
    pass


class UnknownLink(PlanforgeError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


# sensing
class PointOutOfRootRegion(PlanforgeError):
    pass


# problem generation
class UnknownTip(PlanforgeError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class IkNoSolution(PlanforgeError):
    def __init__(self, message, endpoint=None):
        self.endpoint = endpoint
        if endpoint:
            message = f"{endpoint}: {message}"
        super().__init__(message)


# planners
class PlannerTimeout(PlanforgeError):
    pass


class InvalidRequest(PlanforgeError):
    pass


# benchmark
class EmptyGroup(PlanforgeError):
    pass


class MissingCoverage(PlanforgeError):
    pass


class PrefixTooLarge(PlanforgeError):
    pass


class NoTraces(PlanforgeError):
    pass


# dataset
class DatasetError(PlanforgeError):
    pass


class BudgetExhausted(PlanforgeError):
    def __init__(self, message, counts=None):
        self.counts = dict(counts or {})
        super().__init__(message)


class IndexOutOfRange(PlanforgeError, IndexError):
    pass


class RepresentationMissing(PlanforgeError):
    pass
