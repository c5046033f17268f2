"""Exception hierarchy shared by every ncnum module."""

from __future__ import annotations


class NCNumError(Exception):
    """Base class for all errors raised by ncnum."""


# -- network model -----------------------------------------------------------

class NetworkError(NCNumError, ValueError):
    """The network description is inconsistent."""


class DanglingNextHop(NetworkError):
    """A routing entry names a next hop that is not reachable over a link."""


class NonPositiveCapacity(NetworkError):
    """A link was declared with capacity <= 0."""


class FlowBijectionViolation(NetworkError):
    """Flows do not pair sources and destinations one to one."""


class RoutingError(NetworkError):
    """Routing tables disagree with the set of flows visiting a node."""


class UnknownLink(NetworkError, KeyError):
    """A link id is unknown, or not incident to the queried node."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return Exception.__str__(self)


# -- moments -----------------------------------------------------------------

class NegativeRate(NCNumError, ValueError):
    pass


class IndexOverflow(NCNumError, IndexError):
    pass


class OddOrder(NCNumError, ValueError):
    pass


# -- geometry ----------------------------------------------------------------

class NotSymmetric(NCNumError, ValueError):
    pass


class NoConvergence(NCNumError, RuntimeError):
    pass


class NoRoot(NCNumError, RuntimeError):
    pass


class MaxIterationsExceeded(NCNumError, RuntimeError):
    """A projection hit its iteration cap.

    The best iterate found so far is attached as ``report``.
    """

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


# -- dpda --------------------------------------------------------------------

class StepSizeInvalid(NCNumError, ValueError):
    def __init__(self, message: str, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class MissingNeighborData(NCNumError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class DimensionMismatch(NCNumError, ValueError):
    pass


class TooLarge(NCNumError, ValueError):
    pass


# -- baselines ---------------------------------------------------------------

class NotConverged(NCNumError, RuntimeError):
    def __init__(self, message: str, solution=None):
        super().__init__(message)
        self.solution = solution


# -- harness -----------------------------------------------------------------

class ParseError(NCNumError, ValueError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.field = field


class ValidationError(NCNumError, ValueError):
    def __init__(self, failures):
        self.failures = list(failures)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.failures))


class InsufficientData(NCNumError, ValueError):
    pass


class NonPositiveResiduals(NCNumError, ValueError):
    pass
