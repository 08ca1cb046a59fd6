"""Exception hierarchy shared by the pipeline stages."""


class QtdmaError(Exception):
    """Base class for all errors raised by this package."""


class FidelityDomainError(QtdmaError, ValueError):
    """A fidelity argument lies outside the domain of a Werner-state map."""


class NoRouteError(QtdmaError):
    pass


class InfeasibleLinkError(QtdmaError):
    """No capability (or distillation plan) of a link meets a fidelity target."""


class ProtocolSelectionError(QtdmaError):
    """A repeater protocol could not be built for a demand."""


class QubitExhaustionError(ProtocolSelectionError):
    pass


class RateUnsupportableError(QtdmaError):
    """t_slot * R_min >= 1: no periodic schedule can deliver the rate."""


class LatencyExceedsPeriodError(QtdmaError):
    pass


class ScheduleTooLongError(QtdmaError):
    pass


class OracleSizeError(QtdmaError, ValueError):
    """Instance too large for the brute-force oracle."""
