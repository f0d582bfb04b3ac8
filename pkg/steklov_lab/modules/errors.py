"""Exceptions raised by the lab."""


class LabError(Exception):
    """Base class for every error raised by steklov_lab."""


class ArgumentError(LabError, ValueError):
    """A parameter or precondition was violated."""


class PartitionError(ArgumentError):
    """The boundary partition leaves S or W empty or uses unknown tags."""


class ConfigError(LabError):
    """A run configuration could not be used."""


class DeformationError(LabError):
    """A deformation inverted an element or collapsed an edge."""

    def __init__(self, message, element=None, value=None):
        super().__init__(message)
        self.element = element
        self.value = value


class CoercivityError(LabError):
    """A coefficient or an assembled left matrix lost positivity."""

    def __init__(self, message, point=None, value=None, step=None):
        super().__init__(message)
        self.point = point
        self.value = value
        self.step = step


class RankError(LabError):
    """More eigenpairs were requested than the right matrix supports."""

    def __init__(self, message, rank=None, retained=None):
        super().__init__(message)
        self.rank = rank
        self.retained = retained


class OracleError(LabError):
    """The analytic reference could not reach its tolerance."""


class NotApplicableError(LabError):
    """The operation is not defined for this variant or mode."""
