"""Exception hierarchy shared by the solver modules.

Every class derives from ValueError so callers that only know the
plain ValueError contract keep working. The CLI maps ModelParseError to
exit code 2 and everything else to exit code 1.
"""


class LobExecError(ValueError):
    """Base class for all domain failures"""


class ModelParseError(LobExecError):
    """Model description is malformed or structurally inconsistent"""


class ModelValidationError(LobExecError):
    """Model violates the structural assumption or a builder precondition"""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class ModelTooLargeError(LobExecError):
    """Tree expansion would exceed the configured node cap"""


class NumericalBreakdownError(LobExecError):
    """A recursion denominator or ratio collapsed to zero"""


class ConsistencyError(LobExecError):
    """Two independent computations of the same quantity disagree"""


class StrategyError(LobExecError):
    """Strategy input is not adapted to the tree or does not close the position"""


class OracleGuardError(LobExecError):
    """Tree is too large for the brute-force oracle"""


class ParameterError(LobExecError):
    """Scalar parameters outside the admissible range"""
