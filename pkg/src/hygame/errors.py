"""Exception hierarchy.

Checks that find violations return reports; exceptions are reserved for
inputs that cannot be processed and for numerical failures.
"""


class HygameError(Exception):
    """Base class for all package errors."""


class OutOfDomain(HygameError):
    pass


class EmptyDomain(HygameError):
    pass


class DimensionMismatch(HygameError):
    pass


class MissingTimer(HygameError):
    pass


class UnknownScenario(HygameError):
    pass


class ScenarioFormatError(HygameError):
    pass


class InvalidInitialState(HygameError):
    pass


class InfeasibleInput(HygameError):
    pass


class BranchLimitExceeded(HygameError):
    pass


class CertificateViolated(HygameError):
    pass


class CertificateMissing(HygameError):
    pass


class NoInputBox(HygameError):
    pass


class ResidualTooLarge(HygameError):
    pass


class NumericalError(HygameError):
    """Base class for solver failures (CLI exit code 3)."""


class BlowUp(NumericalError):
    pass


class SingularRv(NumericalError):
    pass


class DefinitenessViolated(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class InconsistentEquations(NumericalError):
    pass


class FlowConditionViolated(NumericalError):
    pass
