"""Exception taxonomy.

Two families matter to callers: ``ValidationError`` for inputs that violate a
precondition (bad configuration, wrong equilibrium type, ...), and
``NumericalError`` for computations that were attempted and aborted.  The CLI
maps them to exit codes 2 and 3.
"""


class WeakNoiseError(Exception):
    pass


class ValidationError(WeakNoiseError, ValueError):
    pass


class NumericalError(WeakNoiseError, ArithmeticError):
    pass


class ModelError(ValidationError):
    """Malformed model document, PSD violation or inconsistent rank hint."""


class DomainError(ValidationError):
    """Point outside the model's domain box."""


class NotSaddleError(ValidationError):
    pass


class NotAttractedError(ValidationError):
    """Boundary point where the drift does not point into the domain."""


class TangencyError(ValidationError):
    """Separatrix tangent to the diffusion axis (a_y = 0 at a singular saddle)."""


class MaskError(ValidationError):
    """A path or boundary leaves the reached part of a quasipotential grid."""


class ChiUndeterminedError(NumericalError):
    """The generating function cannot be fixed at an equilibrium (rho = 0)."""


class ConvergenceError(NumericalError):
    pass


class StiffnessAbort(NumericalError):
    pass
