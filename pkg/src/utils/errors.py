"""
Exception hierarchy for refinet.

Every error derives from ValueError, so callers catching ValueError keep working.
"""


class RefinetError(ValueError):
    """Base class for all refinet errors."""


class InstanceError(RefinetError):
    """Invalid atom space, measure, instance or plan."""


class SpaceMismatchError(RefinetError):
    """Two measures that must share an atom space do not."""


class NotARefinementError(RefinetError):
    """A refinement-only operation received a plan that is not a refinement."""


class IntegrandError(RefinetError):
    """An integrand or kernel does not meet an operation's requirements."""


class PreconditionError(RefinetError):
    """An operation's documented precondition does not hold."""


class SolverError(RefinetError):
    """A solver could not produce a verified result."""


class ConstructionError(RefinetError):
    """The allocation-price construction hit a case its invariants exclude."""


class InputFormatError(RefinetError):
    """Malformed input file, located by path and line."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        super().__init__(message)

    def located(self):
        """Return the diagnostic in `path:line: message` form."""
        where = self.path or '<input>'
        if self.line is not None:
            where = f"{where}:{self.line}"
        return f"{where}: {self.args[0]}"
