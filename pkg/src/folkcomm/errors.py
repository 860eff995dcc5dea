"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration / usage problems exit
with 2, numerical failures with 3, and hard assumption or precondition
failures with 4.
"""


class FolkcommError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(FolkcommError, ValueError):
    """Invalid parameters, malformed config files, or bad file contents."""


class DimensionError(FolkcommError, ValueError):
    """Shapes of the inputs do not conform."""


class ContractViolationError(FolkcommError, ValueError):
    """An input violates a documented precondition (e.g. non-orthonormal
    columns, a mixed node passed where a pure one is required)."""


class NumericalError(FolkcommError, RuntimeError):
    """Non-finite values or other numerical breakdown during computation."""


class NoPureNodesError(FolkcommError, RuntimeError):
    """The rank test detected no pure resource nodes; the tensor stage
    cannot proceed."""


class InfeasibleThresholdsError(FolkcommError, ValueError):
    """The requested rank-test error level leaves no feasible (tau1, tau2)."""


class RankDeficiencyError(FolkcommError, RuntimeError):
    """A matrix that must have numerical rank >= k does not."""
