"""Exception types shared across the analysis and solver layers."""


class DegenhypError(Exception):
    """Base class for all package-specific failures."""


class DomainError(DegenhypError, ValueError):
    """Argument outside the admissible (t, x, xi) domain."""


class DataError(DegenhypError, ValueError):
    """Non-finite or structurally invalid numerical data."""


class ConstantMultiplicityError(DegenhypError, ValueError):
    """Characteristic roots violate the declared gap / multiplicity pattern."""


class SymmetrizabilityError(DegenhypError, ValueError):
    """No bounded symmetrizer exists for the sampled principal part."""


class DisjointSpectraError(DegenhypError, ValueError):
    """Block eigenvalues coincide; the Sylvester elimination is singular."""


class UnsupportedStructureError(DegenhypError, ValueError):
    """Operation requires separable (finite tensor sum) symbol structure."""


class StiffnessError(DegenhypError, RuntimeError):
    """Adaptive time stepper underflowed its step size."""


class DivergenceError(DegenhypError, RuntimeError):
    """Time integration produced non-finite state."""


class CapabilityError(DegenhypError, ValueError):
    """Requested quantity exceeds what the stored trajectory supports."""


class FitError(DegenhypError, ValueError):
    """Spectral decay band too narrow or degenerate for a regression."""
