"""Exception types shared across the package."""


class BirknfError(Exception):
    """Base class for all library errors."""


class EmptySpectrum(BirknfError):
    """Raised when a spectrum constructor receives no eigenvalues."""


class WeylViolation(BirknfError):
    """Eigenvalue counting function exceeds the declared C*k^d bound."""


class UncoveredEigenvalue(BirknfError):
    """An eigenvalue fell into a gap between cluster intervals."""


class DegreeUnderflow(BirknfError):
    """A bracket would produce a polynomial of degree < 3."""


class ProductTooLarge(BirknfError):
    """Cluster product set exceeds the exhaustive enumeration budget."""


class SingularDivisor(BirknfError):
    """A certified non-resonant key contained a zero small divisor."""


class OutsideSafetyRadius(BirknfError):
    """Initial state lies outside the flow safety ball."""


class BlowUp(BirknfError):
    """Trajectory left the configured domain ball during integration."""


class StabilityViolation(BirknfError):
    """Frequency model parameters make some squared frequency negative."""


class UnsupportedBasis(BirknfError):
    """Mode-product integrals are not available for the requested basis."""
