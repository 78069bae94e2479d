"""Exception taxonomy used across the package."""


class IbcmError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(IbcmError):
    """Malformed user input (non-sorted breaks, bad continuity, ...)."""


class OutOfDomain(IbcmError):
    """Evaluation point outside the parametric domain."""


class NumericalFailure(IbcmError):
    """A numerical step that should not fail did (singular Gram matrix, ...)."""


class SingularGeometry(IbcmError):
    """Degenerate surface metric or zero curve velocity at a point."""


class RefineRequired(IbcmError):
    """Cut-cell topology outside the supported set; refine the grid."""


class InvalidOffset(IbcmError):
    """Offset curve self-intersects or collides with another curve."""


class SegmentationFailure(IbcmError):
    """Interface segment without a valid owner on one side."""


class CannotCoupleStrongly(IbcmError):
    """Interface spaces do not match (breaks, degree or continuity differ)."""


class UnsupportedConfiguration(IbcmError):
    """A parameter combination the formulation excludes (e.g. mixed coupling with gamma2 != 1)."""


class InvalidLoad(IbcmError):
    """Load violating a tangency or admissibility constraint."""


class GeometryFailure(IbcmError):
    """Geometry construction did not meet its tolerance (curve fit residual, ...)."""


class AssemblyFailure(IbcmError):
    """Non-finite entries produced during assembly."""
