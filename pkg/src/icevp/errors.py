"""Exception hierarchy shared across the package."""


class IceVPError(Exception):
    """Base class for all package errors."""


class DegenerateStrainError(IceVPError):
    """Unregularized viscosities/stress requested at a strain rate with zero yield magnitude."""


class ConfigurationError(IceVPError):
    """Invalid parameter combination or run configuration."""


class NonConvergenceError(IceVPError):
    """An iterative procedure failed to reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SupportViolationError(IceVPError):
    """A field's support is too close to the boundary for the requested operation."""


class MeshResolutionError(IceVPError):
    """Requested length scale is not resolvable on the given mesh."""


class TraceError(IceVPError):
    """A zero-trace field was required but not supplied."""


class MeshMismatchError(IceVPError):
    """Fields defined on different meshes were combined."""


class AdmissibilityError(IceVPError):
    """Test field violates the admissibility conditions of the relaxed evolution equation."""


class FeasibilityError(IceVPError):
    """Stress field violates the pointwise feasibility bound."""


class MassRangeError(IceVPError):
    """Mass field is outside its admissible positive range."""


class ScheduleError(IceVPError):
    """Parameter schedule violates an admissibility constraint."""

    def __init__(self, message, triple=None):
        super().__init__(message)
        self.triple = triple


class ForcingParseError(IceVPError):
    """Malformed forcing file."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class GeometryError(IceVPError):
    """Invalid geometric query (point outside domain, bad window, ...)."""
