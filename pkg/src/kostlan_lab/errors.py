"""Exception types raised by the numerical routines."""


class KostlanLabError(Exception):
    """Base class for all library errors."""


class NotTransverseError(KostlanLabError):
    """A linear map that should be onto is (numerically) rank deficient."""


class DegenerateInputError(KostlanLabError):
    """The transversality margin of a polynomial map is not positive."""


class FlowBreakdownError(KostlanLabError):
    """An isotopy or Moser flow left its domain or failed to re-project."""


class SymplecticDegeneracyError(KostlanLabError):
    """A restricted two-form is degenerate on the tangent frame."""


class DisconnectedMeshError(KostlanLabError):
    """Graph distances are infinite between some pair of mesh vertices."""


class BadScaleError(KostlanLabError):
    """The scaled base curve has a non-positive transversality margin."""


class BadLoopError(KostlanLabError):
    """No cube-root branch cut avoids the base loop."""
