"""Exception taxonomy shared by every module.

Validation problems (bad model data, bad arguments) are kept apart from
numerical failures (tolerances not met, horizons too short, too little
simulation data) so the command line layer can map them onto distinct
exit codes.
"""


class MapinfError(Exception):
    """Base class for everything raised on purpose by this package."""


class ModelValidationError(MapinfError, ValueError):
    """A model, matrix, law or argument violates a structural precondition."""


class DomainError(ModelValidationError):
    """A transform argument is outside its admissible region."""


class UnsupportedFeatureError(MapinfError):
    """The request is well formed but outside what the engine computes."""


class NumericalFailure(MapinfError):
    """A computation ran but could not meet its accuracy contract."""


class HorizonError(NumericalFailure):
    """A truncated integral's tail bound exceeds the requested tolerance."""


class RefinementError(NumericalFailure):
    """A fixed-step integration error estimate exceeds the tolerance."""

    def __init__(self, message, suggested_step=None):
        super().__init__(message)
        self.suggested_step = suggested_step


class InsufficientDataError(NumericalFailure):
    """A simulation observed too few events to report an estimate."""
