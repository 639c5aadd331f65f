"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: input/config problems exit 1,
backend/transport problems exit 2, broken internal invariants exit 3.
"""


class TarotError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(TarotError):
    """Bad configuration value, file, or flag combination."""


class InputError(TarotError):
    """Malformed user-supplied input (manifest, mask file, image, ...)."""


class GeometryError(InputError):
    """Mask/box precondition violated by the caller."""


class BackendError(TarotError):
    """Base class for model-backend failures."""


class BackendTransportError(BackendError):
    """Network-level failure talking to a remote backend (retryable)."""


class BackendSemanticError(BackendError):
    """The backend answered, but the answer violates the contract."""


class ScenarioLookupError(BackendError):
    """A scripted backend was asked something its scenario does not cover."""


class InvariantViolation(TarotError):
    """An internal pipeline invariant broke; always a bug, never user error."""


class PipelineError(TarotError):
    """Unrecoverable pipeline failure; carries the partially written trace."""

    def __init__(self, message, cause=None):
        super().__init__(message)
        self.cause = cause
