"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a map (negative time, dose, ...)."""


class DesignError(ValueError):
    """Coefficient synthesis cannot satisfy its constraints with the given clamps."""


class CertificateRefused(RuntimeError):
    """A stability or bounds certificate could not be issued.

    ``witness`` carries the offending abscissa or value when there is one.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class ConfigError(ValueError):
    """A run configuration failed validation; ``field`` names the culprit."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
