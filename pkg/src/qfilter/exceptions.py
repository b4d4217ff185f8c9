"""Exception types raised across the package."""


class QFilterError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatch(QFilterError):
    """Operator and state dimensions are incompatible."""


class NotHermitian(QFilterError):
    """Matrix violates Hermitian symmetry beyond tolerance."""


class NotPSD(QFilterError):
    """Matrix has an eigenvalue below the allowed negative tolerance."""


class TooFarFromDomain(QFilterError):
    """Matrix cannot be repaired into a density matrix within tolerance."""


class ZeroProbabilityJump(QFilterError):
    """Jump map applied to a state that gives it zero probability."""


class DegenerateNormalization(QFilterError):
    """Kraus step denominator underflowed or the step increment is not small.

    Signals that the time step is too large for the scheme or that the
    state is corrupted; the trajectory must be aborted, not renormalized.
    """


class RateOverflow(QFilterError):
    """Per-step jump probability exceeds the configured bound."""

    def __init__(self, message: str, suggested_dt: float | None = None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class SingularNormalizer(QFilterError):
    """Kraus normalizer sum has a near-zero eigenvalue."""


class DegenerateOutcome(QFilterError):
    """Selected measurement outcome annihilates the filter state."""


class InsufficientData(QFilterError):
    """Not enough checkpoints or trajectories for the requested statistic."""


class EnsembleError(QFilterError):
    """Too many trajectories aborted to produce a trustworthy ensemble."""


class ConfigError(QFilterError):
    """Base class for configuration problems."""


class ParseError(ConfigError):
    """Config document is not well formed."""


class ValidationError(ConfigError):
    """Config document is well formed but violates the schema."""
