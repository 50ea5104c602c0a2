"""Exception types shared across the workbench."""


class QkdBenchError(Exception):
    """Base class for every error raised by qkdbench."""


class MissingSpectralData(QkdBenchError, KeyError):
    """A component has no loss data covering the requested wavelength."""

    def __str__(self):
        return Exception.__str__(self)


class InvalidGeometry(QkdBenchError, ValueError):
    """An optical path is inconsistent with the requested calculation."""


class DuplicateId(QkdBenchError, KeyError):
    """A risk-ledger record with the same id already exists."""

    def __str__(self):
        return Exception.__str__(self)


class NotBlinded(QkdBenchError, RuntimeError):
    """Bright-pulse response requested from a detector that is not blinded."""


class LengthMismatch(QkdBenchError, ValueError):
    """Alice's and Bob's keys differ in length or do not fill whole subblocks."""


class SeedLengthMismatch(QkdBenchError, ValueError):
    """Toeplitz seed length is not key length + output length - 1."""


class IntensityOrderViolation(QkdBenchError, ValueError):
    """Decoy intensities violate nu2 < nu1 and nu1 + nu2 < mu."""


class InvalidQBER(QkdBenchError, ValueError):
    """An error rate left the range the estimator can handle."""


class AbortBlock(QkdBenchError):
    """The block yields no secret key and must be discarded.

    ``reason`` is a short machine-readable tag; ``partial`` carries whatever
    intermediate quantities were computed before the abort.
    """

    def __init__(self, reason, message=None, partial=None):
        super().__init__(message or reason)
        self.reason = reason
        self.partial = partial or {}


class ConfigInvalid(QkdBenchError, ValueError):
    """A scenario or configuration file is malformed or references missing data."""


class UnknownMetric(QkdBenchError, KeyError):
    """A requested series is not present in the report."""

    def __str__(self):
        return Exception.__str__(self)
