from __future__ import annotations

"""
Error hierarchy for the latent-space UQ toolkit.

Every failure raised by this codebase derives from LatentUQError so the CLI
can map it to an exit code in one place. Where a builtin exception carries
the same meaning (ValueError, EOFError) it is inherited as well.
"""

from typing import Optional


class LatentUQError(Exception):
    """Root of all toolkit errors."""


# -----------------------------------------------------------------------------
# Numerics
# -----------------------------------------------------------------------------

class NotPositiveDefinite(LatentUQError, ValueError):
    """A Cholesky pivot was <= 0; the caller must regularize."""


class DegenerateSampleCount(LatentUQError, ValueError):
    """Fewer than two samples were supplied to a covariance estimate."""


class DimensionMismatch(LatentUQError, ValueError):
    pass


class EmptyInput(LatentUQError, ValueError):
    pass


# -----------------------------------------------------------------------------
# Data ingestion
# -----------------------------------------------------------------------------

class BadMagic(LatentUQError, ValueError):
    pass


class TruncatedFile(LatentUQError, EOFError):
    pass


class LabelAbsent(LatentUQError, ValueError):
    pass


class BadParameter(LatentUQError, ValueError):
    pass


# -----------------------------------------------------------------------------
# Networks
# -----------------------------------------------------------------------------

class BadArchitecture(LatentUQError, ValueError):
    pass


class Diverged(LatentUQError, ArithmeticError):
    """Training produced a non-finite loss."""


class EmptyDataset(LatentUQError, ValueError):
    pass


class BadFormat(LatentUQError, ValueError):
    """Persisted model bytes are corrupt (magic, checksum or layout)."""


class VersionMismatch(LatentUQError, ValueError):
    pass


# -----------------------------------------------------------------------------
# Latent UQ model
# -----------------------------------------------------------------------------

class EmptyClass(LatentUQError, ValueError):
    def __init__(self, message: str, classes: Optional[list] = None):
        super().__init__(message)
        self.classes = list(classes or [])

    def __reduce__(self):
        return type(self), (str(self), self.classes)


class BadPercentiles(LatentUQError, ValueError):
    pass


class BadThresholds(LatentUQError, ValueError):
    pass


class FingerprintMismatch(LatentUQError, ValueError):
    pass


# -----------------------------------------------------------------------------
# Baselines / harness
# -----------------------------------------------------------------------------

class BadSeeds(LatentUQError, ValueError):
    pass


class MemberTrainingError(LatentUQError):
    def __init__(self, member_index: int, cause: Exception):
        super().__init__(f"ensemble member {member_index} failed: {cause}")
        self.member_index = member_index
        self.cause = cause

    def __reduce__(self):
        return type(self), (self.member_index, self.cause)


class ExperimentError(LatentUQError):
    def __init__(self, label: int, method: str, cause: Exception):
        super().__init__(f"held-out label {label}, method {method}: {cause}")
        self.label = label
        self.method = method
        self.cause = cause

    def __reduce__(self):
        return type(self), (self.label, self.method, self.cause)


# -----------------------------------------------------------------------------
# Configuration
# -----------------------------------------------------------------------------

class ConfigError(LatentUQError):
    pass


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError, ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.detail = message

    def __reduce__(self):
        return type(self), (self.key, self.detail)
