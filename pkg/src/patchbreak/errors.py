"""Exception types shared across the package.

Configuration and shape problems are ValueErrors so callers that validate
inputs generically keep working; runtime failures (training divergence,
protocol violations) are RuntimeErrors.
"""


class ConfigError(ValueError):
    """Bad configuration value (unknown name, out-of-range parameter)."""


class ShapeError(ValueError):
    """Array argument has the wrong shape or dtype for the operation."""


class ValidationError(ValueError):
    """Structured input (matching, permutation, bundle) fails its invariants."""


class SizeError(ValueError):
    """Problem size outside the supported range for an exact routine."""


class TrainingError(RuntimeError):
    """Optimization failed to reach the required quality."""


class ExtractionError(RuntimeError):
    """Encoder extraction could not produce a usable surrogate."""


class ProtocolError(RuntimeError):
    """Challenge protocol misuse (wrong bundle contents, reused state)."""


class HygieneError(RuntimeError):
    """Attack pointed at a directory that holds solution secrets."""
