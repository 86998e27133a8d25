"""Exception types shared across the toolkit."""


class DigCrowdError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(DigCrowdError):
    """Invalid scene or pipeline configuration."""


class FormatError(DigCrowdError):
    """Malformed input file, header, or tensor layout."""


class PolylineDomainError(DigCrowdError):
    """Polyline evaluated outside its x-domain."""


class PartitionError(DigCrowdError):
    """Depth partition could not produce a near/far split."""


class SynthError(DigCrowdError):
    """Synthetic scene generation failure."""
