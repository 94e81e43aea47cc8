"""Exception types raised across the simulator."""


class FemtoError(Exception):
    """Base class for all simulator errors."""


class ConfigurationError(FemtoError):
    """Bad channel, level set or scenario configuration."""


class ScenarioError(FemtoError):
    """A node or link required by a computation is not active."""


class EstimationError(FemtoError):
    """Probe or link-gain estimation could not be performed."""


class NumericError(FemtoError):
    """Non-finite input to a learning computation."""


class ProtocolError(FemtoError):
    """MAC protocol rule was violated."""


class AdmissionError(ProtocolError):
    """No free acquisition slot is left for a joining FBS."""
