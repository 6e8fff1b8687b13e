"""Exception hierarchy shared by all formnet modules."""


class FormnetError(Exception):
    """Base class for every error raised by formnet."""


class ConfigurationError(FormnetError, ValueError):
    """Invalid model, gain, graph or scenario parameters."""


class GraphError(ConfigurationError):
    """Malformed communication graph (missing predecessors, extra leaders)."""


class DegenerateDirectionError(ConfigurationError):
    """A mesh direction with a single agent has no discretization step."""


class CertificationError(FormnetError):
    """Inputs to a stability certificate violate its preconditions."""


class InputError(FormnetError, ValueError):
    """A log or data product lacks a channel required by an analysis."""


class SimulationAbort(FormnetError, RuntimeError):
    """Raised when the integrated state stops being finite."""

    def __init__(self, message, agent=None, time=None):
        super().__init__(message)
        self.agent = agent
        self.time = time
