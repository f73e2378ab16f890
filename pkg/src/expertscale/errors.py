class ExpertScaleError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ExpertScaleError, ValueError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class TraceParseError(ExpertScaleError, ValueError):
    def __init__(self, path, lineno, message):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


class DimensionError(ExpertScaleError, ValueError):
    pass


class PlacementInconsistencyError(ExpertScaleError):
    """A plan's replicas are not each placed exactly once."""


class PlacementInfeasibleError(ExpertScaleError):
    def __init__(self, message, layer=None, replica=None, iteration=None):
        self.layer = layer
        self.replica = replica
        self.iteration = iteration
        super().__init__(message)


class GuardError(ExpertScaleError, ValueError):
    """Instance too large for exhaustive search."""
