"""Exception types raised across the package."""


class LimoError(Exception):
    """Base class for all package errors."""


class UnsupportedMetricError(LimoError, ValueError):
    def __init__(self, metric: str):
        super().__init__(f"unsupported EDGE_WEIGHT_TYPE: {metric!r}")
        self.metric = metric


class MalformedFileError(LimoError, ValueError):
    pass


class InvalidTourError(LimoError, ValueError):
    pass


class SizeLimitError(LimoError, ValueError):
    pass


class EmptyCandidateError(LimoError, ValueError):
    pass


class StitchError(LimoError, ValueError):
    def __init__(self, cluster: int, message: str):
        super().__init__(f"cluster {cluster}: {message}")
        self.cluster = cluster


class ConfigError(LimoError, ValueError):
    pass
