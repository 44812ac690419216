class HashBeamError(Exception):
    """Base class for every error the simulator raises on purpose."""


class ConfigError(HashBeamError):
    def __init__(self, message="Invalid configuration"):
        super().__init__(message)


class MessageSpaceExhausted(HashBeamError):
    def __init__(self, message="Not enough distinct messages for the active users"):
        super().__init__(message)


class DimensionMismatch(HashBeamError):
    def __init__(self, message="Array shapes do not agree"):
        super().__init__(message)


class SingularSystemError(HashBeamError):
    def __init__(
        self,
        message="Gram matrix is singular; use reg > 0 or make L*M >= K",
    ):
        super().__init__(message)


class TooFewSamples(HashBeamError):
    def __init__(self, message="Need at least two samples to fit a Gaussian"):
        super().__init__(message)


class InsufficientSamples(HashBeamError):
    def __init__(self, message="Too few H0 samples to resolve the target false-alarm rate"):
        super().__init__(message)


class CalibrationVerificationError(HashBeamError):
    def __init__(self, message="Calibrated alpha does not reproduce the target SNR"):
        super().__init__(message)


class UnmetTargetError(HashBeamError):
    def __init__(self, message="No hash length within the search cap meets the targets"):
        super().__init__(message)


class MalformedResultsFile(HashBeamError):
    def __init__(self, message="Results file is malformed"):
        super().__init__(message)


class EmptyGridError(HashBeamError):
    def __init__(self, message="Sweep grid is empty"):
        super().__init__(message)
