"""Exception hierarchy shared by the simulator, receiver and classifier."""


class PrachError(Exception):
    """Base class for every error raised by prach_sentinel."""


class InvalidArgumentError(PrachError, ValueError):
    pass


class IndexExhaustedError(InvalidArgumentError):
    """Preamble index needs more cyclic shifts than one root provides."""


class InvalidConfigError(InvalidArgumentError):
    pass


class MalformedInputError(InvalidArgumentError):
    pass


class ShapeError(InvalidArgumentError):
    """Tensor shape does not match what a layer expects.

    ``layer`` names the layer that rejected the input.
    """

    def __init__(self, layer, message):
        super().__init__(f"{layer}: {message}")
        self.layer = layer


class ContractViolationError(PrachError, RuntimeError):
    pass


class DivergedTrainingError(PrachError, ArithmeticError):
    def __init__(self, epoch, message="non-finite loss"):
        super().__init__(f"training diverged at epoch {epoch}: {message}")
        self.epoch = epoch


class ConfigValidationError(InvalidConfigError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class DatasetLoadError(PrachError, OSError):
    pass


class CorruptHeaderError(DatasetLoadError):
    pass


class VersionMismatchError(DatasetLoadError):
    pass


class TruncatedTensorError(DatasetLoadError):
    pass


class ModelLoadError(PrachError, OSError):
    pass
