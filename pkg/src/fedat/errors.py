"""Exception hierarchy shared by every fedat module."""


class FedATError(Exception):
    """Base class for all errors raised by fedat."""


class DimensionError(FedATError, ValueError):
    """Array shapes do not line up."""


class InvalidHyperparameterError(FedATError, ValueError):
    pass


class InvalidLabelError(FedATError, ValueError):
    pass


class ContractViolationError(FedATError, RuntimeError):
    """An API was called with state it does not accept (e.g. a stale forward cache)."""


class DivergenceError(FedATError, FloatingPointError):
    """A loss or activation became NaN/Inf."""


class DataFormatError(FedATError, ValueError):
    pass


class EmptyDatasetError(FedATError, ValueError):
    pass


class ConfigError(FedATError, ValueError):
    """Invalid experiment configuration. The message starts with the offending key path."""


class ProtocolError(FedATError, RuntimeError):
    """Federation protocol misuse: empty aggregation, all clients failed, round overflow."""


class AggregationError(FedATError, ValueError):
    pass


class TrainingError(FedATError, RuntimeError):
    pass
