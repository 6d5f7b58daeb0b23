"""Exception types shared across the package."""


class VflError(Exception):
    """Base class for every error this package raises on purpose."""


class ShapeError(VflError, ValueError):
    """Operand dimensions do not chain or agree."""


class ParameterError(VflError, ValueError):
    """A hyperparameter is outside its legal range."""


class DistributionError(VflError, ValueError):
    """A probability matrix fails its row-sum or positivity contract."""


class NonFiniteError(VflError, ArithmeticError):
    """A public numeric operation produced NaN or Inf."""


class ProtocolError(VflError, RuntimeError):
    """Federation round sequencing violated, e.g. a stale gradient packet."""


class StateError(VflError, RuntimeError):
    """An operation ran before the state it depends on was prepared."""


class ModeError(VflError, ValueError):
    """Operation incompatible with the federation mode."""


class DataError(VflError, ValueError):
    """A dataset file failed to parse or map."""


class ConfigError(VflError, ValueError):
    """Experiment configuration invalid; carries the offending field path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
