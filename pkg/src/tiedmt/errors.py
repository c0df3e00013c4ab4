"""Exception types shared across the toolkit."""


class TiedError(Exception):
    """Base class for toolkit errors."""


class ShapeError(TiedError, ValueError):
    pass


class ContractError(TiedError, ValueError):
    """A precondition of an operation was violated."""


class NumericError(TiedError, ArithmeticError):
    pass


class ConfigError(TiedError, ValueError):
    """Invalid model, training or CLI configuration."""


class CorpusError(TiedError, ValueError):
    pass
