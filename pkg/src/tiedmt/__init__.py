"""Tied multitask sequence-to-sequence models with attention, in numpy."""

from .errors import ConfigError, ContractError, CorpusError, NumericError, ShapeError, TiedError

__version__ = "0.1.0"

__all__ = ["ConfigError", "ContractError", "CorpusError", "NumericError", "ShapeError", "TiedError"]
