"""Exception hierarchy. Each family maps to one CLI exit code."""

from __future__ import annotations


class PredsensError(Exception):
    exit_code = 1


class ConfigError(PredsensError):
    exit_code = 1


class DataError(PredsensError, ValueError):
    exit_code = 2


class ShapeError(DataError):
    """Operand shapes do not conform."""


class DomainError(PredsensError, ValueError):
    exit_code = 2


class ContractError(PredsensError, ValueError):
    exit_code = 2


class FingerprintError(DataError):
    """Model file was produced for a different feature schema."""


class ModelFormatError(DataError):
    pass


class UndefinedMetricError(PredsensError, ValueError):
    """Privileged positive rate is zero, so a ratio metric has no value."""

    exit_code = 2


class EmptyGroupError(PredsensError, ValueError):
    exit_code = 2


class NumericError(PredsensError, ArithmeticError):
    exit_code = 3

    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
