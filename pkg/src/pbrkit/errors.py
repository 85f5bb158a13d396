"""Exception hierarchy; each class maps to a CLI exit code."""


class PbrkitError(Exception):
    exit_code = 1


class ConfigError(PbrkitError):
    exit_code = 2


class DataValidationError(PbrkitError, ValueError):
    exit_code = 3


class NumericalError(PbrkitError, ArithmeticError):
    exit_code = 4
