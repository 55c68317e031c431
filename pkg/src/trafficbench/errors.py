"""Shared exception types.

ConfigurationError covers bad user input (config files, scenario
definitions, parameter sets) and maps to exit code 2 in the CLI.
ContractError covers violated runtime preconditions between components
(out-of-range actuation, mismatched dimensions, misaligned seed sets)
and is a bug in the caller, not in the input.
"""


class ConfigurationError(ValueError):
    """Invalid configuration or scenario definition."""


class ContractError(ValueError):
    """A runtime precondition between components was violated."""


class DegenerateStatisticsWarning(UserWarning):
    """A statistical procedure hit a degenerate input (zero variance,
    all-zero differences) and returned a flagged fallback result."""
