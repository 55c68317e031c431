"""Traffic control benchmarking toolkit.

Two discrete-time plant models (a cell-based freeway corridor and a
store-and-forward arterial network), a set of classical feedback
controllers for ramp metering and signal timing, and an experiment
layer that turns repeated stochastic runs into calibration tables and
hypothesis tests.
"""

__version__ = "0.1.0"

from .errors import ConfigurationError, ContractError, DegenerateStatisticsWarning

__all__ = [
    "__version__",
    "ConfigurationError",
    "ContractError",
    "DegenerateStatisticsWarning",
]
