"""Period-three detection and chaos statistics for randomly initialized ReLU recurrent maps."""

from .chaos import ChaosVerdict, detect_period3_exact, detect_period3_numeric, screen_period3
from .errors import BudgetExceeded, ConfigError, ContractError, DomainError
from .netgen import InitScheme, NetworkSample, build_map, sample_network, y_values
from .pwl import PwlMap, compose, fixed_points, iterate_t

__version__ = "0.1.0"

__all__ = [
    "BudgetExceeded",
    "ChaosVerdict",
    "ConfigError",
    "ContractError",
    "DomainError",
    "InitScheme",
    "NetworkSample",
    "PwlMap",
    "build_map",
    "compose",
    "detect_period3_exact",
    "detect_period3_numeric",
    "fixed_points",
    "iterate_t",
    "sample_network",
    "screen_period3",
    "y_values",
]
