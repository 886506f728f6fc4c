"""
Utils module initialization
"""

from .io_utils import IOUtils
from .stats_utils import StatsUtils, ChiSquareResult, LinearFit

__all__ = [
    "IOUtils",
    "StatsUtils",
    "ChiSquareResult",
    "LinearFit",
]
