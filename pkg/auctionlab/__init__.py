"""
auctionlab
A periodic-auction mechanism design lab: one strategic trader, Poisson
market makers, and an exchange choosing fees and closing randomization.
"""

__version__ = "0.1.0"

from .exceptions import (
    AuctionLabError, CacheError, DataError, InfeasibleMechanismError, UnsortedDataWarning,
    ValidationError,
)
from .model import AuctionParams, Beliefs, ClosingRule, FeeFamily, FeeSchedule, preset
from .engine import EstimatorConfig, Method, conditional_value
from .trader import MuTable, best_arrival, optimize_mu
from .quality import quality_table, quarter_check
from .bilevel import ObjectiveKind, ObjectiveSpec, evaluate_mechanism, optimize_mechanism
from .calibration import calibrate, load_bars

__all__ = [
    "AuctionParams", "Beliefs", "ClosingRule", "FeeFamily", "FeeSchedule", "preset",
    "EstimatorConfig", "Method", "conditional_value",
    "MuTable", "best_arrival", "optimize_mu",
    "quality_table", "quarter_check",
    "ObjectiveKind", "ObjectiveSpec", "evaluate_mechanism", "optimize_mechanism",
    "calibrate", "load_bars",
    "AuctionLabError", "ValidationError", "DataError", "InfeasibleMechanismError",
    "CacheError", "UnsortedDataWarning",
]
