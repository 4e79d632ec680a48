"""Analytic model and Monte Carlo simulator for the uplink age of information
of a two-way data-exchange link powered solely by the master node."""

from .model import (
    ConfigError,
    DerivedParams,
    InvalidParameterError,
    SystemParams,
    derive,
    is_stable,
    load_config,
    parse_config,
)
from .analytic import (
    AoiRateResult,
    LimitingConstants,
    MomentPair,
    TradeoffOptimum,
    UnstableQueueError,
    avg_uplink_aoi,
    uplink_rate,
)
from .simulator import SimConfig, SimStats, SimTrace, run

__all__ = [
    "ConfigError",
    "DerivedParams",
    "InvalidParameterError",
    "SystemParams",
    "derive",
    "is_stable",
    "load_config",
    "parse_config",
    "AoiRateResult",
    "LimitingConstants",
    "MomentPair",
    "TradeoffOptimum",
    "UnstableQueueError",
    "avg_uplink_aoi",
    "uplink_rate",
    "SimConfig",
    "SimStats",
    "SimTrace",
    "run",
]
