"""IRS-aided multi-tier hybrid computing: simulator, optimizer, experiments."""

from .config import SystemConfig, Topology, DEFAULT_TOPOLOGY, dbm_to_watt, watt_to_dbm
from .sysmodel import (
    ChannelSet, IrsConfig, DtState, Decision, RateReport, Composites,
    DegenerateChannelError, gen_scenario, composite_channels, aircomp_mse,
    uniform_forcing, offload_rates, es_cs_rate, local_rate, evaluate,
    evaluate_no_dt, make_dt_state,
)

__all__ = [
    "SystemConfig", "Topology", "DEFAULT_TOPOLOGY", "dbm_to_watt",
    "watt_to_dbm", "ChannelSet", "IrsConfig", "DtState", "Decision",
    "RateReport", "Composites", "DegenerateChannelError", "gen_scenario",
    "composite_channels", "aircomp_mse", "uniform_forcing", "offload_rates",
    "es_cs_rate", "local_rate", "evaluate", "evaluate_no_dt", "make_dt_state",
]

__version__ = "0.1.0"
