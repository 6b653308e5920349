"""Simulated federated training: FedAvg, FedFB and the local/centralized baselines."""

from .client import ClientState
from .protocol import (
    LOG_HEADER,
    ProtocolConfig,
    Quantizer,
    RoundLog,
    RoundMessage,
    fedavg_aggregate,
    secagg_sum,
    write_round_log,
)
from .runners import (
    METHODS,
    LocalFB,
    RunResult,
    cfl_run,
    ensemble_predictor,
    fedavg_run,
    fedfb_run,
    lft_ensemble_run,
    lft_fedavg_run,
    run_method,
)
from .server import Server

__all__ = [
    "ClientState", "LOG_HEADER", "ProtocolConfig", "Quantizer", "RoundLog", "RoundMessage",
    "fedavg_aggregate", "secagg_sum", "write_round_log", "METHODS", "LocalFB", "RunResult",
    "cfl_run", "ensemble_predictor", "fedavg_run", "fedfb_run", "lft_ensemble_run",
    "lft_fedavg_run", "run_method", "Server",
]
