"""Fair federated learning laboratory.

Population-level fairness/accuracy analysis, FairBatch-style reweighting,
and a simulated federation running FedAvg, FedFB and local/centralized
baselines.
"""

from ._backend import BACKEND
from .data import Dataset, SplitSpec, SyntheticSpec, generate_synthetic, load_csv, split_clients, train_test_split
from .metrics import EvalReport, evaluate, replicate
from .models import ModelParams, TrainConfig, forward, init_params, sgd_train
from .population import PopulationSpec, compute_delta, compute_g, solve_cfl, tradeoff_curve

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Dataset",
    "SplitSpec",
    "SyntheticSpec",
    "generate_synthetic",
    "load_csv",
    "split_clients",
    "train_test_split",
    "EvalReport",
    "evaluate",
    "replicate",
    "ModelParams",
    "TrainConfig",
    "forward",
    "init_params",
    "sgd_train",
    "PopulationSpec",
    "compute_delta",
    "compute_g",
    "solve_cfl",
    "tradeoff_curve",
]
