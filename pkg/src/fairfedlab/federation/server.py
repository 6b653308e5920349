"""Server side of FedFB.

The server sees public group counts and ``RoundMessage`` values only; it
never touches features or labels.  Statistics arrive as secure-aggregation
totals, except for client parity where each client's loss is the statistic.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import MissingGroupError
from ..fairbatch import (
    FStatistics,
    GroupCounts,
    LambdaWeights,
    f_dp_from_shares,
    init_lambda,
    outer_objective,
    statistics_from_losses,
    update_lambda,
)
from ..models import ModelParams
from .protocol import ProtocolConfig, RoundMessage, fedavg_aggregate, secagg_sum


def stat_size(notion: str, A: int) -> int:
    """Number of scalars one client sends per statistics phase."""
    return {"DP": 2 * A, "EO": A, "EOD": 2 * A, "CP": 1}[notion]


class Server:
    def __init__(self, counts: GroupCounts, config: ProtocolConfig):
        if config.notion != "CP" and counts.A < 2:
            raise MissingGroupError("group fairness needs at least two sensitive groups")
        if np.any(counts.n_star_a == 0):
            raise MissingGroupError("every sensitive group must appear in at least one client")
        self.counts = counts
        self.config = config
        self.lam: LambdaWeights = init_lambda(config.notion, counts)
        self.last_F: FStatistics | None = None

    def aggregate(self, messages: Sequence[RoundMessage]) -> ModelParams:
        return fedavg_aggregate(messages)

    def reconstruct(self, messages: Sequence[RoundMessage]) -> FStatistics:
        """Global statistics from client payloads."""
        notion = self.config.notion
        msgs = sorted(messages, key=lambda m: m.client_id)
        if notion == "CP":
            q = self.config.quantizer
            losses = np.array([float(q(m.stats)[0]) for m in msgs])
            return statistics_from_losses("CP", np.zeros((2, self.counts.A)), self.counts, losses)
        total = secagg_sum([m.stats for m in msgs], self.config.quantizer)
        if notion == "DP":
            return f_dp_from_shares(total.reshape(2, self.counts.A), self.counts)
        if notion == "EO":
            L = np.zeros((2, self.counts.A))
            L[1] = total
            return statistics_from_losses("EO", L, self.counts)
        return statistics_from_losses("EOD", total.reshape(2, self.counts.A), self.counts)

    def step(self, F: FStatistics, t: int) -> LambdaWeights:
        self.last_F = F
        self.lam = update_lambda(self.lam, F, self.config.alpha_at(t))
        return self.lam

    def outer_objective(self) -> float:
        return float("nan") if self.last_F is None else outer_objective(self.last_F)
