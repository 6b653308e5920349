"""Client side: local training and the statistics payload."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset
from ..errors import EmptyClientError
from ..fairbatch import GroupCounts, GroupLossReport, LambdaWeights, per_sample_weights
from ..models import ModelParams, TrainConfig, per_sample_loss, sgd_train
from .protocol import Quantizer, RoundMessage, stats_message


@dataclass
class ClientState:
    id: int
    data: Dataset = field(repr=False)
    n_groups: int
    counts: GroupCounts = field(init=False)
    params: ModelParams | None = None
    lam: LambdaWeights | None = None

    def __post_init__(self) -> None:
        if len(self.data) == 0:
            raise EmptyClientError(f"client {self.id} has no samples")
        self.counts = GroupCounts.from_arrays(self.data.y, self.data.a, A=self.n_groups)

    @property
    def n(self) -> int:
        return len(self.data)

    def sample_weights(self, lam: LambdaWeights, counts: GroupCounts) -> np.ndarray:
        """Per-sample weights; ``counts`` are global for FedFB and local for local training."""
        d = self.data
        if lam.notion == "CP":
            return per_sample_weights(lam, counts, d.y, d.a, client=np.full(self.n, self.id))
        return per_sample_weights(lam, counts, d.y, d.a)

    def local_update(self, params: ModelParams, lam: LambdaWeights, counts: GroupCounts, train: TrainConfig, seed) -> RoundMessage:
        w = self.sample_weights(lam, counts)
        self.params = sgd_train(params, self.data.X, self.data.y, w, train, seed=seed)
        return RoundMessage(self.id, self.n, params=self.params)

    def loss_report(self, params: ModelParams) -> GroupLossReport:
        losses = per_sample_loss(params, self.data.X, self.data.y)
        return GroupLossReport.from_losses(losses, self.data.y, self.data.a, self.counts)

    def statistics(self, params: ModelParams, notion: str, global_counts: GroupCounts, quantizer: Quantizer) -> RoundMessage:
        """Payload whose sum over clients gives the global statistic inputs.

        DP: cell shares ``n_ya^(i) L_ya^(i) / n_{*,a}``.  EO/EOD: cell loss
        sums divided by the global cell count.  CP: the client's mean loss.
        """
        losses = per_sample_loss(params, self.data.X, self.data.y)
        y, a = self.data.y, self.data.a
        if notion == "CP":
            return stats_message(self.id, self.n, [losses.mean()], quantizer)
        report = GroupLossReport.from_losses(losses, y, a, self.counts)
        if notion == "DP":
            n_star = global_counts.n_star_a
            share = np.divide(
                self.counts.n_ya * report.L, n_star[None, :], out=np.zeros((2, self.n_groups)), where=n_star[None, :] > 0
            )
            return stats_message(self.id, self.n, share.ravel(), quantizer)
        sums = np.zeros((2, self.n_groups))
        np.add.at(sums, (y, a), losses)
        n_ya = global_counts.n_ya
        part = np.divide(sums, n_ya, out=np.zeros_like(sums), where=n_ya > 0)
        return stats_message(self.id, self.n, part[1] if notion == "EO" else part.ravel(), quantizer)
