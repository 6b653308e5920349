"""End-to-end training loops for the federated and centralized baselines.

Every loop runs ``T`` rounds of ``local_epochs`` SGD epochs.  Client ``i``
in round ``t`` draws its shuffles from ``SeedSequence([seed, t, i])``, so a
single-client federation and centralized training consume identical streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ..data import Dataset, stack
from ..errors import DomainError, MissingGroupError, UnsupportedError
from ..fairbatch import (
    FStatistics,
    GroupCounts,
    GroupLossReport,
    LambdaWeights,
    compute_statistics,
    init_lambda,
    outer_objective,
    per_sample_weights,
    update_lambda,
)
from ..metrics import EvalReport, evaluate
from ..models import ModelParams, forward, init_params, per_sample_loss, sgd_train
from .client import ClientState
from .protocol import ProtocolConfig, RoundLog, RoundMessage, fedavg_aggregate
from .server import Server

INIT_STREAM = 2**32 - 1
METHODS = ("FedAvg", "FedFB", "LFT+FedAvg", "LFT+Ensemble", "CFL")


def round_seed(seed: int, t: int, client: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, t, client])


def initial_params(kind: str, d: int, seed: int) -> ModelParams:
    return init_params(kind, d, np.random.default_rng([seed, INIT_STREAM]))


@dataclass
class RunResult:
    method: str
    predictor: Callable = field(repr=False)
    params: ModelParams | None
    lam: LambdaWeights | list[LambdaWeights] | None
    log: list[RoundLog]
    stats_history: list[FStatistics] = field(default_factory=list, repr=False)
    params_history: list[ModelParams] = field(default_factory=list, repr=False)
    report: EvalReport | None = None
    members: list[ModelParams] = field(default_factory=list, repr=False)

    @property
    def bits_total(self) -> int:
        return int(sum(r.bits_sent for r in self.log))


def _n_groups(parts: Sequence[Dataset]) -> int:
    return max(p.n_groups for p in parts)


def _model_predictor(params: ModelParams):
    return lambda X, a: np.atleast_1d(forward(params, X))


def _log(t, I, lam, obj, predictor, eval_data, notion, A, bits) -> tuple[RoundLog, EvalReport | None]:
    report = None
    acc = disp = float("nan")
    if eval_data is not None:
        report = evaluate(predictor, eval_data, n_groups=A)
        acc, disp = report.accuracy, report.disparity(notion)
    values = () if lam is None else tuple(np.concatenate([np.atleast_1d(l.values) for l in lam]) if isinstance(lam, list) else lam.values)
    return RoundLog(t, I, tuple(float(v) for v in values), float(obj), acc, disp, int(bits)), report


def _clients(parts: Sequence[Dataset]) -> list[ClientState]:
    if not parts:
        raise DomainError("at least one client is required")
    A = _n_groups(parts)
    return [ClientState(i, p, A) for i, p in enumerate(parts)]


def _global_counts(clients: Sequence[ClientState]) -> GroupCounts:
    """Counts are reported once at setup; they are the only non-model data the server holds."""
    per_client = np.stack([c.counts.n_ya for c in clients])
    return GroupCounts(per_client.sum(axis=0), per_client)


def fedfb_run(
    parts: Sequence[Dataset],
    config: ProtocolConfig,
    kind: str = "mlp-4",
    seed: int = 0,
    eval_data: Dataset | None = None,
    method: str = "FedFB",
) -> RunResult:
    """FedAvg rounds with a server-side reweighting step every ``k`` rounds.

    Each round: clients train from the broadcast model under the global
    weights; the server averages; on update rounds clients report statistics
    of the averaged model and the server moves ``lam``.
    """
    clients = _clients(parts)
    counts = _global_counts(clients)
    server = Server(counts, config)
    A, I = counts.A, len(clients)
    params = initial_params(kind, clients[0].data.d, seed)
    logs, stats, history = [], [], []
    report = None
    for t in range(1, config.T + 1):
        msgs = [c.local_update(params, server.lam, counts, config.train, round_seed(seed, t, c.id)) for c in clients]
        params = server.aggregate(msgs)
        history.append(params)
        bits = 0
        obj = float("nan")
        if config.updates_lambda and config.is_update_round(t):
            smsgs = [c.statistics(params, config.notion, counts, config.quantizer) for c in clients]
            F = server.reconstruct(smsgs)
            stats.append(F)
            obj = outer_objective(F)
            server.step(F, t)
            bits = sum(m.bit_cost for m in smsgs)
        rec, report = _log(t, I, server.lam, obj, _model_predictor(params), eval_data, config.notion, A, bits)
        logs.append(rec)
    return RunResult(method, _model_predictor(params), params, server.lam, logs, stats, history, report)


def fedavg_run(parts, config: ProtocolConfig, kind="mlp-4", seed=0, eval_data=None) -> RunResult:
    """FedFB with the update period beyond the horizon: plain sample-size weighted FedAvg."""
    return fedfb_run(parts, replace(config, k=config.T + 1), kind, seed, eval_data, method="FedAvg")


class LocalFB:
    """Centralized reweighting on one dataset; the building block of CFL and LFT."""

    def __init__(self, ds: Dataset, config: ProtocolConfig, A: int, stream: int = 0):
        self.ds = ds
        self.config = config
        self.stream = stream
        client = ds.client if config.notion == "CP" else None
        if config.notion == "CP" and client is None:
            raise UnsupportedError("client parity needs client assignments")
        self.client = client
        self.counts = GroupCounts.from_arrays(ds.y, ds.a, client, A=A)
        if config.notion != "CP" and np.any(self.counts.n_star_a == 0):
            raise MissingGroupError("every sensitive group must be present")
        self.lam = init_lambda(config.notion, self.counts)

    def train(self, params: ModelParams, seed: int, t: int) -> ModelParams:
        w = per_sample_weights(self.lam, self.counts, self.ds.y, self.ds.a, self.client)
        return sgd_train(params, self.ds.X, self.ds.y, w, self.config.train, seed=round_seed(seed, t, self.stream))

    def statistics(self, params: ModelParams) -> FStatistics:
        losses = per_sample_loss(params, self.ds.X, self.ds.y)
        report = GroupLossReport.from_losses(losses, self.ds.y, self.ds.a, self.counts, self.client)
        return compute_statistics(self.config.notion, report, self.counts)

    def update(self, params: ModelParams, t: int) -> FStatistics:
        F = self.statistics(params)
        self.lam = update_lambda(self.lam, F, self.config.alpha_at(t))
        return F


def cfl_run(pooled: Dataset, config: ProtocolConfig, kind="mlp-4", seed=0, eval_data=None, stream: int = 0) -> RunResult:
    """Reweighting on pooled data: train ``local_epochs``, then update ``lam`` every ``k`` rounds."""
    fb = LocalFB(pooled, config, pooled.n_groups, stream)
    params = initial_params(kind, pooled.d, seed)
    logs, stats, history = [], [], []
    report = None
    for t in range(1, config.T + 1):
        params = fb.train(params, seed, t)
        history.append(params)
        obj = float("nan")
        if config.updates_lambda and config.is_update_round(t):
            F = fb.update(params, t)
            stats.append(F)
            obj = outer_objective(F)
        rec, report = _log(t, 1, fb.lam, obj, _model_predictor(params), eval_data, config.notion, fb.counts.A, 0)
        logs.append(rec)
    return RunResult("CFL", _model_predictor(params), params, fb.lam, logs, stats, history, report)


def _check_local(config: ProtocolConfig) -> None:
    if config.notion == "CP":
        raise UnsupportedError("client parity is not defined for purely local training")


def lft_fedavg_run(parts, config: ProtocolConfig, kind="mlp-4", seed=0, eval_data=None) -> RunResult:
    """Local reweighting with local statistics; the server only averages models."""
    _check_local(config)
    clients = _clients(parts)
    A, I = clients[0].n_groups, len(clients)
    fbs = [LocalFB(c.data, config, A, stream=c.id) for c in clients]
    params = initial_params(kind, clients[0].data.d, seed)
    logs, history = [], []
    report = None
    for t in range(1, config.T + 1):
        msgs = [RoundMessage(c.id, c.n, params=fb.train(params, seed, t)) for c, fb in zip(clients, fbs)]
        params = fedavg_aggregate(msgs)
        history.append(params)
        obj = float("nan")
        if config.updates_lambda and config.is_update_round(t):
            obj = float(np.mean([outer_objective(fb.update(params, t)) for fb in fbs]))
        rec, report = _log(t, I, [fb.lam for fb in fbs], obj, _model_predictor(params), eval_data, config.notion, A, 0)
        logs.append(rec)
    return RunResult("LFT+FedAvg", _model_predictor(params), params, [fb.lam for fb in fbs], logs, [], history, report)


def ensemble_predictor(members: Sequence[ModelParams]):
    """Mean member probability: the positive rate of the randomised ensemble."""
    members = list(members)

    def predict(X, a=None):
        return np.mean([np.atleast_1d(forward(m, X)) for m in members], axis=0)

    return predict


def lft_ensemble_run(parts, config: ProtocolConfig, kind="mlp-4", seed=0, eval_data=None) -> RunResult:
    """Independent local reweighting per client, no communication; predictions are averaged."""
    _check_local(config)
    clients = _clients(parts)
    A, I = clients[0].n_groups, len(clients)
    fbs = [LocalFB(c.data, config, A, stream=c.id) for c in clients]
    members = [initial_params(kind, clients[0].data.d, seed) for _ in clients]
    logs = []
    report = None
    for t in range(1, config.T + 1):
        members = [fb.train(m, seed, t) for fb, m in zip(fbs, members)]
        obj = float("nan")
        if config.updates_lambda and config.is_update_round(t):
            obj = float(np.mean([outer_objective(fb.update(m, t)) for fb, m in zip(fbs, members)]))
        rec, report = _log(t, I, [fb.lam for fb in fbs], obj, ensemble_predictor(members), eval_data, config.notion, A, 0)
        logs.append(rec)
    lams = [fb.lam for fb in fbs]
    return RunResult("LFT+Ensemble", ensemble_predictor(members), None, lams, logs, [], [], report, members)


def run_method(method: str, parts: Sequence[Dataset], config: ProtocolConfig, kind="mlp-4", seed=0, eval_data=None) -> RunResult:
    if method == "FedAvg":
        return fedavg_run(parts, config, kind, seed, eval_data)
    if method == "FedFB":
        return fedfb_run(parts, config, kind, seed, eval_data)
    if method == "LFT+FedAvg":
        return lft_fedavg_run(parts, config, kind, seed, eval_data)
    if method == "LFT+Ensemble":
        return lft_ensemble_run(parts, config, kind, seed, eval_data)
    if method == "CFL":
        return cfl_run(stack(parts), config, kind, seed, eval_data)
    raise DomainError(f"unknown method {method!r}; choose from {METHODS}")
