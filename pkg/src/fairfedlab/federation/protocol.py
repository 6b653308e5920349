"""Message types, quantisation and the two aggregation primitives."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import DimensionError, DomainError, LengthMismatchError
from ..fairbatch import NOTIONS
from ..models import ModelParams, TrainConfig

UNQUANTIZED_BITS = 64
LOG_HEADER = ("round", "client_count", "lambda_json", "outer_obj", "accuracy", "disparity", "bits_sent")


@dataclass(frozen=True)
class Quantizer:
    """Uniform scalar quantiser with ``2**bits`` levels on ``[lo, hi]``; ``bits=None`` is the identity."""

    bits: int | None = None
    lo: float = 0.0
    hi: float = 2.0

    def __post_init__(self) -> None:
        if self.bits is not None and self.bits < 1:
            raise DomainError("quantiser needs at least one bit")
        if not self.lo < self.hi:
            raise DomainError("quantiser range must satisfy lo < hi")

    @property
    def step(self) -> float:
        return 0.0 if self.bits is None else (self.hi - self.lo) / (2**self.bits - 1)

    @property
    def bits_per_value(self) -> int:
        return UNQUANTIZED_BITS if self.bits is None else int(self.bits)

    def codebook(self) -> np.ndarray:
        if self.bits is None:
            raise DomainError("identity quantiser has no codebook")
        return np.linspace(self.lo, self.hi, 2**self.bits)

    def encode(self, v) -> np.ndarray:
        if self.bits is None:
            raise DomainError("identity quantiser has no codes")
        v = np.clip(np.asarray(v, dtype=float), self.lo, self.hi)
        return np.rint((v - self.lo) / self.step).astype(np.int64)

    def decode(self, codes) -> np.ndarray:
        return self.lo + np.asarray(codes, dtype=float) * self.step

    def __call__(self, v) -> np.ndarray:
        if self.bits is None:
            return np.asarray(v, dtype=float)
        return self.decode(self.encode(v))


@dataclass(frozen=True)
class ProtocolConfig:
    notion: str = "DP"
    k: int = 1
    T: int = 10
    alpha: float = 0.1
    decay: bool = False  # alpha_t = alpha / t when set
    quantizer: Quantizer = field(default_factory=Quantizer)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self) -> None:
        if self.notion not in NOTIONS:
            raise DomainError(f"unknown notion {self.notion!r}")
        if self.T < 1 or self.k < 1:
            raise DomainError("rounds and update period must be positive")
        if self.alpha <= 0:
            raise DomainError("alpha must be positive")

    @property
    def updates_lambda(self) -> bool:
        return self.k <= self.T

    def alpha_at(self, t: int) -> float:
        return self.alpha / t if self.decay else self.alpha

    def is_update_round(self, t: int) -> bool:
        return t % self.k == 0


@dataclass(frozen=True)
class RoundMessage:
    """What one client hands the server in one phase of a round."""

    client_id: int
    sample_count: int
    params: ModelParams | None = None
    stats: np.ndarray | None = None
    bit_cost: int = 0

    def __post_init__(self) -> None:
        if self.stats is not None:
            s = np.asarray(self.stats, dtype=float)
            if not np.all(np.isfinite(s)):
                raise DomainError("statistics must be finite")
            object.__setattr__(self, "stats", s)


def stats_message(client_id: int, sample_count: int, stats, quantizer: Quantizer) -> RoundMessage:
    s = np.asarray(stats, dtype=float)
    return RoundMessage(client_id, sample_count, stats=s, bit_cost=int(s.size) * quantizer.bits_per_value)


def secagg_sum(values: Sequence, quantizer: Quantizer = Quantizer()) -> np.ndarray:
    """Sum of the quantised client vectors; only the total leaves this function."""
    vecs = [np.atleast_1d(np.asarray(v, dtype=float)) for v in values]
    if not vecs:
        raise LengthMismatchError("secure aggregation needs at least one client")
    shape = vecs[0].shape
    if any(v.shape != shape for v in vecs):
        raise LengthMismatchError("client vectors differ in length")
    return np.sum(np.stack([quantizer(v) for v in vecs]), axis=0)


def fedavg_aggregate(messages: Sequence[RoundMessage]) -> ModelParams:
    """Sample-size weighted average, reduced in client-id order."""
    msgs = sorted((m for m in messages if m.params is not None), key=lambda m: m.client_id)
    if not msgs:
        raise DomainError("no parameters to aggregate")
    kind, d = msgs[0].params.kind, msgs[0].params.d
    if any(m.params.kind != kind or m.params.d != d for m in msgs):
        raise DimensionError("clients disagree on model kind or dimension")
    n = sum(m.sample_count for m in msgs)
    if n <= 0:
        raise DomainError("aggregation needs a positive total sample count")
    theta = np.sum(np.stack([(m.sample_count / n) * m.params.theta for m in msgs]), axis=0)
    return ModelParams(kind, d, theta)


@dataclass(frozen=True)
class RoundLog:
    round: int
    client_count: int
    lam: tuple[float, ...]
    outer_obj: float
    accuracy: float
    disparity: float
    bits_sent: int

    def row(self) -> list:
        return [
            self.round,
            self.client_count,
            json.dumps([float(v) for v in self.lam]),
            repr(float(self.outer_obj)),
            repr(float(self.accuracy)),
            repr(float(self.disparity)),
            self.bits_sent,
        ]


def write_round_log(path, logs: Sequence[RoundLog]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(LOG_HEADER)
        for rec in logs:
            wr.writerow(rec.row())
