"""Bi-level loss reweighting for group fairness.

The outer variable ``lam`` sets how much each (label, group) cell, or each
client, contributes to the training loss.  After a model is fitted to the
reweighted loss, notion-specific statistics measure the remaining unfairness
and ``lam`` takes a normalised step along them, followed by projection back
onto its feasible set.

Notions:

* ``DP``  demographic parity; ``lam_a`` weighs the ``y=0`` cell of group ``a``
  and ``2 n_{*,a}/n - lam_a`` the ``y=1`` cell.
* ``EO``  equal opportunity; ``lam_a`` (``a >= 1``) weighs the ``y=1`` cell of
  group ``a``, group 0 receives the remainder of ``n_{1,*}/n``.
* ``EOD`` equalized odds; one such simplex per label.
* ``CP``  client parity; ``lam^(i)`` (``i >= 1``) weighs client ``i``'s loss,
  client 0 receives ``1 - sum(lam)``.

All losses here are group means.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGroupError, DomainError

NOTIONS = ("DP", "EO", "EOD", "CP")


@dataclass(frozen=True)
class GroupCounts:
    """Counts ``n_{y,a}`` (shape ``(2, A)``) and optionally per client ``(I, 2, A)``."""

    n_ya: np.ndarray
    per_client: np.ndarray | None = None

    def __post_init__(self) -> None:
        n_ya = np.asarray(self.n_ya, dtype=np.int64)
        if n_ya.ndim != 2 or n_ya.shape[0] != 2 or np.any(n_ya < 0):
            raise DomainError("n_ya must be a non-negative (2, A) integer array")
        object.__setattr__(self, "n_ya", n_ya)
        if self.per_client is not None:
            pc = np.asarray(self.per_client, dtype=np.int64)
            if pc.ndim != 3 or pc.shape[1:] != n_ya.shape or np.any(pc < 0):
                raise DomainError("per_client must be a non-negative (I, 2, A) array")
            if not np.array_equal(pc.sum(axis=0), n_ya):
                raise DomainError("per-client counts do not add up to the totals")
            object.__setattr__(self, "per_client", pc)

    @classmethod
    def from_arrays(cls, y, a, client=None, A: int | None = None, I: int | None = None) -> "GroupCounts":
        y = np.asarray(y, dtype=np.int64)
        a = np.asarray(a, dtype=np.int64)
        A = int(A if A is not None else a.max() + 1)
        n_ya = np.zeros((2, A), dtype=np.int64)
        np.add.at(n_ya, (y, a), 1)
        per_client = None
        if client is not None:
            client = np.asarray(client, dtype=np.int64)
            I = int(I if I is not None else client.max() + 1)
            per_client = np.zeros((I, 2, A), dtype=np.int64)
            np.add.at(per_client, (client, y, a), 1)
        return cls(n_ya, per_client)

    @property
    def A(self) -> int:
        return self.n_ya.shape[1]

    @property
    def I(self) -> int:
        return 1 if self.per_client is None else self.per_client.shape[0]

    @property
    def n(self) -> int:
        return int(self.n_ya.sum())

    @property
    def n_star_a(self) -> np.ndarray:
        return self.n_ya.sum(axis=0)

    @property
    def n_y_star(self) -> np.ndarray:
        return self.n_ya.sum(axis=1)

    @property
    def n_client(self) -> np.ndarray:
        if self.per_client is None:
            return np.array([self.n])
        return self.per_client.sum(axis=(1, 2))


@dataclass(frozen=True)
class GroupLossReport:
    """Mean losses per (y, a) cell and, when clients are known, per client."""

    L: np.ndarray  # (2, A) mean loss of each cell, 0 for empty cells
    counts: GroupCounts
    client_loss: np.ndarray | None = None  # (I,) mean loss of each client

    @classmethod
    def from_losses(cls, losses, y, a, counts: GroupCounts, client=None) -> "GroupLossReport":
        losses = np.asarray(losses, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        a = np.asarray(a, dtype=np.int64)
        sums = np.zeros((2, counts.A))
        np.add.at(sums, (y, a), losses)
        L = np.divide(sums, counts.n_ya, out=np.zeros_like(sums), where=counts.n_ya > 0)
        cl = None
        if client is not None:
            client = np.asarray(client, dtype=np.int64)
            csum = np.zeros(counts.I)
            np.add.at(csum, client, losses)
            nc = counts.n_client
            cl = np.divide(csum, nc, out=np.zeros_like(csum), where=nc > 0)
        return cls(L, counts, cl)

    @property
    def L_prime(self) -> np.ndarray:
        """``n_{y,a} L_{y,a} / n_{*,a}``: each cell's share of its group's mean loss."""
        return cell_share(self.L, self.counts)

    @property
    def L0_star(self) -> float:
        n0 = self.counts.n_ya[0]
        return float((n0 * self.L[0]).sum() / max(n0.sum(), 1))


def cell_share(L: np.ndarray, counts: GroupCounts) -> np.ndarray:
    n_star = counts.n_star_a
    return np.divide(counts.n_ya * L, n_star[None, :], out=np.zeros((2, counts.A)), where=n_star[None, :] > 0)


@dataclass(frozen=True)
class FeasibleSet:
    """Box ``0 <= lam <= upper`` plus simplex caps ``sum(lam[idx]) <= cap``."""

    upper: np.ndarray
    caps: tuple[tuple[np.ndarray, float], ...] = ()

    def project(self, values: np.ndarray) -> np.ndarray:
        out = np.clip(np.asarray(values, dtype=float), 0.0, self.upper)
        for idx, cap in self.caps:
            total = out[idx].sum()
            if total > cap * (1.0 + 1e-12):  # rounding after a previous rescale is not a violation
                out[idx] = out[idx] * (cap / total)
        return out

    def contains(self, values: np.ndarray, tol: float = 1e-12) -> bool:
        v = np.asarray(values, dtype=float)
        if np.any(v < -tol) or np.any(v > self.upper + tol):
            return False
        return all(v[idx].sum() <= cap + tol for idx, cap in self.caps)


@dataclass(frozen=True)
class LambdaWeights:
    notion: str
    values: np.ndarray
    feasible: FeasibleSet = field(repr=False)

    def with_values(self, values: np.ndarray) -> "LambdaWeights":
        return LambdaWeights(self.notion, np.asarray(values, dtype=float), self.feasible)

    def to_list(self) -> list[float]:
        return [float(v) for v in self.values]


@dataclass(frozen=True)
class FStatistics:
    """Notion statistics. For DP ``values[a] = F_a`` with ``F_0 = 0``."""

    notion: str
    values: np.ndarray


def _check_notion(notion: str) -> None:
    if notion not in NOTIONS:
        raise DomainError(f"unknown fairness notion {notion!r}")


def feasible_set(notion: str, counts: GroupCounts) -> FeasibleSet:
    _check_notion(notion)
    n = counts.n
    A = counts.A
    if notion == "DP":
        return FeasibleSet(2.0 * counts.n_star_a / n)
    if notion == "EO":
        cap = counts.n_y_star[1] / n
        return FeasibleSet(np.full(A - 1, cap), ((np.arange(A - 1), cap),))
    if notion == "EOD":
        caps = counts.n_y_star / n
        upper = np.repeat(caps, A - 1)
        return FeasibleSet(upper, tuple((np.arange(y * (A - 1), (y + 1) * (A - 1)), float(caps[y])) for y in (0, 1)))
    I = counts.I
    return FeasibleSet(np.ones(I - 1), ((np.arange(I - 1), 1.0),))


def init_lambda(notion: str, counts: GroupCounts) -> LambdaWeights:
    """Starting point at which the reweighted loss is the plain mean loss."""
    _check_notion(notion)
    n = counts.n
    if notion == "DP":
        values = counts.n_star_a / n
    elif notion == "EO":
        values = counts.n_ya[1, 1:] / n
    elif notion == "EOD":
        values = counts.n_ya[:, 1:].ravel() / n
    else:
        values = counts.n_client[1:] / n
    return LambdaWeights(notion, np.asarray(values, dtype=float), feasible_set(notion, counts))


def compute_F_dp(report: GroupLossReport, counts: GroupCounts | None = None) -> FStatistics:
    counts = counts or report.counts
    return f_dp_from_shares(report.L_prime, counts)


def f_dp_from_shares(L_prime: np.ndarray, counts: GroupCounts) -> FStatistics:
    """``F_a`` from cell shares ``L'``; zero-one loss makes it a positive-rate gap."""
    n_star = counts.n_star_a
    if np.any(n_star == 0):
        raise DegenerateGroupError("every sensitive group needs at least one sample")
    Lp = np.asarray(L_prime, dtype=float)
    ratio = counts.n_ya[0] / n_star
    F = -Lp[0, 0] + Lp[1, 0] + Lp[0] - Lp[1] + ratio[0] - ratio
    F[0] = 0.0
    return FStatistics("DP", F)


def compute_statistics(notion: str, report: GroupLossReport, counts: GroupCounts | None = None) -> FStatistics:
    """Notion statistics: ``F_a`` for DP, loss gaps to the reference group/client otherwise."""
    _check_notion(notion)
    counts = counts or report.counts
    if notion == "DP":
        return compute_F_dp(report, counts)
    return statistics_from_losses(notion, report.L, counts, report.client_loss)


def statistics_from_losses(notion: str, L: np.ndarray, counts: GroupCounts, client_loss=None) -> FStatistics:
    if notion == "EO":
        if counts.n_ya[1].min() == 0:
            raise DegenerateGroupError("equal opportunity needs positives in every group")
        return FStatistics("EO", L[1, 1:] - L[1, 0])
    if notion == "EOD":
        if counts.n_ya.min() == 0:
            raise DegenerateGroupError("equalized odds needs every (y, a) cell populated")
        return FStatistics("EOD", (L[:, 1:] - L[:, :1]).ravel())
    if notion == "CP":
        if client_loss is None:
            raise DomainError("client parity needs per-client losses")
        cl = np.asarray(client_loss, dtype=float)
        return FStatistics("CP", cl[1:] - cl[0])
    raise DomainError(f"use compute_F_dp for {notion}")


def direction(F: FStatistics) -> np.ndarray:
    """Update direction ``mu``; for DP ``mu_0 = -sum F_a`` and ``mu_a = F_a``."""
    if F.notion == "DP":
        mu = np.array(F.values, dtype=float)
        mu[0] = -mu[1:].sum()
        return mu
    return np.array(F.values, dtype=float)


def update_lambda(lam: LambdaWeights, F: FStatistics, alpha: float) -> LambdaWeights:
    """``lam + alpha mu / ||mu||``, projected; unchanged when ``mu = 0``."""
    if alpha <= 0:
        raise DomainError("alpha must be positive")
    if F.notion != lam.notion:
        raise DomainError("statistics and weights belong to different notions")
    mu = direction(F)
    norm = float(np.linalg.norm(mu))
    if norm == 0.0:
        return lam
    return lam.with_values(lam.feasible.project(lam.values + (alpha / norm) * mu))


def outer_objective(F: FStatistics) -> float:
    return float(np.sum(np.square(F.values)))


def sample_weights(lam: LambdaWeights, counts: GroupCounts) -> np.ndarray:
    """Per-sample loss weight (scaled by ``n``) for each cell.

    Returns ``(2, A)`` for DP/EO/EOD and ``(I,)`` (per client) for CP; a
    sample's weight is its cell's entry and the reweighted objective is the
    mean of ``weight * loss`` over all ``n`` samples.
    """
    n = counts.n
    A = counts.A
    v = np.asarray(lam.values, dtype=float)
    if lam.notion == "CP":
        nc = counts.n_client.astype(float)
        coef = np.concatenate([[1.0 - v.sum()], v])
        return np.divide(n * coef, nc, out=np.zeros_like(nc), where=nc > 0)

    n_ya = counts.n_ya.astype(float)
    if lam.notion == "DP":
        n_star = counts.n_star_a.astype(float)
        coef = np.stack([v, 2.0 * n_star / n - v])
        denom = np.broadcast_to(n_star, (2, A))
    elif lam.notion == "EO":
        coef = np.empty((2, A))
        coef[0] = n_ya[0]  # y=0 cells keep unit weight
        coef[1, 1:] = v
        coef[1, 0] = counts.n_y_star[1] / n - v.sum()
        coef[0] = coef[0] / n
        denom = n_ya
    else:
        lv = v.reshape(2, A - 1)
        coef = np.empty((2, A))
        coef[:, 1:] = lv
        coef[:, 0] = counts.n_y_star / n - lv.sum(axis=1)
        denom = n_ya
    w = np.divide(n * coef, denom, out=np.zeros((2, A)), where=denom > 0)
    return np.maximum(w, 0.0)


def per_sample_weights(lam: LambdaWeights, counts: GroupCounts, y, a, client=None) -> np.ndarray:
    w = sample_weights(lam, counts)
    if lam.notion == "CP":
        if client is None:
            raise DomainError("client parity weights need client assignments")
        return w[np.asarray(client, dtype=np.int64)]
    return w[np.asarray(y, dtype=np.int64), np.asarray(a, dtype=np.int64)]


def verify_parity_equivalence(y, a, yhat) -> tuple[bool, bool]:
    """``(all F_a == 0, empirical demographic parity)`` under the zero-one loss."""
    y = np.asarray(y, dtype=np.int64)
    a = np.asarray(a, dtype=np.int64)
    yhat = np.asarray(yhat, dtype=np.int64)
    counts = GroupCounts.from_arrays(y, a)
    report = GroupLossReport.from_losses((yhat != y).astype(float), y, a, counts)
    F = compute_F_dp(report, counts)
    f_zero = bool(np.all(np.abs(F.values) <= 1e-12))
    pos = np.zeros(counts.A, dtype=np.int64)
    np.add.at(pos, a, yhat)
    n_star = counts.n_star_a
    # exact rational comparison pos_a / n_a == pos_0 / n_0
    dp = bool(np.all(pos * n_star[0] == pos[0] * n_star))
    return f_zero, dp
