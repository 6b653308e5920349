"""Analytic fairness/accuracy solver for one-dimensional Gaussian populations.

Each client ``i`` draws ``a ~ Bern(q_i)`` and ``x | a`` from a Gaussian (or a
mixture of Gaussians); the label satisfies ``P(y = 1 | x) = eta(x)``.  The
optimal classifiers under a demographic-parity budget threshold ``eta`` at
group-specific levels indexed by a scalar ``lam``; ``g(lam)`` is the mean
difference of that classifier and is strictly increasing in ``lam``.

Three training regimes are solved exactly:

* centralized fair learning (``solve_cfl``) on the pooled population,
* local fair training followed by an ensemble (``solve_lft_ensemble``),
* local fair training with parameter averaging (``solve_lft_fedavg``), which
  is a linear program over a discretised feature axis.

Accuracy integrals ``int_t^inf (2 eta - 1) dP`` have no closed form for the
logistic link; they are tabulated once per Gaussian component on a
standardised grid and interpolated.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.special import expit, log_ndtr, logit, logsumexp, ndtr

from .errors import ClipWarning, DomainError, RangeError, UnsupportedError
from .lp import solve_bounded_lp

METHODS = ("CFL", "LFT+Ensemble", "LFT+FedAvg")


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinkFunction:
    """Strictly increasing map from features to class probability."""

    kind: str = "logistic"

    def __post_init__(self) -> None:
        if self.kind != "logistic":
            raise DomainError(f"unknown link kind {self.kind!r}")

    def forward(self, x):
        return expit(x)

    def inverse(self, p):
        return logit(p)


@dataclass(frozen=True)
class GroupDistribution:
    mean: float
    std: float

    def __post_init__(self) -> None:
        if not (self.std > 0 and math.isfinite(self.std)):
            raise DomainError("std must be positive and finite")


@dataclass(frozen=True)
class GroupMixture:
    """Finite mixture of Gaussian components for one sensitive group."""

    components: tuple[tuple[float, GroupDistribution], ...]

    def __post_init__(self) -> None:
        w = np.array([c[0] for c in self.components], dtype=float)
        if w.size == 0 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise DomainError("mixture weights must be non-negative and sum to 1")


Group = Union[GroupDistribution, GroupMixture]


@dataclass(frozen=True)
class ClientPopulation:
    dist0: Group
    dist1: Group
    q: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.q <= 1.0:
            raise DomainError("q must lie in [0, 1]")


@dataclass(frozen=True)
class PopulationSpec:
    clients: tuple[ClientPopulation, ...]
    link: LinkFunction = field(default_factory=LinkFunction)

    def __post_init__(self) -> None:
        if len(self.clients) < 1:
            raise DomainError("a population needs at least one client")
        object.__setattr__(self, "clients", tuple(self.clients))

    @property
    def n_clients(self) -> int:
        return len(self.clients)

    @property
    def equal_q(self) -> bool:
        qs = [c.q for c in self.clients]
        return max(qs) - min(qs) <= 1e-15

    @classmethod
    def gaussian(
        cls,
        params: Iterable[tuple[float, float, float, float]],
        link: LinkFunction | None = None,
    ) -> "PopulationSpec":
        """Build from ``(mu0, mu1, sigma, q)`` tuples, one per client."""
        clients = tuple(
            ClientPopulation(GroupDistribution(m0, s), GroupDistribution(m1, s), q)
            for m0, m1, s, q in params
        )
        return cls(clients, link or LinkFunction())


@dataclass(frozen=True)
class ThresholdClassifier:
    """``f(x, a) = 1`` iff ``x > t_a`` with thresholds derived from ``lam``."""

    lam: float
    q: float
    link: LinkFunction = field(default_factory=LinkFunction)

    @property
    def admissible(self) -> float:
        return max(self.q, 1.0 - self.q)

    def threshold_args(self) -> tuple[float, float]:
        return (
            0.5 - self.lam / (2.0 * (1.0 - self.q)),
            0.5 + self.lam / (2.0 * self.q),
        )

    @property
    def saturated(self) -> bool:
        p0, p1 = self.threshold_args()
        return not (0.0 < p0 < 1.0 and 0.0 < p1 < 1.0)

    def thresholds(self) -> tuple[float, float]:
        return tuple(_threshold(p, self.link) for p in self.threshold_args())

    def predict(self, x, a):
        x = np.asarray(x, dtype=float)
        a = np.asarray(a)
        t0, t1 = self.thresholds()
        return np.where(a == 0, x > t0, x > t1).astype(float)


@dataclass(frozen=True)
class MixtureClassifier:
    """Uniform-or-weighted average of threshold classifiers."""

    components: tuple[tuple[float, ThresholdClassifier], ...]

    def __post_init__(self) -> None:
        w = np.array([c[0] for c in self.components], dtype=float)
        if w.size == 0 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise DomainError("mixture weights must be non-negative and sum to 1")

    def predict(self, x, a):
        return sum(w * clf.predict(x, a) for w, clf in self.components)


@dataclass(frozen=True)
class LftFedAvgClassifier:
    """Deterministic member of the closed-form family solving the averaged problem.

    ``f(x, a) = 1`` iff ``sum_i s_i(x, a) p_a^(i)(x) > 0`` with
    ``s_i = 2 eta(x) - 1 + I lam_i (1{a=0}/(1-q) - 1{a=1}/q)``; ties predict 0.
    """

    lambdas: tuple[float, ...]
    q: float
    spec: PopulationSpec

    def score(self, x, a):
        x = np.asarray(x, dtype=float)
        a = np.asarray(a)
        eta = self.spec.link.forward(x)
        I = len(self.lambdas)
        out = np.zeros(np.broadcast(x, a).shape)
        for lam, client in zip(self.lambdas, self.spec.clients):
            shift = np.where(a == 0, I * lam / (1.0 - self.q), -I * lam / self.q)
            dens = np.where(a == 0, _pdf(_components(client.dist0), x), _pdf(_components(client.dist1), x))
            out = out + (2.0 * eta - 1.0 + shift) * dens
        return out

    def predict(self, x, a):
        return (self.score(x, a) > 0).astype(float)


@dataclass(frozen=True)
class GridClassifier:
    """Randomised classifier that is constant on each cell of a feature grid."""

    edges: np.ndarray  # interior cell boundaries, length B - 1
    f: np.ndarray  # shape (2, B), values in [0, 1]

    def predict(self, x, a):
        x = np.asarray(x, dtype=float)
        a = np.asarray(a)
        cell = np.searchsorted(self.edges, x, side="left")
        return np.where(a == 0, self.f[0, cell], self.f[1, cell])


@dataclass(frozen=True)
class TradeoffPoint:
    method: str
    epsilon: float
    accuracy: float
    dp_disp: float


@dataclass(frozen=True)
class PartitionSpec:
    subsets: tuple[tuple[int, ...], tuple[int, ...]]

    def __post_init__(self) -> None:
        s0, s1 = (tuple(int(i) for i in s) for s in self.subsets)
        if not s0 or not s1:
            raise DomainError("both subsets of a partition must be non-empty")
        if set(s0) & set(s1):
            raise DomainError("partition subsets must be disjoint")
        object.__setattr__(self, "subsets", (s0, s1))

    def weights(self) -> tuple[float, float]:
        n0, n1 = (len(s) for s in self.subsets)
        return n0 / (n0 + n1), n1 / (n0 + n1)


@dataclass(frozen=True)
class DeltaResult:
    delta: float
    eps0: float
    eps1: float
    condition_holds: bool
    g0_at_zero: float
    g1_at_zero: float


# ---------------------------------------------------------------------------
# Gaussian-mixture primitives
# ---------------------------------------------------------------------------

_Comps = tuple[tuple[float, float, float], ...]  # (weight, mean, std)


def _components(dist: Group) -> _Comps:
    if isinstance(dist, GroupDistribution):
        return ((1.0, float(dist.mean), float(dist.std)),)
    return tuple((float(w), float(d.mean), float(d.std)) for w, d in dist.components)


def _threshold(p: float, link: LinkFunction) -> float:
    if p <= 0.0:
        return -math.inf
    if p >= 1.0:
        return math.inf
    return float(link.inverse(p))


def _sf(comps: _Comps, t):
    t = np.asarray(t, dtype=float)
    return sum(w * ndtr((m - t) / s) for w, m, s in comps)


def _pdf(comps: _Comps, x):
    x = np.asarray(x, dtype=float)
    return sum(w * np.exp(-0.5 * ((x - m) / s) ** 2) / (s * math.sqrt(2 * math.pi)) for w, m, s in comps)


def _log_tail(comps: _Comps, t: float, upper: bool) -> float:
    terms = []
    for w, m, s in comps:
        if w <= 0:
            continue
        z = (m - t) / s if upper else (t - m) / s
        terms.append(math.log(w) + float(log_ndtr(z)))
    if not terms or all(v == -math.inf for v in terms):
        return -math.inf
    return float(logsumexp(terms))


@lru_cache(maxsize=512)
def _gain_table(kind: str, mean: float, std: float) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative ``H(z) = int_z^inf (2 eta(mean + std u) - 1) phi(u) du`` on a grid."""
    link = LinkFunction(kind)
    h = min(1e-3, 0.02 / std)
    n = int(min(2_000_001, math.ceil(24.0 / h) + 1))
    z = np.linspace(-12.0, 12.0, n)
    integrand = (2.0 * link.forward(mean + std * z) - 1.0) * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    seg = 0.5 * (integrand[1:] + integrand[:-1]) * np.diff(z)
    H = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    return z, H


def _gain(comps: _Comps, t, link: LinkFunction):
    """``int_t^inf (2 eta(x) - 1) dP(x)`` for a Gaussian mixture."""
    t = np.asarray(t, dtype=float)
    total = np.zeros(t.shape)
    for w, m, s in comps:
        z, H = _gain_table(link.kind, m, s)
        zt = np.clip((t - m) / s, z[0], z[-1])
        zt = np.where(np.isnan(zt), z[0], zt)
        total = total + w * np.interp(zt, z, H)
    return total


# ---------------------------------------------------------------------------
# Populations viewed as (group-0 mixture, group-1 mixture, q)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _View:
    comps0: _Comps
    comps1: _Comps
    q: float
    link: LinkFunction


def _client_view(client: ClientPopulation, link: LinkFunction) -> _View:
    return _View(_components(client.dist0), _components(client.dist1), float(client.q), link)


def _pooled_view(spec: PopulationSpec, members: Sequence[int] | None = None) -> _View:
    """Pool clients into one population; group mixtures weight client ``i`` by its group share."""
    idx = list(range(spec.n_clients)) if members is None else list(members)
    qs = np.array([spec.clients[i].q for i in idx], dtype=float)
    w0 = (1.0 - qs) / (1.0 - qs).sum() if (1.0 - qs).sum() > 0 else np.full(len(idx), 1.0 / len(idx))
    w1 = qs / qs.sum() if qs.sum() > 0 else np.full(len(idx), 1.0 / len(idx))
    comps0 = tuple(
        (wi * w, m, s) for wi, i in zip(w0, idx) for w, m, s in _components(spec.clients[i].dist0)
    )
    comps1 = tuple(
        (wi * w, m, s) for wi, i in zip(w1, idx) for w, m, s in _components(spec.clients[i].dist1)
    )
    return _View(comps0, comps1, float(qs.mean()), spec.link)


def _as_view(pop) -> _View:
    if isinstance(pop, _View):
        return pop
    if isinstance(pop, ClientPopulation):
        return _client_view(pop, LinkFunction())
    if isinstance(pop, PopulationSpec):
        return _pooled_view(pop)
    raise TypeError(f"unsupported population type {type(pop).__name__}")


def _check_q(q: float) -> None:
    if not 0.0 < q < 1.0:
        raise DomainError(f"q must lie in the open interval (0, 1), got {q}")


def _clamp_lambda(lam: float, q: float) -> float:
    m = max(q, 1.0 - q)
    if lam < -m - 1e-15 or lam > m + 1e-15:
        warnings.warn(
            f"lambda={lam} outside [-{m}, {m}]; thresholds saturate at +-inf",
            ClipWarning,
            stacklevel=3,
        )
        return min(max(lam, -m), m)
    return lam


def _view_g(v: _View, lam: float) -> float:
    t0, t1 = ThresholdClassifier(lam, v.q, v.link).thresholds()
    return float(_sf(v.comps0, t0) - _sf(v.comps1, t1))


def _view_g_sign(v: _View, lam: float) -> int:
    """Sign of ``g(lam)`` resolved in log space, so extreme tails still compare."""
    t0, t1 = ThresholdClassifier(lam, v.q, v.link).thresholds()
    s0 = float(_sf(v.comps0, t0))
    s1 = float(_sf(v.comps1, t1))
    if s0 + s1 > 1.0:
        # g = cdf1(t1) - cdf0(t0); compare the small lower tails
        a, b = _log_tail(v.comps1, t1, upper=False), _log_tail(v.comps0, t0, upper=False)
    else:
        a, b = _log_tail(v.comps0, t0, upper=True), _log_tail(v.comps1, t1, upper=True)
    if a == b:
        return 0
    return 1 if a > b else -1


def compute_g(pop, lam: float) -> float:
    """Mean difference ``P(f=1 | a=0) - P(f=1 | a=1)`` of the ``lam`` threshold classifier.

    ``pop`` may be a single client or a whole ``PopulationSpec``; the latter
    is pooled, which for equal ``q`` reduces to the mean of client values.
    """
    v = _as_view(pop)
    _check_q(v.q)
    return _view_g(v, _clamp_lambda(float(lam), v.q))


def g_sign(pop, lam: float) -> int:
    v = _as_view(pop)
    _check_q(v.q)
    return _view_g_sign(v, _clamp_lambda(float(lam), v.q))


def invert_g(pop, target: float, *, tol: float = 1e-10, max_iter: int = 200) -> float:
    """Solve ``g(lam) = target`` by bisection over the admissible interval."""
    v = _as_view(pop)
    _check_q(v.q)
    return _invert_view(v, float(target), tol=tol, max_iter=max_iter)


def _invert_view(v: _View, target: float, *, tol: float = 1e-10, max_iter: int = 200) -> float:
    m = max(v.q, 1.0 - v.q)
    lo, hi = -m, m
    g_lo, g_hi = _view_g(v, lo), _view_g(v, hi)
    if target < g_lo - 1e-12 or target > g_hi + 1e-12:
        raise RangeError(f"target {target} outside [{g_lo}, {g_hi}]")

    def side(lam: float) -> int:
        if target == 0.0:
            return _view_g_sign(v, lam)
        diff = _view_g(v, lam) - target
        if abs(diff) <= tol:
            return 0
        return 1 if diff > 0 else -1

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        s = side(mid)
        if s == 0:
            return mid
        if s < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15:
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Accuracy and disparity of (mixtures of) threshold classifiers
# ---------------------------------------------------------------------------


def _group_accuracy(comps: _Comps, t, link: LinkFunction):
    base = 0.5 * (1.0 - float(_gain(comps, -math.inf, link)))
    return base + _gain(comps, t, link)


def evaluate_thresholds(
    spec: PopulationSpec, members: Sequence[tuple[float, float, float]]
) -> tuple[float, float]:
    """Accuracy and mean difference on the pooled population.

    ``members`` lists ``(weight, t0, t1)`` for a randomised mixture of
    threshold rules (each member evaluated in expectation).
    """
    v = _pooled_view(spec)
    acc = 0.0
    md = 0.0
    for w, t0, t1 in members:
        acc += w * float(
            (1.0 - v.q) * _group_accuracy(v.comps0, t0, v.link) + v.q * _group_accuracy(v.comps1, t1, v.link)
        )
        md += w * float(_sf(v.comps0, t0) - _sf(v.comps1, t1))
    return acc, md


def threshold_members(clfs: Sequence[tuple[float, ThresholdClassifier]]) -> list[tuple[float, float, float]]:
    return [(w, *clf.thresholds()) for w, clf in clfs]


# ---------------------------------------------------------------------------
# Centralized fair learning
# ---------------------------------------------------------------------------


def _budget_target(v: _View, eps: float) -> float:
    g0 = _view_g(v, 0.0)
    s = _view_g_sign(v, 0.0)
    return s * min(float(eps), abs(g0))


def solve_cfl(spec: PopulationSpec, epsilon: float) -> tuple[ThresholdClassifier, TradeoffPoint]:
    """Most accurate classifier with ``|MD| <= epsilon`` on the pooled population.

    With unequal ``q_i`` the pooled group rate is their mean and each group
    distribution is the share-weighted mixture of client components.
    """
    if epsilon < 0:
        raise DomainError("epsilon must be non-negative")
    v = _pooled_view(spec)
    _check_q(v.q)
    for c in spec.clients:
        _check_q(c.q)
    lam = _invert_view(v, _budget_target(v, epsilon))
    clf = ThresholdClassifier(lam, v.q, spec.link)
    acc, md = evaluate_thresholds(spec, threshold_members([(1.0, clf)]))
    return clf, TradeoffPoint("CFL", float(epsilon), acc, abs(md))


# ---------------------------------------------------------------------------
# Local fair training + ensemble
# ---------------------------------------------------------------------------


def _local_lambda(spec: PopulationSpec, i: int, eps: float) -> float:
    v = _client_view(spec.clients[i], spec.link)
    return _invert_view(v, _budget_target(v, eps))


def solve_lft_ensemble(
    spec: PopulationSpec, eps_vec: Sequence[float]
) -> tuple[MixtureClassifier, TradeoffPoint]:
    """Uniform ensemble of per-client fair classifiers with budgets ``eps_vec``."""
    I = spec.n_clients
    if len(eps_vec) != I:
        raise DomainError("one budget per client is required")
    for c in spec.clients:
        _check_q(c.q)
    clfs = tuple(
        (1.0 / I, ThresholdClassifier(_local_lambda(spec, i, e), spec.clients[i].q, spec.link))
        for i, e in enumerate(eps_vec)
    )
    mix = MixtureClassifier(clfs)
    acc, md = evaluate_thresholds(spec, threshold_members(clfs))
    return mix, TradeoffPoint("LFT+Ensemble", float(max(eps_vec)), acc, abs(md))


def _require_equal_q(spec: PopulationSpec) -> float:
    if not spec.equal_q:
        raise UnsupportedError("this quantity is defined for clients sharing one q")
    q = spec.clients[0].q
    _check_q(q)
    return q


def _pair_views(spec: PopulationSpec, partition: PartitionSpec | None) -> tuple[_View, _View, float, float]:
    q = _require_equal_q(spec)
    if partition is None:
        if spec.n_clients != 2:
            raise UnsupportedError("psi is defined for two clients; pass a partition otherwise")
        views = [_client_view(c, spec.link) for c in spec.clients]
        return views[0], views[1], 0.5, 0.5
    for s in partition.subsets:
        if any(i < 0 or i >= spec.n_clients for i in s):
            raise DomainError("partition refers to a missing client")
    v0, v1 = (_pooled_view(spec, s) for s in partition.subsets)
    J0, J1 = partition.weights()
    assert abs(v0.q - q) < 1e-12 and abs(v1.q - q) < 1e-12
    return v0, v1, J0, J1


def _psi_parts(v_self: _View, v_other: _View, eps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For each budget, the own signed MD and the other side's MD at the induced lambda."""
    s = _view_g_sign(v_self, 0.0)
    own = s * eps
    cross = np.array([_view_g(v_other, _invert_view(v_self, float(t))) for t in own])
    return own, cross


def compute_psi(
    spec: PopulationSpec, eps0: float, eps1: float, partition: PartitionSpec | None = None
) -> float:
    """Ensemble mean difference as a function of the two local budgets.

    With a partition the two sides are the client subsets (mixtures) and
    the terms are weighted by the subset proportions ``J0, J1``.
    """
    v0, v1, J0, J1 = _pair_views(spec, partition)
    for eps, v in ((eps0, v0), (eps1, v1)):
        if eps < 0 or eps > abs(_view_g(v, 0.0)) + 1e-15:
            raise RangeError(f"budget {eps} outside [0, |g(0)|]")
    own0, cross0 = _psi_parts(v0, v1, np.array([eps0], dtype=float))
    own1, cross1 = _psi_parts(v1, v0, np.array([eps1], dtype=float))
    return float(J0 * J1 * (cross1[0] + cross0[0]) + J0 * J0 * own0[0] + J1 * J1 * own1[0])


def psi_grid(
    spec: PopulationSpec, resolution: int = 201, partition: PartitionSpec | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``psi`` on a ``resolution x resolution`` grid of ``[0, |g_0(0)|] x [0, |g_1(0)|]``."""
    v0, v1, J0, J1 = _pair_views(spec, partition)
    e0 = np.linspace(0.0, abs(_view_g(v0, 0.0)), resolution)
    e1 = np.linspace(0.0, abs(_view_g(v1, 0.0)), resolution)
    return e0, e1, _psi_from_axes(v0, v1, J0, J1, e0, e1)


def _psi_from_axes(v0, v1, J0, J1, e0, e1) -> np.ndarray:
    own0, cross0 = _psi_parts(v0, v1, e0)
    own1, cross1 = _psi_parts(v1, v0, e1)
    return (J0 * J1 * cross0 + J0 * J0 * own0)[:, None] + (J0 * J1 * cross1 + J1 * J1 * own1)[None, :]


def compute_delta(
    spec: PopulationSpec, resolution: int = 201, partition: PartitionSpec | None = None
) -> DeltaResult:
    """Smallest ``|psi|`` over the budget square: the ensemble's fairness floor.

    The grid minimum is refined once on a finer grid spanning the
    neighbouring cells.  ``condition_holds`` reports whether the clients
    favour opposite groups (or one is neutral) and ``psi`` keeps the sign of
    ``g_0(0) + g_1(0)`` everywhere, the setting in which the floor is provably
    positive.  The floor itself is always computed.
    """
    v0, v1, J0, J1 = _pair_views(spec, partition)
    g00, g10 = _view_g(v0, 0.0), _view_g(v1, 0.0)
    c0, c1 = abs(g00), abs(g10)
    e0 = np.linspace(0.0, c0, resolution)
    e1 = np.linspace(0.0, c1, resolution)
    psi = _psi_from_axes(v0, v1, J0, J1, e0, e1)
    k, l = np.unravel_index(np.argmin(np.abs(psi)), psi.shape)
    best = (abs(psi[k, l]), e0[k], e1[l])

    if resolution > 1:
        r0 = np.linspace(e0[max(k - 1, 0)], e0[min(k + 1, resolution - 1)], 41)
        r1 = np.linspace(e1[max(l - 1, 0)], e1[min(l + 1, resolution - 1)], 41)
        fine = _psi_from_axes(v0, v1, J0, J1, r0, r1)
        kk, ll = np.unravel_index(np.argmin(np.abs(fine)), fine.shape)
        if abs(fine[kk, ll]) < best[0]:
            best = (abs(fine[kk, ll]), r0[kk], r1[ll])

    s0, s1 = _view_g_sign(v0, 0.0), _view_g_sign(v1, 0.0)
    total = g00 + g10
    condition = s0 * s1 <= 0 and total != 0.0 and bool(np.all(psi * total > 0))
    return DeltaResult(float(best[0]), float(best[1]), float(best[2]), condition, g00, g10)


def compute_delta_partitioned(
    spec: PopulationSpec, partition: PartitionSpec, resolution: int = 201
) -> DeltaResult:
    return compute_delta(spec, resolution, partition)


# ---------------------------------------------------------------------------
# Local fair training + FedAvg: a linear program on a feature grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteProblem:
    """Discretised population: per-client, per-group cell masses and accuracy gains."""

    points: np.ndarray  # (B,) cell representatives
    edges: np.ndarray  # (B-1,) interior cell boundaries
    mass: np.ndarray  # (I, 2, B) P(x in cell | a, i)
    gain: np.ndarray  # (I, 2, B) int_cell (2 eta - 1) dP(x | a, i)
    q: np.ndarray  # (I,)

    @property
    def n_clients(self) -> int:
        return self.mass.shape[0]

    def objective(self) -> np.ndarray:
        """Accuracy gain of predicting 1 in each cell, flattened over (a, cell)."""
        I = self.n_clients
        pa = np.stack([1.0 - self.q, self.q], axis=1)  # (I, 2)
        return (pa[:, :, None] * self.gain).sum(axis=0).ravel() / I

    def base_accuracy(self) -> float:
        I = self.n_clients
        pa = np.stack([1.0 - self.q, self.q], axis=1)
        total_gain = self.gain.sum(axis=2)  # (I, 2)
        return float((pa * 0.5 * (1.0 - total_gain)).sum() / I)

    def client_md(self) -> np.ndarray:
        """Rows ``v_i`` with ``v_i @ f`` the mean difference on client ``i``."""
        return np.concatenate([self.mass[:, 0, :], -self.mass[:, 1, :]], axis=1)

    def global_md(self) -> np.ndarray:
        w0 = (1.0 - self.q) / (1.0 - self.q).sum()
        w1 = self.q / self.q.sum()
        return np.concatenate([(w0[:, None] * self.mass[:, 0, :]).sum(0), -(w1[:, None] * self.mass[:, 1, :]).sum(0)])

    def evaluate(self, f: np.ndarray) -> tuple[float, float]:
        f = np.asarray(f, dtype=float).ravel()
        return self.base_accuracy() + float(self.objective() @ f), float(self.global_md() @ f)


def default_grid(spec: PopulationSpec, n_points: int = 256, span: float = 6.0) -> np.ndarray:
    comps = [c for client in spec.clients for d in (client.dist0, client.dist1) for c in _components(d)]
    means = [m for _, m, _ in comps]
    smax = max(s for _, _, s in comps)
    return np.linspace(min(means) - span * smax, max(means) + span * smax, n_points)


def discretize(spec: PopulationSpec, points: np.ndarray | None = None, n_points: int = 256) -> FiniteProblem:
    """Cells centred on ``points``; the outer cells extend to infinity so no mass is lost."""
    x = default_grid(spec, n_points) if points is None else np.asarray(points, dtype=float)
    edges = 0.5 * (x[1:] + x[:-1])
    full = np.concatenate([[-math.inf], edges, [math.inf]])
    I = spec.n_clients
    mass = np.empty((I, 2, x.size))
    gain = np.empty((I, 2, x.size))
    for i, client in enumerate(spec.clients):
        for a, dist in enumerate((client.dist0, client.dist1)):
            comps = _components(dist)
            sf = _sf(comps, full)
            gn = _gain(comps, full, spec.link)
            mass[i, a] = sf[:-1] - sf[1:]
            gain[i, a] = gn[:-1] - gn[1:]
    q = np.array([c.q for c in spec.clients], dtype=float)
    return FiniteProblem(x, edges, mass, gain, q)


def solve_finite_lp(problem: FiniteProblem, eps_vec: Sequence[float]) -> np.ndarray:
    """Maximise accuracy subject to ``|v_i @ f| <= eps_i`` and ``0 <= f <= 1``."""
    eps = np.asarray(eps_vec, dtype=float)
    if eps.shape != (problem.n_clients,) or np.any(eps < 0):
        raise DomainError("one non-negative budget per client is required")
    V = problem.client_md()
    A = np.vstack([V, -V])
    b = np.concatenate([eps, eps])
    res = solve_bounded_lp(-problem.objective(), A, b, 1.0)
    return res.x.reshape(2, -1)


def lagrangian_bound(
    problem: FiniteProblem,
    eps_vec: Sequence[float],
    lam_range: float = 2.0,
    resolution: int = 41,
    zoom_levels: int = 6,
) -> tuple[float, np.ndarray]:
    """Best dual value over a grid of multipliers (two clients), with zooming.

    For multipliers ``lam`` the classifier ``f = 1{c + sum_i lam_i v_i > 0}``
    is the closed-form family solving the penalised problem; the dual value
    ``sum_j max(0, c_j + lam @ V_j) + base + sum |lam_i| eps_i`` upper-bounds
    the LP optimum and equals it at the optimal multipliers.  Returns the
    accuracy bound and the maximising multipliers.
    """
    if problem.n_clients != 2:
        raise UnsupportedError("the multiplier grid search is implemented for two clients")
    c = problem.objective()
    V = problem.client_md()
    eps = np.asarray(eps_vec, dtype=float)
    base = problem.base_accuracy()

    def dual(l0: np.ndarray, l1: np.ndarray) -> np.ndarray:
        score = c[None, None, :] + l0[:, None, None] * V[0][None, None, :] + l1[None, :, None] * V[1][None, None, :]
        return base + np.maximum(score, 0.0).sum(axis=2) + np.abs(l0)[:, None] * eps[0] + np.abs(l1)[None, :] * eps[1]

    centre = np.zeros(2)
    half = lam_range
    best_val, best_lam = math.inf, centre
    for _ in range(zoom_levels):
        g0 = np.linspace(centre[0] - half, centre[0] + half, resolution)
        g1 = np.linspace(centre[1] - half, centre[1] + half, resolution)
        D = dual(g0, g1)
        k, l = np.unravel_index(np.argmin(D), D.shape)
        if D[k, l] < best_val:
            best_val, best_lam = float(D[k, l]), np.array([g0[k], g1[l]])
        centre = best_lam
        half = 2.0 * half / (resolution - 1)
    return best_val, best_lam


def solve_lft_fedavg(
    spec: PopulationSpec,
    eps_vec: Sequence[float],
    grid: np.ndarray | None = None,
    n_points: int = 256,
    problem: FiniteProblem | None = None,
) -> tuple[GridClassifier, TradeoffPoint]:
    """Most accurate single classifier meeting every client's local budget."""
    for c in spec.clients:
        _check_q(c.q)
    prob = problem if problem is not None else discretize(spec, grid, n_points)
    f = solve_finite_lp(prob, eps_vec)
    acc, md = prob.evaluate(f)
    return GridClassifier(prob.edges, f), TradeoffPoint("LFT+FedAvg", float(max(eps_vec)), acc, abs(md))


# ---------------------------------------------------------------------------
# Tradeoff curves
# ---------------------------------------------------------------------------


def _budget_levels(top: float, levels: int) -> np.ndarray:
    """Budgets in ``[0, top]`` packed quadratically towards zero."""
    k = np.linspace(0.0, 1.0, levels)
    return top * k * k


def achievable_points(
    spec: PopulationSpec, method: str, levels: int | None = None, n_points: int = 256
) -> list[TradeoffPoint]:
    """Every (accuracy, disparity) pair reached on a per-client budget grid."""
    if method not in METHODS:
        raise DomainError(f"unknown method {method!r}")
    I = spec.n_clients
    if method == "CFL":
        v = _pooled_view(spec)
        _check_q(v.q)
        eps = _budget_levels(abs(_view_g(v, 0.0)), levels or 101)
        return [solve_cfl(spec, e)[1] for e in eps]

    if method == "LFT+Ensemble":
        levels = levels or (61 if I <= 2 else 21 if I == 3 else 9)
        per_acc, per_md, per_eps = [], [], []
        for i, client in enumerate(spec.clients):
            _check_q(client.q)
            v = _client_view(client, spec.link)
            eps = _budget_levels(abs(_view_g(v, 0.0)), levels)
            accs, mds = [], []
            for e in eps:
                clf = ThresholdClassifier(_local_lambda(spec, i, e), client.q, spec.link)
                a, m = evaluate_thresholds(spec, threshold_members([(1.0, clf)]))
                accs.append(a)
                mds.append(m)
            per_acc.append(np.array(accs) / I)
            per_md.append(np.array(mds) / I)
            per_eps.append(eps)
        acc = _outer_sum(per_acc)
        md = _outer_sum(per_md)
        eps_max = _outer_max(per_eps)
        return [
            TradeoffPoint(method, float(e), float(a), float(abs(m)))
            for e, a, m in zip(eps_max.ravel(), acc.ravel(), md.ravel())
        ]

    levels = levels or (13 if I <= 2 else 6)
    prob = discretize(spec, None, n_points)
    erm = (prob.objective() > 0).astype(float)
    tops = np.abs(prob.client_md() @ erm)
    grids = [_budget_levels(t, levels) for t in tops]
    points = []
    for combo in np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, I):
        _, pt = solve_lft_fedavg(spec, combo, problem=prob)
        points.append(pt)
    return points


def _outer_sum(parts: list[np.ndarray]) -> np.ndarray:
    out = parts[0]
    for p in parts[1:]:
        out = np.add.outer(out, p)
    return out


def _outer_max(parts: list[np.ndarray]) -> np.ndarray:
    out = parts[0]
    for p in parts[1:]:
        out = np.maximum.outer(out, p)
    return out


def frontier(points: Sequence[TradeoffPoint], eps_grid: Sequence[float], method: str) -> list[TradeoffPoint]:
    """For each disparity budget, the best accuracy among points within it."""
    disp = np.array([p.dp_disp for p in points])
    acc = np.array([p.accuracy for p in points])
    out = []
    for e in eps_grid:
        ok = disp <= e + 1e-9
        if not ok.any():
            continue
        j = int(np.flatnonzero(ok)[np.argmax(acc[ok])])
        out.append(TradeoffPoint(method, float(e), float(acc[j]), float(disp[j])))
    return out


def tradeoff_curve(
    spec: PopulationSpec,
    method: str,
    eps_grid: Sequence[float],
    levels: int | None = None,
    n_points: int = 256,
) -> list[TradeoffPoint]:
    """Accuracy as a function of the global disparity budget, as a monotone frontier."""
    if method == "CFL":
        return [solve_cfl(spec, float(e))[1] for e in eps_grid]
    return frontier(achievable_points(spec, method, levels, n_points), eps_grid, method)


def min_disparity(
    spec: PopulationSpec, method: str, levels: int | None = None, n_points: int = 256
) -> float:
    """Smallest global disparity reachable by ``method`` over its budget grid."""
    if method == "CFL":
        return solve_cfl(spec, 0.0)[1].dp_disp
    return min(p.dp_disp for p in achievable_points(spec, method, levels, n_points))


def monte_carlo(
    spec: PopulationSpec, predictor, n: int = 1_000_000, seed: int = 0
) -> tuple[float, float, float, float]:
    """Sampled accuracy and mean difference with their standard errors.

    ``predictor(x, a)`` returns the probability of predicting 1.
    """
    rng = np.random.default_rng(seed)
    I = spec.n_clients
    i = rng.integers(0, I, size=n)
    q = np.array([c.q for c in spec.clients])[i]
    a = (rng.random(n) < q).astype(int)
    x = np.empty(n)
    for k, client in enumerate(spec.clients):
        for g, dist in enumerate((client.dist0, client.dist1)):
            sel = np.flatnonzero((i == k) & (a == g))
            comps = _components(dist)
            w = np.array([c[0] for c in comps])
            pick = rng.choice(len(comps), size=sel.size, p=w / w.sum())
            mu = np.array([c[1] for c in comps])[pick]
            sd = np.array([c[2] for c in comps])[pick]
            x[sel] = mu + sd * rng.standard_normal(sel.size)
    y = (rng.random(n) < spec.link.forward(x)).astype(float)
    p = np.asarray(predictor(x, a), dtype=float)
    correct = p * y + (1.0 - p) * (1.0 - y)
    acc = float(correct.mean())
    acc_se = float(correct.std(ddof=1) / math.sqrt(n))
    r0, r1 = p[a == 0], p[a == 1]
    md = float(r0.mean() - r1.mean())
    md_se = float(math.sqrt(r0.var(ddof=1) / r0.size + r1.var(ddof=1) / r1.size))
    return acc, acc_se, md, md_se
