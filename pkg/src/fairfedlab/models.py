"""Logistic regression and a 4-unit ReLU network with hand-written gradients.

Parameters live in one flat float64 vector:

* ``logistic``: ``[w (d), b]``
* ``mlp-4``:    ``[W (4 x d, row-major), c (4), v (4), b]``

Outputs are sigmoid probabilities clipped to ``[1e-7, 1 - 1e-7]`` before the
cross-entropy is taken.  Gradients use the logit form ``p - y``, which is
the exact derivative wherever the clip is inactive.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._backend import kernels
from .errors import DimensionError, DomainError

KINDS = ("logistic", "mlp-4")
HIDDEN = 4
CLIP = 1e-7
_TAGS = {"logistic": b"LOGR", "mlp-4": b"MLP4"}
_HEADER = struct.Struct("<4sIQ")


def n_params(kind: str, d: int) -> int:
    if kind == "logistic":
        return d + 1
    if kind == "mlp-4":
        return HIDDEN * (d + 1) + HIDDEN + 1
    raise DomainError(f"unknown model kind {kind!r}")


@dataclass(frozen=True)
class ModelParams:
    kind: str
    d: int
    theta: np.ndarray

    def __post_init__(self) -> None:
        theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        if theta.shape != (n_params(self.kind, self.d),):
            raise DimensionError(f"{self.kind} with d={self.d} needs {n_params(self.kind, self.d)} parameters")
        if not np.all(np.isfinite(theta)):
            raise DomainError("parameters must be finite")
        object.__setattr__(self, "theta", theta)

    def copy(self) -> "ModelParams":
        return ModelParams(self.kind, self.d, self.theta.copy())

    def to_bytes(self) -> bytes:
        return _HEADER.pack(_TAGS[self.kind], self.d, self.theta.size) + self.theta.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ModelParams":
        tag, d, length = _HEADER.unpack_from(blob)
        kind = {v: k for k, v in _TAGS.items()}.get(tag)
        if kind is None:
            raise DomainError(f"unknown model tag {tag!r}")
        body = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
        if body.size != length:
            raise DimensionError("checkpoint length does not match its header")
        return cls(kind, int(d), body.astype(np.float64))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.005
    batch_size: int = 128
    local_epochs: int = 30
    rounds: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.local_epochs < 0 or self.rounds < 0:
            raise DomainError("training hyperparameters must be positive")


def init_params(kind: str, d: int, seed: int | np.random.Generator = 0) -> ModelParams:
    """Uniform in ``+-1/sqrt(fan_in)`` per layer."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if kind == "logistic":
        bound = 1.0 / np.sqrt(d)
        return ModelParams(kind, d, rng.uniform(-bound, bound, d + 1))
    if kind == "mlp-4":
        b1 = 1.0 / np.sqrt(d)
        b2 = 1.0 / np.sqrt(HIDDEN)
        first = rng.uniform(-b1, b1, HIDDEN * d + HIDDEN)
        second = rng.uniform(-b2, b2, HIDDEN + 1)
        return ModelParams(kind, d, np.concatenate([first, second]))
    raise DomainError(f"unknown model kind {kind!r}")


def zeros(kind: str, d: int) -> ModelParams:
    return ModelParams(kind, d, np.zeros(n_params(kind, d)))


def _unpack_mlp(theta: np.ndarray, d: int):
    oc, ov, ob = HIDDEN * d, HIDDEN * d + HIDDEN, HIDDEN * d + 2 * HIDDEN
    return theta[:oc].reshape(HIDDEN, d), theta[oc:ov], theta[ov:ob], theta[ob]


def _check_X(params: ModelParams, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != params.d:
        raise DimensionError(f"expected features of width {params.d}, got shape {X.shape}")
    return X


def logits(params: ModelParams, X) -> np.ndarray:
    X = _check_X(params, X)
    t = params.theta
    if params.kind == "logistic":
        return X @ t[: params.d] + t[params.d]
    W, c, v, b = _unpack_mlp(t, params.d)
    return np.maximum(X @ W.T + c, 0.0) @ v + b


def forward(params: ModelParams, X) -> np.ndarray:
    """Clipped probability of the positive class; a 1-D input yields a scalar."""
    single = np.ndim(X) == 1
    p = np.clip(expit(logits(params, X)), CLIP, 1.0 - CLIP)
    return float(p[0]) if single else p


def per_sample_loss(params: ModelParams, X, y) -> np.ndarray:
    p = np.clip(expit(logits(params, X)), CLIP, 1.0 - CLIP)
    y = np.asarray(y, dtype=float)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


def weighted_loss(params: ModelParams, X, y, weights) -> float:
    return float(np.asarray(weights, dtype=float) @ per_sample_loss(params, X, y))


def weighted_grad(params: ModelParams, X, y, weights) -> np.ndarray:
    """Gradient of ``sum_i weights_i * BCE(y_i, forward(x_i))``."""
    X = _check_X(params, X)
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    if y.shape != (X.shape[0],) or w.shape != (X.shape[0],):
        raise DimensionError("labels and weights need one entry per sample")
    t = params.theta
    if params.kind == "logistic":
        r = w * (expit(X @ t[: params.d] + t[params.d]) - y)
        return np.concatenate([r @ X, [r.sum()]])
    W, c, v, b = _unpack_mlp(t, params.d)
    pre = X @ W.T + c
    act = np.maximum(pre, 0.0)
    r = w * (expit(act @ v + b) - y)
    dh = (r[:, None] * v[None, :]) * (pre > 0)
    return np.concatenate([(dh.T @ X).ravel(), dh.sum(axis=0), r @ act, [r.sum()]])


def epoch_permutations(n: int, epochs: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if epochs == 0:
        return np.zeros((0, n), dtype=np.int64)
    return np.stack([rng.permutation(n) for _ in range(epochs)]).astype(np.int64)


def sgd_train(
    params: ModelParams,
    X,
    y,
    weights,
    config: TrainConfig,
    seed=None,
    epochs: int | None = None,
    backend=None,
) -> ModelParams:
    """Mini-batch SGD on the weighted mean loss; deterministic for a given seed.

    Each step moves along ``mean_{i in batch} w_i grad BCE_i``.  ``seed``
    defaults to ``config.seed`` and may be anything accepted by
    ``numpy.random.default_rng``.
    """
    X = np.ascontiguousarray(_check_X(params, X))
    y = np.ascontiguousarray(y, dtype=np.float64)
    w = np.ascontiguousarray(weights, dtype=np.float64)
    if y.shape != (X.shape[0],) or w.shape != (X.shape[0],):
        raise DimensionError("labels and weights need one entry per sample")
    n_epochs = config.local_epochs if epochs is None else epochs
    theta = params.theta.copy()
    if n_epochs == 0 or X.shape[0] == 0:
        return ModelParams(params.kind, params.d, theta)
    perms = epoch_permutations(X.shape[0], n_epochs, config.seed if seed is None else seed)
    k = backend or kernels
    if params.kind == "logistic":
        k.sgd_logistic(theta, X, y, w, perms, float(config.learning_rate), int(config.batch_size))
    else:
        k.sgd_mlp(theta, X, y, w, perms, float(config.learning_rate), int(config.batch_size), HIDDEN)
    return ModelParams(params.kind, params.d, theta)


def fit_logistic_newton(
    X, y, weights, reg: float = 1e-2, tol: float = 1e-13, max_iter: int = 100, init: np.ndarray | None = None
) -> ModelParams:
    """Minimiser of ``mean(w * BCE) + reg/2 ||theta||^2`` by damped Newton steps."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    n, d = X.shape
    Xb = np.hstack([X, np.ones((n, 1))])
    theta = np.zeros(d + 1) if init is None else np.array(init, dtype=float)

    def objective(th):
        z = Xb @ th
        return float(w @ (np.logaddexp(0.0, z) - y * z) / n + 0.5 * reg * th @ th)

    for _ in range(max_iter):
        p = expit(Xb @ theta)
        grad = Xb.T @ (w * (p - y)) / n + reg * theta
        if np.linalg.norm(grad) <= tol:
            break
        H = (Xb * (w * p * (1.0 - p))[:, None]).T @ Xb / n + reg * np.eye(d + 1)
        step = np.linalg.solve(H, grad)
        t, f0 = 1.0, objective(theta)
        while objective(theta - t * step) > f0 - 1e-4 * t * grad @ step and t > 1e-10:
            t *= 0.5
        theta = theta - t * step
    return ModelParams("logistic", d, theta)
