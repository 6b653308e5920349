"""Accuracy and group-fairness metrics, plus replication summaries."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Mapping

import numpy as np

from .data import Dataset
from .errors import DomainError, MissingGroupError
from .models import CLIP, ModelParams, forward

DEFAULT_SEEDS = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    dp_disp_multi: float
    dp_disp_binary: float
    eo_disp: float
    eod_disp: float
    cp_disp: float
    group_rates: tuple[float, ...]
    client_losses: tuple[float, ...]
    dp_disp_hard: float = float("nan")  # max deviation of thresholded-label rates

    def disparity(self, notion: str = "DP") -> float:
        """Headline disparity; for DP the max deviation from the overall rate."""
        if notion == "DP":
            return self.dp_disp_multi
        return {"EO": self.eo_disp, "EOD": self.eod_disp, "CP": self.cp_disp}[notion]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["group_rates"] = list(self.group_rates)
        d["client_losses"] = list(self.client_losses)
        return d


def predict_proba(predictor, X, a) -> np.ndarray:
    if isinstance(predictor, ModelParams):
        return np.atleast_1d(forward(predictor, X))
    return np.asarray(predictor(X, a), dtype=float)


def _max_dev(p: np.ndarray, a: np.ndarray, groups: int) -> float:
    if p.size == 0:
        return 0.0
    overall = p.mean()
    return max(abs(p[a == g].mean() - overall) for g in range(groups) if np.any(a == g))


def evaluate(predictor, ds: Dataset, n_groups: int | None = None) -> EvalReport:
    """Metrics of a probability-valued predictor ``f(X, a)`` or a ``ModelParams``.

    Positive rates are mean predicted probabilities, i.e. the expected rate of
    the randomised classifier; accuracy thresholds at one half.
    """
    A = n_groups or ds.n_groups
    if A < 2:
        raise MissingGroupError("evaluation needs at least two sensitive groups")
    present = np.bincount(ds.a, minlength=A)
    if np.any(present == 0):
        raise MissingGroupError(f"group(s) {np.flatnonzero(present == 0).tolist()} absent from evaluation data")
    p = predict_proba(predictor, ds.X, ds.a)
    if p.shape != ds.y.shape:
        raise DomainError("predictor must return one probability per sample")
    y, a = ds.y, ds.a
    accuracy = float(np.mean((p >= 0.5) == (y == 1)))
    rates = np.array([p[a == g].mean() for g in range(A)])
    dp_multi = float(np.max(np.abs(rates - p.mean())))
    dp_binary = float(rates.max() - rates.min())
    yhat = (p >= 0.5).astype(float)
    hard = np.array([yhat[a == g].mean() for g in range(A)])
    dp_hard = float(np.max(np.abs(hard - yhat.mean())))
    pos = y == 1
    eo = _max_dev(p[pos], a[pos], A)
    eod = max(eo, _max_dev(p[~pos], a[~pos], A))
    losses: tuple[float, ...] = ()
    cp = 0.0
    if ds.client is not None:
        pc = np.clip(p, CLIP, 1.0 - CLIP)
        bce = -(y * np.log(pc) + (1 - y) * np.log1p(-pc))
        I = int(ds.client.max()) + 1
        sums = np.bincount(ds.client, weights=bce, minlength=I)
        cnt = np.bincount(ds.client, minlength=I)
        cl = sums[cnt > 0] / cnt[cnt > 0]
        losses = tuple(float(v) for v in cl)
        cp = float(cl.max() - cl.min())
    return EvalReport(
        accuracy=accuracy,
        dp_disp_multi=dp_multi,
        dp_disp_binary=dp_binary,
        eo_disp=float(eo),
        eod_disp=float(eod),
        cp_disp=cp,
        group_rates=tuple(float(r) for r in rates),
        client_losses=losses,
        dp_disp_hard=dp_hard,
    )


@dataclass(frozen=True)
class Summary:
    mean: float
    std: float
    n: int

    def __str__(self) -> str:
        return format_mean_std(self.mean, self.std)


def summarize(values: Iterable[float]) -> Summary:
    v = np.asarray(list(values), dtype=float)
    if v.size < 2:
        raise DomainError("a summary needs at least two replications")
    return Summary(float(v.mean()), float(v.std(ddof=1)), int(v.size))


def replicate(
    experiment: Callable[[int], Mapping[str, float] | EvalReport],
    seeds: Iterable[int] = DEFAULT_SEEDS,
) -> dict[str, Summary]:
    """Run ``experiment(seed)`` per seed; sample mean and std of every scalar metric."""
    seeds = list(seeds)
    if len(seeds) < 2:
        raise DomainError("replicate needs at least two seeds")
    rows = []
    for s in seeds:
        out = experiment(s)
        if isinstance(out, EvalReport):
            out = out.to_dict()
        rows.append({k: float(v) for k, v in out.items() if np.isscalar(v)})
    keys = [k for k in rows[0] if all(k in r for r in rows)]
    return {k: summarize(r[k] for r in rows) for k in keys}


def _short(x: float, decimals: int) -> str:
    s = f"{x:.{decimals}f}"
    if s.startswith("0."):
        return s[1:]
    if s.startswith("-0."):
        return "-" + s[2:]
    return s


def format_mean_std(mean: float, std: float, decimals: int = 3) -> str:
    """Table style ``.725±.012``; the leading zero is dropped below one."""
    return f"{_short(mean, decimals)}±{_short(std, decimals)}"
