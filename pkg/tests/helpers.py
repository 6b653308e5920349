"""Shared oracles for the property and acceptance tests."""

import numpy as np

from fairfedlab.data import stack
from fairfedlab.fairbatch import (
    GroupCounts,
    GroupLossReport,
    compute_statistics,
    direction,
    init_lambda,
    outer_objective,
    per_sample_weights,
)
from fairfedlab.models import fit_logistic_newton, per_sample_loss


def toy_problem(seed: int, n: int = 40, clients: int = 3):
    """Small two-group dataset with group-dependent features and labels."""
    rng = np.random.default_rng(seed)
    a = np.tile([0, 1], n // 2)
    rng.shuffle(a)
    y = (rng.random(n) < np.where(a == 1, 0.65, 0.35)).astype(int)
    # make sure every (y, a) cell is populated
    y[:4] = [0, 1, 0, 1]
    a[:4] = [0, 0, 1, 1]
    X = np.column_stack([rng.normal(2.0 * y - 1.0 + 0.8 * a, 1.0), a])
    client = np.arange(n) % clients
    return X, y, a, client


def descent_derivatives(notion: str, seed: int = 0, n_lambda: int = 20, h: float = 1e-4, reg: float = 0.1):
    """Central-difference slope of the outer objective along the update direction.

    The inner problem is l2-regularised weighted logistic regression, solved
    to machine precision by Newton's method, so the outer objective is a
    smooth function of the weights.
    """
    X, y, a, client = toy_problem(seed)
    cl = client if notion == "CP" else None
    counts = GroupCounts.from_arrays(y, a, cl)
    lam0 = init_lambda(notion, counts)
    fs = lam0.feasible
    rng = np.random.default_rng([seed, 99])

    def stats(values):
        lam = lam0.with_values(values)
        w = per_sample_weights(lam, counts, y, a, cl)
        params = fit_logistic_newton(X, y, w, reg=reg)
        rep = GroupLossReport.from_losses(per_sample_loss(params, X, y), y, a, counts, cl)
        return compute_statistics(notion, rep, counts)

    slopes = []
    while len(slopes) < n_lambda:
        # interior point: shrink a random box point towards the caps
        v = fs.project(rng.uniform(0.05, 0.95) * rng.uniform(0.1, 1.0, fs.upper.shape) * fs.upper)
        if not fs.contains(v - 2 * h) or not fs.contains(v + 2 * h * np.sign(rng.normal(size=v.shape))):
            continue
        mu = direction(stats(v))
        norm = np.linalg.norm(mu)
        if norm == 0.0:
            continue
        u = mu / norm
        if not (fs.contains(v + h * u) and fs.contains(v - h * u)):
            continue
        up = outer_objective(stats(v + h * u))
        dn = outer_objective(stats(v - h * u))
        slopes.append((up - dn) / (2 * h))
    return np.array(slopes)


def pooled_statistics(notion: str, parts, params):
    """Global statistics computed directly on the pooled client data."""
    pooled = stack(parts)
    cl = pooled.client if notion == "CP" else None
    counts = GroupCounts.from_arrays(pooled.y, pooled.a, cl)
    rep = GroupLossReport.from_losses(per_sample_loss(params, pooled.X, pooled.y), pooled.y, pooled.a, counts, cl)
    return compute_statistics(notion, rep, counts)
