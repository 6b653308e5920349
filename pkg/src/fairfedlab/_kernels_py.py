"""NumPy implementation of the SGD loops, used when the compiled module is absent."""

from __future__ import annotations

import numpy as np
from scipy.special import expit


def sgd_logistic(theta, X, y, w, perms, lr, batch):
    n, d = X.shape
    if batch <= 0 or batch > n:
        batch = n
    for perm in perms:
        for s in range(0, n, batch):
            idx = perm[s : s + batch]
            xb = X[idx]
            r = w[idx] * (expit(xb @ theta[:d] + theta[d]) - y[idx])
            m = idx.size
            theta[:d] -= lr * ((r @ xb) / m)
            theta[d] -= lr * (r.sum() / m)


def sgd_mlp(theta, X, y, w, perms, lr, batch, hidden):
    n, d = X.shape
    H = hidden
    off_c, off_v, off_b = H * d, H * d + H, H * d + 2 * H
    if batch <= 0 or batch > n:
        batch = n
    for perm in perms:
        for s in range(0, n, batch):
            idx = perm[s : s + batch]
            xb = X[idx]
            W = theta[:off_c].reshape(H, d)
            pre = xb @ W.T + theta[off_c:off_v]
            act = np.maximum(pre, 0.0)
            r = w[idx] * (expit(act @ theta[off_v:off_b] + theta[off_b]) - y[idx])
            m = idx.size
            dh = (r[:, None] * theta[off_v:off_b][None, :]) * (pre > 0)
            g = np.empty_like(theta)
            g[:off_c] = (dh.T @ xb).ravel()
            g[off_c:off_v] = dh.sum(axis=0)
            g[off_v:off_b] = r @ act
            g[off_b] = r.sum()
            theta -= lr * (g / m)
