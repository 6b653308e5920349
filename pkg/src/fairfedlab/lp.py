"""Small dense linear programs with box-bounded variables.

Solves

    min c @ x   s.t.   A_ub @ x <= b_ub,   0 <= x <= upper

with ``b_ub >= 0`` so that the all-slack basis is feasible and no phase one
is needed.  The method is the bounded-variable revised simplex: nonbasic
variables sit at either bound, and a ratio test may end in a bound flip
instead of a pivot.  Entering variables are priced by largest reduced cost
until ``bland_after`` consecutive degenerate pivots occur; from then on
Bland's smallest-index rule is used for entering and leaving choices, which
rules out cycling (``bland_after=0`` uses Bland throughout).  Problem sizes here are a few hundred columns and a
handful of rows, so the basis inverse is simply recomputed each iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverError


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    fun: float
    iterations: int
    slack: np.ndarray


def solve_bounded_lp(
    c: np.ndarray,
    A_ub: np.ndarray,
    b_ub: np.ndarray,
    upper: np.ndarray | float = 1.0,
    *,
    tol: float = 1e-11,
    max_iter: int | None = None,
    bland_after: int = 20,
) -> LPResult:
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A_ub, dtype=float))
    b = np.asarray(b_ub, dtype=float).ravel()
    m, n = A.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("inconsistent LP dimensions")
    if np.any(b < 0):
        raise ValueError("b_ub must be non-negative (all-slack start)")
    u = np.broadcast_to(np.asarray(upper, dtype=float), (n,)).copy()
    if np.any(u < 0):
        raise ValueError("upper bounds must be non-negative")

    A_full = np.hstack([A, np.eye(m)])
    c_full = np.concatenate([c, np.zeros(m)])
    u_full = np.concatenate([u, np.full(m, np.inf)])
    total = n + m
    basis = np.arange(n, total)
    is_basic = np.zeros(total, dtype=bool)
    is_basic[basis] = True
    at_upper = np.zeros(total, dtype=bool)
    limit = max_iter if max_iter is not None else 50 * total + 1000

    it = 0
    stalled = 0
    use_bland = bland_after <= 0
    while it < limit:
        B_inv = np.linalg.inv(A_full[:, basis])
        rhs = b - A_full[:, at_upper] @ u_full[at_upper]
        x_B = B_inv @ rhs
        y = c_full[basis] @ B_inv
        d = c_full - y @ A_full
        improving = ~is_basic & (((~at_upper) & (d < -tol)) | (at_upper & (d > tol)))
        candidates = np.flatnonzero(improving)
        if candidates.size and not use_bland:
            candidates = candidates[np.argsort(-np.abs(d[candidates]), kind="stable")]
        if candidates.size == 0:
            x = np.where(at_upper, u_full, 0.0)
            x[basis] = x_B
            x = np.clip(x, 0.0, u_full)
            return LPResult(x=x[:n], fun=float(c @ x[:n]), iterations=it, slack=x[n:])
        # Bound flips leave the basis and hence the reduced costs unchanged,
        # so the next candidate is simply the next one in the ordered list.
        for j in candidates:
            it += 1
            step_dir = -1.0 if at_upper[j] else 1.0
            delta = step_dir * (B_inv @ A_full[:, j])  # x_B(theta) = x_B - theta * delta
            theta = u_full[j]
            leave = -1
            leave_to_upper = False
            for r in range(m):
                if delta[r] > tol:
                    ratio = max(x_B[r], 0.0) / delta[r]
                    to_upper = False
                elif delta[r] < -tol and np.isfinite(u_full[basis[r]]):
                    ratio = max(u_full[basis[r]] - x_B[r], 0.0) / (-delta[r])
                    to_upper = True
                else:
                    continue
                if ratio < theta - tol or (
                    leave >= 0 and abs(ratio - theta) <= tol and basis[r] < basis[leave]
                ):
                    theta, leave, leave_to_upper = ratio, r, to_upper
            if not np.isfinite(theta):
                raise SolverError("LP is unbounded")
            if leave < 0:
                x_B = x_B - theta * delta
                at_upper[j] = not at_upper[j]
                continue
            stalled = stalled + 1 if theta <= tol else 0
            use_bland = use_bland or stalled >= bland_after
            out = basis[leave]
            is_basic[out] = False
            at_upper[out] = leave_to_upper
            basis[leave] = j
            is_basic[j] = True
            at_upper[j] = False
            break
    raise SolverError(f"simplex did not terminate within {limit} iterations")
