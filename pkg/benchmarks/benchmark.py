"""Compiled vs NumPy SGD kernels on client-sized workloads.

    python benchmarks/benchmark.py [--repeat 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fairfedlab import _kernels_py
from fairfedlab._backend import compiled
from fairfedlab.data import SyntheticSpec, generate_synthetic
from fairfedlab.models import TrainConfig, init_params, sgd_train


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--n", type=int, default=1200, help="samples per client")
    args = parser.parse_args()

    ds = generate_synthetic(SyntheticSpec(n=args.n, seed=0))
    w = np.ones(len(ds))
    cfg = TrainConfig(learning_rate=0.01)
    print(f"{'model':<10}{'backend':<10}{'seconds':>10}{'speedup':>10}{'max |diff|':>14}")
    for kind in ("logistic", "mlp-4"):
        p0 = init_params(kind, ds.d, 0)
        ref = sgd_train(p0, ds.X, ds.y, w, cfg, seed=1, backend=_kernels_py)
        t_py = best_of(lambda: sgd_train(p0, ds.X, ds.y, w, cfg, seed=1, backend=_kernels_py), args.repeat)
        print(f"{kind:<10}{'python':<10}{t_py:>10.4f}{1.0:>10.1f}{0.0:>14.2e}")
        if compiled is None:
            print(f"{kind:<10}{'compiled':<10}{'not built':>10}")
            continue
        out = sgd_train(p0, ds.X, ds.y, w, cfg, seed=1, backend=compiled)
        t_c = best_of(lambda: sgd_train(p0, ds.X, ds.y, w, cfg, seed=1, backend=compiled), args.repeat)
        diff = float(np.max(np.abs(out.theta - ref.theta)))
        print(f"{kind:<10}{'compiled':<10}{t_c:>10.4f}{t_py / t_c:>10.1f}{diff:>14.2e}")


if __name__ == "__main__":
    main()
