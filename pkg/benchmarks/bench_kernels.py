"""Compare the compiled kernels with the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints the median wall time of each kernel on a representative workload and
the ratio between backends. Outputs are checked for agreement first.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from fingernarx import _fallback
from fingernarx.narx import NarxConfig, NarxModel
from fingernarx.plant import random_actuation

try:
    from fingernarx import _kernels
except ImportError:
    _kernels = None


def workloads():
    rng = np.random.default_rng(0)
    frame = rng.integers(0, 256, (480, 640)).astype(np.uint8)
    mask = (rng.random((480, 640)) < 0.45).astype(np.uint8)
    pressures = np.ascontiguousarray(random_actuation(1200.0, seed=0).p)
    model = NarxModel.initialize(NarxConfig.for_mode("MC"))
    (w1, b1), (w2, b2), (w3, b3) = model.params.layers
    u = np.ascontiguousarray(rng.random((3000, 4)))
    window = rng.random((3, 3))
    return {
        "median_filter 480x640 3x3": lambda k: k.median_filter(frame, 3),
        "label_components 480x640": lambda k: k.label_components(mask),
        "integrate_plant 30000 steps": lambda k: k.integrate_plant(pressures, 0.04, 0.15, 0.2),
        "rollout MC 2997 steps": lambda k: k.rollout(w1, b1, w2, b2, w3, b3, window, u[:2], u[2:2999]),
    }


def _time(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def _agree(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_agree(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.allclose(a, b, rtol=0, atol=1e-10)
    return a == b


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':<30}{'fallback ms':>13}{'compiled ms':>13}{'ratio':>8}")
    for name, job in workloads().items():
        slow = _time(lambda: job(_fallback), args.repeat)
        if _kernels is None:
            print(f"{name:<30}{1e3 * slow:>13.2f}{'-':>13}{'-':>8}")
            continue
        if not _agree(job(_fallback), job(_kernels)):
            print(f"{name:<30} outputs differ between backends")
            return 1
        fast = _time(lambda: job(_kernels), args.repeat)
        print(f"{name:<30}{1e3 * slow:>13.2f}{1e3 * fast:>13.2f}{slow / fast:>8.1f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
