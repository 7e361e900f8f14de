"""Benchmark the compiled splat kernels against the pure-python fallback.

Run:  python3 benchmarks/bench_kernels.py [n_atoms]
"""

import sys
import time

import numpy as np

from cryoguide._kernels import _splat_py

try:
    from cryoguide._kernels import _splat_cy
except ImportError:
    _splat_cy = None


def timeit(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    n_atoms = int(sys.argv[1]) if len(sys.argv) > 1 else 500
    rng = np.random.default_rng(0)
    coords = rng.uniform(5.0, 55.0, (n_atoms, 3))
    amps = rng.uniform(6.0, 8.0, n_atoms)
    shape = (64, 64, 64)
    origin = np.zeros(3)
    voxel, sigma = 1.0, 0.45
    field = rng.standard_normal(shape)

    backends = [("python", _splat_py)]
    if _splat_cy is not None:
        backends.append(("cython", _splat_cy))
    else:
        print("compiled kernels unavailable; benchmarking fallback only")

    print(f"{n_atoms} atoms, grid {shape}, sigma {sigma} A")
    results = {}
    for name, mod in backends:
        t_splat, vol = timeit(mod.splat, coords, amps, shape, origin, voxel, sigma)
        t_grad, grad = timeit(mod.splat_grad, coords, amps, field, origin,
                              voxel, sigma)
        results[name] = (t_splat, t_grad, vol, grad)
        print(f"  {name:>7}: splat {t_splat * 1e3:8.2f} ms   "
              f"splat_grad {t_grad * 1e3:8.2f} ms")

    if len(results) == 2:
        py, cy = results["python"], results["cython"]
        assert np.allclose(py[2], cy[2], atol=1e-10)
        assert np.allclose(py[3], cy[3], atol=1e-10)
        print(f"  speedup: splat x{py[0] / cy[0]:.1f}, "
              f"splat_grad x{py[1] / cy[1]:.1f} (outputs agree)")


if __name__ == "__main__":
    main()
