"""Micro-benchmark of the two kernel backends.

Times forward and forward+backward passes of the cell on a training-sized
workload for the compiled extension and the numpy fallback, and prints the
per-sequence cost and speedup.  Run with python -m drnn.bench.
"""

import sys
import time

import numpy as np

from . import kernels_py
from .cell import init_cell_params
from .numerics import RandomSource


def _load_compiled():
    try:
        from . import _kernel
        return _kernel
    except ImportError:
        return None


def time_backend(backend, params, X, dH, repeats):
    # warm up once so import/alloc costs stay out of the numbers
    cache = backend.forward(params, X)
    backend.backward(params, X, cache, dH, False)

    start = time.perf_counter()
    for _ in range(repeats):
        backend.forward(params, X)
    fwd = (time.perf_counter() - start) / repeats

    start = time.perf_counter()
    for _ in range(repeats):
        cache = backend.forward(params, X)
        backend.backward(params, X, cache, dH, False)
    both = (time.perf_counter() - start) / repeats
    return fwd, both


def main(argv=None):
    T, m, n, order = 40, 8, 16, 2
    repeats = 200
    if argv:
        repeats = int(argv[0])
    rng = RandomSource(7)
    params = init_cell_params(order, m, n, rng.derive("bench-params"))
    X = rng.uniform(-1.0, 1.0, T * m).reshape(T, m)
    dH = rng.uniform(-0.1, 0.1, T * n).reshape(T, n)

    rows = [("python", kernels_py)]
    compiled = _load_compiled()
    if compiled is not None:
        rows.append(("compiled", compiled))
    else:
        print("compiled extension not built; timing the fallback only")

    print(f"workload: T={T} input_dim={m} state_dim={n} order={order}, {repeats} repeats")
    results = {}
    for name, backend in rows:
        fwd, both = time_backend(backend, params, X, dH, repeats)
        results[name] = both
        print(f"  {name:9s} forward {fwd * 1e3:8.3f} ms   forward+backward {both * 1e3:8.3f} ms")
    if "compiled" in results:
        print(f"  speedup (forward+backward): {results['python'] / results['compiled']:.1f}x")

    # the two backends must agree on the math they race on
    cache_py = kernels_py.forward(params, X)
    if compiled is not None:
        cache_c = compiled.forward(params, X)
        worst = max(
            float(np.abs(cache_py[k] - cache_c[k]).max()) for k in cache_py
        )
        print(f"  max |python - compiled| over all cached signals: {worst:.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
