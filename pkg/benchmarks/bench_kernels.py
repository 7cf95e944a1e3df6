"""Time the compiled and pure-Python symbol-scan kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--repeats 20] [--shapes 100x3,400x6]

Each shape is ``NxL``. For every shape both kernels run the same number of
full symbol scans from the same starting state; the script reports the
median time per scan, the speed-up, and whether the two kernels ended in the
same state. A final row times one whole chain (400 sweeps, N=100, L=3), where
the channel and noise updates dilute the kernel's share.
"""

import argparse
import statistics
import time

import numpy as np

from ldamc import _backend
from ldamc.channel_sim import rayleigh_taps, transmit
from ldamc.constellations import KINDS, build_set
from ldamc.gibbs_core import ChainConfig, Priors, initial_state, run_chain, scan_symbols
from ldamc.rand_dists import rng_stream


def _state(N, L, seed=0):
    cset = build_set(KINDS)
    rng = rng_stream(seed)
    obs = transmit(cset.members[2], rayleigh_taps(np.linspace(0, -5, L), rng), 0.05, N, rng)
    return obs, initial_state(obs, cset, Priors.uniform(3), "ld", rng_stream(seed, 1))


def time_kernel(kernel, obs, base, repeats):
    state = base.copy()
    rng = rng_stream(1)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        scan_symbols(state, obs, 1.0, rng, kernel=kernel)
        times.append(time.perf_counter() - t0)
    return statistics.median(times), state


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--shapes", default="20x1,100x3,400x6")
    args = ap.parse_args(argv)

    if _backend.scan_symbols_c is None:
        print("compiled kernel not built; only the Python kernel is timed")
    print(f"{'N':>5} {'L':>3} {'python ms':>10} {'cython ms':>10} {'speed-up':>9}  same state")
    for shape in args.shapes.split(","):
        N, L = (int(x) for x in shape.lower().split("x"))
        obs, base = _state(N, L)
        t_py, s_py = time_kernel(_backend.scan_symbols_py, obs, base, args.repeats)
        if _backend.scan_symbols_c is None:
            print(f"{N:>5} {L:>3} {1e3 * t_py:>10.3f} {'-':>10} {'-':>9}")
            continue
        t_c, s_c = time_kernel(_backend.scan_symbols_c, obs, base, args.repeats)
        same = np.array_equal(s_py.point_idx, s_c.point_idx) and np.array_equal(s_py.labels, s_c.labels)
        print(f"{N:>5} {L:>3} {1e3 * t_py:>10.3f} {1e3 * t_c:>10.3f} {t_py / t_c:>8.1f}x  {same}")

    obs, _ = _state(100, 3)
    cset = build_set(KINDS)
    chain = {}
    kernels = [("python", _backend.scan_symbols_py), ("cython", _backend.scan_symbols_c)]
    for name, kernel in kernels:
        if kernel is None:
            continue
        saved = _backend.scan_symbols
        _backend.scan_symbols = kernel
        try:
            t0 = time.perf_counter()
            run_chain(obs, cset, Priors.uniform(3), ChainConfig(300, 100), rng_stream(2))
            chain[name] = time.perf_counter() - t0
        finally:
            _backend.scan_symbols = saved
    print("whole chain: " + ", ".join(f"{k} {v:.2f}s" for k, v in chain.items()))


if __name__ == "__main__":
    main()
