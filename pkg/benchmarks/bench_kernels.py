"""Compiled versus pure-Python kernels on the two hot loops.

    python3 benchmarks/bench_kernels.py [--steps N] [--draws N] [--repeat K]

Both backends must produce identical bits; the script checks that before
timing. Prints one line per (kernel, backend) with the best wall time.
"""

import argparse
import time

import numpy as np

from perpex import kernels
from perpex.mdist import Beta


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def path_case(mod, m):
    out = np.empty_like(m)
    return lambda: mod.path_fill(m, 1.0, 1.0, out)


def series_case(mod, m, draws):
    def run():
        out = np.zeros(draws)
        tr = np.zeros(draws, dtype=np.uint8)
        mod.series_fill(m, 0, 1.0, 1.0, 0, 1.0, 1e-12, 10**6, out, tr, 0)
        return out

    return run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=10**6, help="path steps")
    ap.add_argument("--draws", type=int, default=10**4, help="stationary draws")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    spec = Beta(1, 1)
    m_path = spec.sample(rng, args.steps)
    # about 30 multipliers per uniform-law draw at tolerance 1e-12; leave slack
    m_series = spec.sample(rng, 60 * args.draws)

    names = [n for n in ("compiled", "python") if n in kernels.BACKENDS]
    outs = {}
    for n in names:
        mod = kernels.get(n)
        a = np.empty_like(m_path)
        mod.path_fill(m_path, 1.0, 1.0, a)
        outs[n] = (a.tobytes(), series_case(mod, m_series, args.draws)().tobytes())
    if len(set(outs.values())) != 1:
        raise SystemExit("backends disagree")

    rows = []
    for n in names:
        mod = kernels.get(n)
        rows.append(("path_fill", n, args.steps, best_of(path_case(mod, m_path), args.repeat)))
        rows.append(("series_fill", n, args.draws, best_of(series_case(mod, m_series, args.draws), args.repeat)))
    base = {k: t for k, n, _, t in rows if n == "python"}
    print(f"{'kernel':<12} {'backend':<9} {'items':>9} {'seconds':>9} {'per item':>10} {'speedup':>8}")
    for k, n, items, t in rows:
        print(f"{k:<12} {n:<9} {items:>9} {t:>9.4f} {t / items * 1e9:>8.1f}ns {base[k] / t:>7.1f}x")


if __name__ == "__main__":
    main()
