"""Compiled vs pure-Python kernels: random walks and 8-neighbour Dijkstra.

    python benchmarks/bench_kernels.py [--h 2^-6] [--walks 20000] [--repeat 3]

Both backends must return identical results; the script checks this before
reporting timings.
"""

import argparse
import time

import numpy as np

from mazpot import kernels
from mazpot.cli import _h
from mazpot.domain import gen_domain
from mazpot.mc_oracle import transition_table


def best_of(fn, repeat):
    ts = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        ts.append(time.perf_counter() - t)
    return min(ts), out


def bench_walk(dom, n, repeat):
    nxt = transition_table(dom)
    start = dom.open_cell_near(0.5, 0.5)

    def run():
        ev = np.empty(n, np.int64)
        st = np.empty(n, np.int64)
        kernels.walk(nxt, np.full(n, start, np.int64), np.uint64(12345), 10**7, ev, st)
        return ev, st

    return best_of(run, repeat)


def bench_dijkstra(dom, repeat):
    spec = dom.spec
    al = np.ascontiguousarray(dom.open_flat, dtype=np.uint8)
    a = dom.open_cell_near(0.1, 0.1)
    b = dom.open_cell_near(0.9, 0.9)

    def run():
        dist = np.empty(spec.size)
        pred = np.empty(spec.size, np.int64)
        kernels.dijkstra8(al, spec.nx, spec.ny, spec.h, a, b, dist, pred)
        return dist[b]

    return best_of(run, repeat)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--h", type=_h, default=2.0**-6)
    ap.add_argument("--walks", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    dom = gen_domain("slit_disc", args.h)
    rows = {}
    for backend in ("cython", "python"):
        try:
            kernels.use(backend)
        except ImportError:
            print(f"{backend}: not available")
            continue
        tw, (ev, st) = bench_walk(dom, args.walks, args.repeat)
        td, d = bench_dijkstra(dom, args.repeat)
        rows[backend] = (tw, td, ev, st, d)
        print(f"{backend:7s} walk {tw:8.3f} s ({st.sum() / tw:.3g} steps/s)   dijkstra {td:8.4f} s")
    if len(rows) == 2:
        c, p = rows["cython"], rows["python"]
        same = np.array_equal(c[2], p[2]) and np.array_equal(c[3], p[3]) and c[4] == p[4]
        print(f"identical results: {same}")
        print(f"speedup walk x{p[0] / c[0]:.1f}  dijkstra x{p[1] / c[1]:.1f}")


if __name__ == "__main__":
    main()
