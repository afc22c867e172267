"""Pure numpy/scipy versions of the compiled kernels (same results)."""

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def grid_graph8(allowed, nx, ny, h):
    """CSR adjacency of allowed cells with 8 moves and no corner cutting."""
    a = np.asarray(allowed, dtype=bool).reshape(nx, ny)
    idx = np.arange(nx * ny).reshape(nx, ny)
    rows, cols, vals = [], [], []

    def add(src_sl, dst_sl, extra, w):
        m = a[src_sl] & a[dst_sl]
        for e in extra:
            m &= a[e]
        rows.append(idx[src_sl][m])
        cols.append(idx[dst_sl][m])
        vals.append(np.full(m.sum(), w))

    s = slice(None)
    add((slice(0, -1), s), (slice(1, None), s), [], h)
    add((s, slice(0, -1)), (s, slice(1, None)), [], h)
    d = h * np.sqrt(2.0)
    add((slice(0, -1), slice(0, -1)), (slice(1, None), slice(1, None)),
        [(slice(1, None), slice(0, -1)), (slice(0, -1), slice(1, None))], d)
    add((slice(0, -1), slice(1, None)), (slice(1, None), slice(0, -1)),
        [(slice(1, None), slice(1, None)), (slice(0, -1), slice(0, -1))], d)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    n = nx * ny
    return csr_matrix((np.concatenate([v, v]), (np.concatenate([r, c]), np.concatenate([c, r]))), shape=(n, n))


def dijkstra8(allowed, nx, ny, h, src, tgt, dist, pred):
    allowed = np.asarray(allowed, dtype=bool)
    if not allowed[src]:
        dist[:] = np.inf
        pred[:] = -1
        return
    g = grid_graph8(allowed, nx, ny, h)
    dd, pp = dijkstra(g, directed=False, indices=int(src), return_predecessors=True)
    dist[:] = dd
    pred[:] = np.where(pp < 0, -1, pp)


def walk(nxt, starts, seed, max_steps, event, steps, chunk=32):
    """Vectorized over walkers; draw-for-draw identical to the compiled walk."""
    nxt = np.asarray(nxt)
    starts = np.asarray(starts, dtype=np.int64)
    nw = len(starts)
    with np.errstate(over="ignore"):
        state = mix64(np.uint64(seed) + mix64(np.arange(nw, dtype=np.uint64) + GAMMA))
    pos = starts.copy()
    alive = np.arange(nw)
    event[:] = -1
    t = 0
    while len(alive) and t < max_steps:
        with np.errstate(over="ignore"):
            state[alive] = state[alive] + GAMMA
        z = mix64(state[alive])
        p = pos[alive]
        keep = np.ones(len(alive), dtype=bool)
        for sub in range(min(32, max_steps - t)):
            live = np.flatnonzero(keep)
            if not len(live):
                break
            d = ((z[live] >> np.uint64(2 * sub)) & np.uint64(3)).astype(np.int64)
            q = nxt[p[live], d]
            hit = q < 0
            if hit.any():
                w = live[hit]
                event[alive[w]] = -q[hit] - 1
                steps[alive[w]] = t + sub + 1
                keep[w] = False
            p[live[~hit]] = q[~hit]
        pos[alive] = p
        t += min(32, max_steps - t)
        alive = alive[keep]
    steps[alive] = t
