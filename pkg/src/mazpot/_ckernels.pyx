# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled grid kernels: 8-neighbour Dijkstra and absorbed random walks."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t
from libc.math cimport INFINITY, sqrt

cnp.import_array()

cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


# binary heap of (key, node) pairs stored in parallel arrays

cdef inline void heap_push(double* keys, int64_t* nodes, int64_t* n, double k, int64_t v) nogil:
    cdef int64_t i = n[0]
    cdef int64_t parent
    n[0] += 1
    while i > 0:
        parent = (i - 1) >> 1
        if keys[parent] <= k:
            break
        keys[i] = keys[parent]
        nodes[i] = nodes[parent]
        i = parent
    keys[i] = k
    nodes[i] = v


cdef inline void heap_pop(double* keys, int64_t* nodes, int64_t* n) nogil:
    cdef int64_t i = 0, child
    cdef int64_t last
    cdef double k
    n[0] -= 1
    last = n[0]
    k = keys[last]
    while True:
        child = 2 * i + 1
        if child >= last:
            break
        if child + 1 < last and keys[child + 1] < keys[child]:
            child += 1
        if keys[child] >= k:
            break
        keys[i] = keys[child]
        nodes[i] = nodes[child]
        i = child
    keys[i] = k
    nodes[i] = nodes[last]


def dijkstra8(const unsigned char[::1] allowed, int nx, int ny, double h,
              int64_t src, int64_t tgt, double[::1] dist, int64_t[::1] pred):
    """Shortest paths over allowed cells with 8 moves, no corner cutting.

    Fills `dist` (inf where unreached) and `pred` (-1 for none); stops once
    `tgt` is settled when tgt >= 0.
    """
    cdef int64_t size = nx * ny
    cdef int64_t cap = 8 * size + 8
    cdef cnp.ndarray[double, ndim=1] kbuf = np.empty(cap, dtype=np.float64)
    cdef cnp.ndarray[int64_t, ndim=1] vbuf = np.empty(cap, dtype=np.int64)
    cdef cnp.ndarray[unsigned char, ndim=1] done = np.zeros(size, dtype=np.uint8)
    cdef double* keys = <double*> kbuf.data
    cdef int64_t* nodes = <int64_t*> vbuf.data
    cdef int64_t n = 0
    cdef int64_t u, v, i, j, ii, jj, k
    cdef double d, nd, diag = h * sqrt(2.0)
    cdef int di[8]
    cdef int dj[8]
    di[:] = [1, -1, 0, 0, 1, 1, -1, -1]
    dj[:] = [0, 0, 1, -1, 1, -1, 1, -1]
    for k in range(size):
        dist[k] = INFINITY
        pred[k] = -1
    if not allowed[src]:
        return
    with nogil:
        dist[src] = 0.0
        heap_push(keys, nodes, &n, 0.0, src)
        while n > 0:
            d = keys[0]
            u = nodes[0]
            heap_pop(keys, nodes, &n)
            if done[u]:
                continue
            done[u] = 1
            if u == tgt:
                break
            i = u // ny
            j = u - i * ny
            for k in range(8):
                ii = i + di[k]
                jj = j + dj[k]
                if ii < 0 or ii >= nx or jj < 0 or jj >= ny:
                    continue
                v = ii * ny + jj
                if not allowed[v] or done[v]:
                    continue
                if k >= 4:
                    if not allowed[ii * ny + j] or not allowed[i * ny + jj]:
                        continue
                    nd = d + diag
                else:
                    nd = d + h
                if nd < dist[v]:
                    dist[v] = nd
                    pred[v] = u
                    heap_push(keys, nodes, &n, nd, v)


def walk(const int64_t[:, ::1] nxt, const int64_t[::1] starts, uint64_t seed,
         int64_t max_steps, int64_t[::1] event, int64_t[::1] steps):
    """Run one walker per start cell.

    nxt[c, d] >= 0 is the cell reached from c in direction d, a negative
    value -(e + 1) means absorption with event e.  Each walker draws from
    its own splitmix64 stream; one 64-bit draw supplies 32 directions.
    """
    cdef int64_t nw = starts.shape[0]
    cdef int64_t w, c, t, nx_c
    cdef uint64_t state, z
    cdef int sub
    with nogil:
        for w in range(nw):
            state = mix64(seed + mix64(<uint64_t> w + GAMMA))
            c = starts[w]
            event[w] = -1
            t = 0
            sub = 32
            z = 0
            while t < max_steps:
                if sub == 32:
                    state = state + GAMMA
                    z = mix64(state)
                    sub = 0
                nx_c = nxt[c, (z >> (2 * sub)) & 3]
                sub += 1
                t += 1
                if nx_c < 0:
                    event[w] = -nx_c - 1
                    break
                c = nx_c
            steps[w] = t
