"""Inner and Mazurkiewicz distances and the Mazurkiewicz boundary on grids.

Distances use the 8-neighbour graph of open cells (steps h and h*sqrt(2),
no diagonal step past a closed corner); topology uses 4-connectivity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull
from scipy.spatial.distance import pdist

from . import kernels
from .domain import FOUR, CellSet, GridDomain
from .errors import Disconnected, EmptySet, InvalidCell, RadiusTooSmall


def _cell(dom, c):
    """Accept a flat index or an (x, y) pair; return an open flat index."""
    if isinstance(c, (tuple, list, np.ndarray)) and len(c) == 2:
        idx = dom.spec.locate(float(c[0]), float(c[1]))
    else:
        idx = int(c)
    if not (0 <= idx < dom.spec.size) or not dom.open_flat[idx]:
        raise InvalidCell(f"cell {c} is not an open cell")
    return idx


def shortest_path(dom, a, b, allowed=None):
    """Length and cell sequence of a shortest 8-neighbour path from a to b."""
    spec = dom.spec
    al = dom.open_flat if allowed is None else (np.asarray(allowed, bool).ravel() & dom.open_flat)
    dist = np.empty(spec.size)
    pred = np.empty(spec.size, dtype=np.int64)
    kernels.dijkstra8(np.ascontiguousarray(al, dtype=np.uint8), spec.nx, spec.ny, spec.h, a, b, dist, pred)
    if not math.isfinite(dist[b]):
        return math.inf, None
    path = [b]
    while path[-1] != a:
        path.append(int(pred[path[-1]]))
    return float(dist[b]), np.array(path[::-1], dtype=np.int64)


def inner_distance(dom: GridDomain, a, b) -> float:
    """Shortest-path length between two open cells."""
    a, b = _cell(dom, a), _cell(dom, b)
    d, _ = shortest_path(dom, a, b)
    if not math.isfinite(d):
        raise Disconnected("cells lie in different components")
    return d


def set_diameter(dom, cells) -> float:
    """Largest distance between two cell centers of the set."""
    idx = cells.cells if isinstance(cells, CellSet) else np.asarray(cells, dtype=np.int64)
    if len(idx) == 0:
        raise EmptySet("diameter of an empty set")
    pts = dom.spec.center(np.unique(idx))
    if len(pts) == 1:
        return 0.0
    if len(pts) > 2000:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except Exception:
            # degenerate (collinear) sets: the extremes along the line suffice
            order = np.lexsort((pts[:, 1], pts[:, 0]))
            pts = pts[[order[0], order[-1]]]
    return float(pdist(pts).max())


@dataclass
class DistInterval:
    lo: float
    hi: float
    path: np.ndarray = None
    probes: list = field(default_factory=list)

    def __contains__(self, v):
        return self.lo <= v <= self.hi


def _reach_radius(dom, a, b, comp_mask):
    """Smallest ball radius about a whose open part joins a to b, and the
    largest probed radius below it (b unreachable there).

    Bisection over the sorted distinct center distances from a.
    """
    spec = dom.spec
    X, Y = spec.centers()
    ax, ay = spec.center(a)
    rho = np.hypot(X - ax, Y - ay)
    vals = np.unique(rho[comp_mask])
    lo_i, hi_i = 0, len(vals) - 1  # vals[hi_i] connects, vals[lo_i] may not
    ia, ja = divmod(a, spec.ny)
    ib, jb = divmod(b, spec.ny)
    probes = 0

    def joined(r):
        k = int(math.ceil(r / spec.h)) + 1
        sl = (slice(max(0, ia - k), ia + k + 1), slice(max(0, ja - k), ja + k + 1))
        m = comp_mask[sl] & (rho[sl] <= r)
        lab, _ = ndimage.label(m, structure=FOUR)
        la = lab[ia - sl[0].start, ja - sl[1].start]
        bi, bj = ib - sl[0].start, jb - sl[1].start
        if not (0 <= bi < lab.shape[0] and 0 <= bj < lab.shape[1]):
            return False
        return la != 0 and lab[bi, bj] == la

    start = int(np.searchsorted(vals, rho.ravel()[b]))
    lo_i = max(0, start - 1)
    if joined(vals[start]):
        return vals[start], vals[lo_i] if start > 0 else 0.0, 1
    lo_i = start
    while hi_i - lo_i > 1:
        mid = (lo_i + hi_i) // 2
        probes += 1
        if joined(vals[mid]):
            hi_i = mid
        else:
            lo_i = mid
    return float(vals[hi_i]), float(vals[lo_i]), probes


def mazurkiewicz_distance(dom: GridDomain, a, b, tol=None, max_probes=8) -> DistInterval:
    """Certified bracket [lo, hi] for the Mazurkiewicz distance.

    lo: the largest radius r found with b unreachable from a inside the
    open cells of the closed ball B(a, r) (and symmetrically from b); a
    connected set of diameter <= r through a lies in that ball, so d_M > lo.
    hi: the smallest diameter of an explicit connecting path found inside
    balls B(a, r), r >= the joining radius.
    """
    a, b = _cell(dom, a), _cell(dom, b)
    h = dom.h
    tol = max(tol or 0.0, 4 * h)
    lab, _ = ndimage.label(dom.open, structure=FOUR)
    la = lab.ravel()[a]
    if la != lab.ravel()[b]:
        raise Disconnected("cells lie in different components")
    if a == b:
        return DistInterval(0.0, 0.0, np.array([a]), [])
    comp = lab == la
    r_a, lo_a, _ = _reach_radius(dom, a, b, comp)
    r_b, lo_b, _ = _reach_radius(dom, b, a, comp)
    lo = max(lo_a, lo_b)
    X, Y = dom.spec.centers()
    best, best_path, probes = math.inf, None, []
    for center, other, r0 in ((a, b, r_a), (b, a, r_b)):
        cx, cy = dom.spec.center(center)
        rho = np.hypot(X - cx, Y - cy)
        r = r0
        for k in range(max_probes):
            _, path = shortest_path(dom, center, other, comp & (rho <= r + 1e-12))
            if path is not None:
                dia = set_diameter(dom, path)
                probes.append((float(r), dia))
                if dia < best:
                    best, best_path = dia, path if center == a else path[::-1]
            if best - lo <= tol:
                break
            r = r0 + (k + 1) * 0.25 * (best - r0 if math.isfinite(best) else r0)
    return DistInterval(float(lo), float(best), best_path, probes)


# local components and the Mazurkiewicz boundary


@dataclass
class LocalComponents:
    count: int
    components: list
    touches: list
    near: list


def _ball_labels(dom, anchor, r):
    spec = dom.spec
    ia, ja = divmod(int(anchor), spec.ny)
    k = int(math.ceil(r / spec.h)) + 1
    i0, j0 = max(0, ia - k), max(0, ja - k)
    sl = (slice(i0, ia + k + 1), slice(j0, ja + k + 1))
    ii = np.arange(sl[0].start, min(sl[0].stop, spec.nx))
    jj = np.arange(sl[1].start, min(sl[1].stop, spec.ny))
    DI, DJ = np.meshgrid(ii - ia, jj - ja, indexing="ij")
    dist = spec.h * np.hypot(DI, DJ)
    m = dom.open[sl] & (dist < r)
    lab, n = ndimage.label(m, structure=FOUR)
    return lab, n, (i0, j0), dist


def local_boundary_components(dom, anchor, r) -> LocalComponents:
    """Components of the open cells in the open ball B(anchor, r).

    All components are returned (count is their number); `touches[k]` says
    whether component k contains a cell 4-adjacent to the anchor and
    `near[k]` whether it meets B(anchor, r/2).
    """
    anchor = int(anchor)
    h = dom.h
    if r < 2 * h - 1e-12:
        raise RadiusTooSmall("probe radius must be at least 2h")
    nb = dom.neighbors[anchor]
    if not np.any((nb >= 0) & dom.open_flat[np.maximum(nb, 0)]):
        raise InvalidCell("anchor has no adjacent open cell")
    lab, n, (i0, j0), dist = _ball_labels(dom, anchor, r)
    ny = dom.spec.ny
    comps, touches, near = [], [], []
    adj = set()
    for c in nb:
        if c >= 0 and dom.open_flat[c]:
            ci, cj = divmod(int(c), ny)
            li, lj = ci - i0, cj - j0
            if 0 <= li < lab.shape[0] and 0 <= lj < lab.shape[1] and lab[li, lj]:
                adj.add(int(lab[li, lj]))
    near_labels = set(np.unique(lab[(dist < r / 2) & (lab > 0)]).tolist())
    objs = ndimage.find_objects(lab)
    for k in range(1, n + 1):
        sl = objs[k - 1]
        li, lj = np.nonzero(lab[sl] == k)
        cells = (li + sl[0].start + i0) * ny + (lj + sl[1].start + j0)
        comps.append(CellSet(dom.spec, cells))
        touches.append(k in adj)
        near.append(k in near_labels)
    return LocalComponents(n, comps, touches, near)


@dataclass
class MazBoundaryPoint:
    anchor: int
    component_id: int
    representative: int
    adjacent: tuple
    stable: bool
    radius: float


@dataclass
class MazBoundary:
    points: list
    fibers: dict
    probe_radii: list
    unstable: set

    @property
    def phi(self):
        return np.array([p.anchor for p in self.points], dtype=np.int64)

    def fiber_size(self, anchor):
        return len(self.fibers.get(int(anchor), []))

    def point_of_edge(self, cell, anchor):
        """Index of the Maz point seen from open cell `cell` across `anchor`."""
        ids = self.fibers[int(anchor)]
        for k in ids:
            if int(cell) in self.points[k].adjacent:
                return k
        return ids[0]

    def edge_points(self, dom):
        """Maz point index for every ghost edge of the domain (-1 if unknown)."""
        cells, _, anchors = dom.ghost_edges
        lookup = {}
        for k, p in enumerate(self.points):
            for c in p.adjacent:
                lookup[(p.anchor, c)] = k
        out = np.full(len(cells), -1, dtype=np.int64)
        for e, (c, a) in enumerate(zip(cells.tolist(), anchors.tolist())):
            k = lookup.get((a, c))
            if k is None and a in self.fibers:
                k = self.fibers[a][0]
            if k is not None:
                out[e] = k
        return out

    def to_json(self, dom=None):
        pts = []
        for p in self.points:
            d = {
                "anchor": int(p.anchor),
                "component_id": int(p.component_id),
                "representative": int(p.representative),
                "adjacent": [int(c) for c in p.adjacent],
                "stable": bool(p.stable),
                "radius": float(p.radius),
            }
            if dom is not None:
                d["anchor_xy"] = dom.spec.center(p.anchor).tolist()
                d["representative_xy"] = dom.spec.center(p.representative).tolist()
            pts.append(d)
        return json.dumps(
            {
                "probe_radii": [float(r) for r in self.probe_radii],
                "points": pts,
                "fibers": {str(k): v for k, v in self.fibers.items()},
                "unstable": sorted(int(a) for a in self.unstable),
            }
        )


def default_schedule(dom, levels=4):
    """Decreasing radii r_min * 2^k; r_min = max(2h, 4 * resolved feature scale)."""
    fs = dom.feature_scale
    r_min = max(2 * dom.h, 4 * fs if fs > dom.h else 2 * dom.h)
    return [r_min * 2**k for k in range(levels - 1, -1, -1)]


def build_maz_boundary(dom: GridDomain, radius_schedule=None, anchors=None) -> MazBoundary:
    """Split every boundary vertex into Mazurkiewicz boundary points.

    For each anchor, the number of components of B(anchor, r) meeting
    B(anchor, r/2) is computed along the decreasing schedule.  The anchor
    is stable at the smallest radius whose count equals the count at the
    next larger radius; its fiber is then the set of components at that
    radius containing a cell adjacent to the anchor.  Anchors whose counts
    differ at the two smallest radii are flagged unstable and get one point
    per component meeting B(anchor, r_min / 2).  The schedule floor tracks
    the finest feature the recipe resolves, so accumulating walls (combs)
    are visible at the smallest radius.
    """
    sched = sorted(radius_schedule or default_schedule(dom), reverse=True)
    if sched[-1] < 2 * dom.h - 1e-12:
        raise RadiusTooSmall("schedule minimum must be at least 2h")
    if anchors is None:
        anchors = dom.anchors
    anchors = np.asarray(anchors, dtype=np.int64)
    points, fibers, unstable = [], {}, set()
    ny = dom.spec.ny
    for a in anchors.tolist():
        a = int(a)
        nb = dom.neighbors[a]
        if not np.any((nb >= 0) & dom.open_flat[np.maximum(nb, 0)]):
            continue
        results = [local_boundary_components(dom, a, r) for r in sched]
        counts = [sum(res.near) for res in results]
        chosen = None
        for k in range(len(sched) - 1, 0, -1):
            if counts[k] == counts[k - 1]:
                chosen = k
                break
        stable = chosen is not None
        ids = []
        if stable:
            res = results[chosen]
            sel = [k for k, t in enumerate(res.touches) if t]
            radius = sched[chosen]
        else:
            res = results[-1]
            sel = [k for k, t in enumerate(res.near) if t or res.touches[k]]
            radius = sched[-1]
            unstable.add(a)
        for k in sel:
            comp = res.components[k]
            adj = tuple(int(c) for c in nb if c >= 0 and dom.open_flat[c] and c in comp)
            if adj:
                rep = adj[0]
            else:
                pts = comp.centers()
                ax, ay = dom.spec.center(a)
                rep = int(comp.cells[np.argmin(np.hypot(pts[:, 0] - ax, pts[:, 1] - ay))])
            ids.append(len(points))
            points.append(MazBoundaryPoint(a, len(ids) - 1, rep, adj, stable, radius))
        fibers[a] = ids
    return MazBoundary(points, fibers, list(sched), unstable)
