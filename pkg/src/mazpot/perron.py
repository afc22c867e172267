"""Perron solutions for Mazurkiewicz boundary data and related experiments.

For resolutive data the Perron solution coincides with the Sobolev solution
of the Dirichlet problem, so it is computed by the variational solver: every
ghost edge carries the value of the Mazurkiewicz point it belongs to.  A
split boundary vertex thus shows each local component its own value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .domain import GridDomain, gen_domain
from .errors import BadInput, CertificateMissing, NotNested, UnstableAmbient
from .field import ScalarField
from .metric import default_schedule, MazBoundary, MazBoundaryPoint, build_maz_boundary
from .solver import (
    DirichletProblem,
    GhostData,
    SolverOptions,
    check_superharmonic,
    solve_dirichlet,
)


@dataclass
class MazBoundaryData:
    """One finite value per Mazurkiewicz boundary point, aligned with maz.points."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or not np.all(np.isfinite(self.values)):
            raise BadInput("boundary data must be a finite vector")

    @classmethod
    def from_function(cls, dom, maz, fn, side=False):
        """Evaluate fn(x, y) at anchor centers, or at representative cells if side=True.

        side=True gives one-sided data: each point is valued by where its
        local component lies.
        """
        idx = [p.representative if side else p.anchor for p in maz.points]
        xy = dom.spec.center(np.asarray(idx, np.int64))
        vals = np.asarray(fn(xy[:, 0], xy[:, 1]), float) * np.ones(len(idx))
        return cls(vals)

    def __add__(self, other):
        o = other.values if isinstance(other, MazBoundaryData) else other
        return MazBoundaryData(self.values + o)

    def __sub__(self, other):
        o = other.values if isinstance(other, MazBoundaryData) else other
        return MazBoundaryData(self.values - o)


@dataclass
class PerronResult:
    solution: ScalarField
    maz: MazBoundary
    data: MazBoundaryData
    report: object
    method: str = "Sobolev solution of the resolutive data (Perron solution by resolutivity)"
    diagnostics: list = field(default_factory=list)

    def to_dict(self):
        return {
            "method": self.method,
            "solver": self.report.to_dict(),
            "diagnostics": self.diagnostics,
        }


def edge_values(dom, maz, data):
    """Ghost-edge values for Mazurkiewicz data."""
    if len(data.values) != len(maz.points):
        raise BadInput("data length does not match the Mazurkiewicz boundary")
    k = maz.edge_points(dom)
    if np.any(k < 0):
        raise BadInput("the Mazurkiewicz boundary does not cover every boundary vertex")
    return data.values[k]


def approach_values(dom, maz, u, steps=(2, 4, 8), points=None):
    """Limit of u at each Mazurkiewicz point, approached inside its component.

    From the anchor, rays run through each adjacent open cell.  The values
    at 2h, 4h, 8h along a ray (as far as the ray stays open) are fitted
    linearly in the distance and extrapolated to the anchor; rays are then
    averaged.  A ray blocked before 2h contributes its adjacent cell value;
    a point with no adjacent cell uses its representative.
    """
    v = u.values if isinstance(u, ScalarField) else np.asarray(u, float)
    vf = v.ravel()
    spec = dom.spec
    ny = spec.ny
    op = dom.open
    ids = range(len(maz.points)) if points is None else points
    out = np.full(len(maz.points), np.nan)
    smax = max(steps)
    for k in ids:
        pt = maz.points[k]
        ai, aj = divmod(int(pt.anchor), ny)
        est = []
        for c in pt.adjacent:
            ci, cj = divmod(int(c), ny)
            di, dj = ci - ai, cj - aj
            ts, vals = [], []
            for t in range(1, smax + 1):
                ii, jj = ai + t * di, aj + t * dj
                if not (0 <= ii < spec.nx and 0 <= jj < ny) or not op[ii, jj]:
                    break
                if t in steps:
                    ts.append(t)
                    vals.append(v[ii, jj])
            if len(ts) >= 2:
                slope, icpt = np.polyfit(np.asarray(ts, float), np.asarray(vals), 1)
                est.append(icpt)
            elif len(ts) == 1:
                est.append(vals[0])
            else:
                est.append(vf[c])
        if not est:
            # unstable point with no cell next to the anchor
            est.append(vf[pt.representative])
        out[k] = float(np.mean(est))
    return out


def perron_solve(dom: GridDomain, maz: MazBoundary, data: MazBoundaryData, p, opts=None, cache=None, diagnostics=True):
    """Perron solution with respect to the Mazurkiewicz boundary."""
    gv = edge_values(dom, maz, data)
    prob = DirichletProblem(dom, p, GhostData(gv), opts or SolverOptions())
    u, rep = solve_dirichlet(prob, cache=cache)
    diag = []
    if diagnostics:
        app = approach_values(dom, maz, u)
        for k, pt in enumerate(maz.points):
            diag.append(
                {
                    "point": k,
                    "anchor": int(pt.anchor),
                    "approach": float(app[k]),
                    "data": float(data.values[k]),
                    "gap": float(abs(app[k] - data.values[k])),
                }
            )
    return PerronResult(u, maz, data, rep, diagnostics=diag)


@dataclass
class BoundaryLimitReport:
    fraction: float
    rows: list
    eps: float
    tested: int

    def to_dict(self):
        return {"fraction": self.fraction, "eps": self.eps, "tested": self.tested, "rows": self.rows}


def boundary_limit_report(result: PerronResult, data=None, exceptional=(), eps=0.05):
    """Share of non-exceptional Mazurkiewicz points whose approach value is within eps of the data."""
    dom = result.solution.dom
    maz = result.maz
    data = data or result.data
    skip = {int(k) for k in exceptional}
    keep = [k for k in range(len(maz.points)) if k not in skip]
    app = approach_values(dom, maz, result.solution, points=keep)
    rows = []
    ok = 0
    for k in keep:
        gap = abs(app[k] - data.values[k])
        good = bool(gap <= eps)
        ok += good
        rows.append({"point": k, "anchor": int(maz.points[k].anchor), "approach": float(app[k]), "data": float(data.values[k]), "gap": float(gap), "pass": good})
    frac = ok / len(keep) if keep else 1.0
    return BoundaryLimitReport(float(frac), rows, eps, len(keep))


def points_near(dom, maz, x, y, r):
    """Indices of Mazurkiewicz points whose anchor lies within r of (x, y)."""
    xy = dom.spec.center(maz.phi)
    return np.flatnonzero(np.hypot(xy[:, 0] - x, xy[:, 1] - y) <= r)


@dataclass
class ComparisonReport:
    passed: bool
    stage: str
    boundary_margin: float
    interior_margin: float

    def to_dict(self):
        return dict(self.__dict__)


def comparison_check(dom, u_super, v_sub, maz, margins=1e-6, p=2.0, boxes=None, certificates=None):
    """Comparison principle check: boundary ordering implies v <= u inside.

    Certificates that u is superharmonic and -v is superharmonic are either
    passed in (CertificateReports) or computed on `boxes`.  The boundary
    stage compares approach values at every Mazurkiewicz point.
    """
    u = u_super.values if isinstance(u_super, ScalarField) else np.asarray(u_super, float)
    v = v_sub.values if isinstance(v_sub, ScalarField) else np.asarray(v_sub, float)
    if certificates is None:
        if boxes is None:
            raise CertificateMissing("superharmonicity certificates or test boxes are required")
        certificates = (check_superharmonic(dom, u, p, boxes), check_superharmonic(dom, -v, p, boxes))
    cu, cv = certificates
    if not (cu.passed and cv.passed):
        raise CertificateMissing("superharmonicity certificate failed")
    au = approach_values(dom, maz, u)
    av = approach_values(dom, maz, v)
    bmargin = float(np.min(au - av))
    imargin = float(np.min((u - v)[dom.open]))
    if bmargin < -margins:
        return ComparisonReport(False, "boundary", bmargin, imargin)
    return ComparisonReport(bool(imargin >= -1e-6), "interior", bmargin, imargin)


@dataclass
class InvarianceReport:
    resolutions: list
    sup_diffs: list
    probe_diffs: list
    verdict: str
    perturbed: list = field(default_factory=list)

    def to_dict(self):
        return dict(self.__dict__)


def invariance_experiment(recipe, f, perturb_set, perturb_value, p, resolutions, far=0.1, probes=(), opts=None):
    """Effect of perturbing boundary data on a set, across resolutions.

    `perturb_set` is a predicate on boundary-vertex centers (a description
    independent of the grid), `f` a function of (x, y) giving the data.  For
    each h the data f and f + perturb_value on the set are solved; the
    report holds the sup difference over open cells at distance >= far from
    the set and the differences at the probe points.
    """
    hs = [float(h) for h in resolutions]
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise BadInput("resolutions must be strictly decreasing in h")
    sups, pdiffs, counts = [], [], []
    for h in hs:
        dom = gen_domain(recipe, h)
        cells, _, anchors = dom.ghost_edges
        axy = dom.spec.center(anchors)
        base = np.asarray(f(axy[:, 0], axy[:, 1]), float) * np.ones(len(anchors))
        hit = np.asarray(perturb_set(axy[:, 0], axy[:, 1]), bool)
        counts.append(int(len(np.unique(anchors[hit]))))
        if not hit.any():
            sups.append(0.0)
            pdiffs.append([0.0] * len(probes))
            continue
        cache = {}
        o = opts or SolverOptions()
        u0, _ = solve_dirichlet(DirichletProblem(dom, p, GhostData(base), o), cache=cache)
        u1, _ = solve_dirichlet(DirichletProblem(dom, p, GhostData(base + perturb_value * hit), o), cache=cache)
        diff = np.abs(u1.values - u0.values)
        mark = np.zeros(dom.spec.size, bool)
        mark[anchors[hit]] = True
        dist = ndimage.distance_transform_edt(~mark.reshape(dom.spec.shape), sampling=dom.h)
        region = dom.open & (dist >= far)
        sups.append(float(diff[region].max()) if region.any() else 0.0)
        pdiffs.append([float(diff.ravel()[dom.open_cell_near(x, y)]) for x, y in probes])
    dec = all(b < a for a, b in zip(sups, sups[1:]))
    return InvarianceReport(hs, sups, pdiffs, "decreasing" if dec else "non-decreasing", counts)


def generalized_boundary(dom: GridDomain, ambient: GridDomain, radius_schedule=None):
    """Split the boundary of dom as seen from inside the ambient domain G.

    Boundary vertices of dom that are open in G are not split: one point
    per vertex.  Vertices that are boundary vertices of G are split into
    G's Mazurkiewicz points, each keeping the open cells of dom that lie in
    its G-component.
    """
    if ambient.spec != dom.spec:
        raise NotNested("ambient domain must live on the same grid")
    if np.any(dom.open & ~ambient.open):
        raise NotNested("domain is not contained in the ambient domain")
    anchors = dom.anchors
    in_g = ambient.open_flat[anchors]
    g_anchors = anchors[~in_g]
    # radii follow the finer domain: G's own feature scale can exceed the
    # slit lengths it shares with dom, which would merge the two sides
    sched = radius_schedule or default_schedule(dom)
    gm = build_maz_boundary(ambient, radius_schedule=sched, anchors=g_anchors)
    bad = set(int(a) for a in g_anchors) & gm.unstable
    if bad:
        raise UnstableAmbient(f"{len(bad)} boundary vertices of the ambient domain are unstable")
    nb = dom.neighbors
    points, fibers = [], {}
    for a in anchors.tolist():
        adj_dom = [int(c) for c in nb[a] if c >= 0 and dom.open_flat[c]]
        if ambient.open_flat[a]:
            fibers[a] = [len(points)]
            points.append(MazBoundaryPoint(a, 0, adj_dom[0], tuple(adj_dom), True, 0.0))
            continue
        ids = []
        for k in gm.fibers.get(a, []):
            gp = gm.points[k]
            adj = tuple(c for c in gp.adjacent if dom.open_flat[c])
            if not adj:
                continue
            ids.append(len(points))
            points.append(MazBoundaryPoint(a, gp.component_id, adj[0], adj, gp.stable, gp.radius))
        covered = {c for k in ids for c in points[k].adjacent}
        rest = tuple(c for c in adj_dom if c not in covered)
        if rest:
            ids.append(len(points))
            points.append(MazBoundaryPoint(a, -1, rest[0], rest, True, 0.0))
        fibers[a] = ids
    return MazBoundary(points, fibers, list(gm.probe_radii), set())


def generalized_perron_solve(dom, ambient, data, p, opts=None, radius_schedule=None):
    """Perron solution with respect to the boundary of dom split inside G.

    `data` is a MazBoundaryData aligned with the generalized points, or a
    callable fn(anchor_xy, representative_xy) -> values evaluated per point.
    """
    gb = generalized_boundary(dom, ambient, radius_schedule)
    if callable(data):
        a = dom.spec.center(gb.phi)
        r = dom.spec.center(np.asarray([pt.representative for pt in gb.points], np.int64))
        data = MazBoundaryData(np.asarray(data(a, r), float) * np.ones(len(gb.points)))
    return perron_solve(dom, gb, data, p, opts)


@dataclass
class StabilityReport:
    passed: bool
    solution_diffs: list
    data_diffs: list

    def to_dict(self):
        return dict(self.__dict__)


def uniform_stability_check(dom, maz, f_seq, f_limit, p, opts=None):
    """sup|H f_j - H f| <= sup|f_j - f| + 1e-6 for each j."""
    cache = {}
    ref = perron_solve(dom, maz, f_limit, p, opts, cache=cache, diagnostics=False).solution.values
    sd, dd = [], []
    for fj in f_seq:
        uj = perron_solve(dom, maz, fj, p, opts, cache=cache, diagnostics=False).solution.values
        sd.append(float(np.max(np.abs(uj - ref)[dom.open])))
        dd.append(float(np.max(np.abs(fj.values - f_limit.values))))
    ok = all(s <= d + 1e-6 for s, d in zip(sd, dd))
    return StabilityReport(ok, sd, dd)
