"""Discrete p-harmonic Dirichlet and obstacle problems.

Boundary values live on boundary vertices (closed cells next to the
domain).  They enter the energy through ghost edges: every edge from an
open cell c to a boundary vertex contributes w_c |u_c - f|^p / h^p, where f
is the value carried by that edge.  A split boundary point can therefore
show different values to the different open cells around it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .domain import FOUR, GridDomain
from .energy import GridEnergy, check_exponent, minimize
from .errors import BadInput, BoxNotInterior, KEmpty, NoBoundary
from .field import ScalarField


@dataclass
class SolverOptions:
    tol: float = 1e-8
    xtol: float = 1e-11
    max_iter: int = 500


class GhostData:
    """Boundary values given per ghost edge, aligned with dom.ghost_edges."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)


def ghost_values(dom: GridDomain, data):
    """Values carried by each ghost edge of the domain.

    `data` may be a GhostData, a callable f(x, y) evaluated at boundary
    vertex centers, a scalar, an array aligned with dom.anchors, or a
    full-grid array read at the boundary vertices.
    """
    cells, dirs, anchors = dom.ghost_edges
    if isinstance(data, GhostData):
        vals = data.values
        if vals.shape != cells.shape:
            raise BadInput("ghost data length does not match the domain")
    elif callable(data):
        xy = dom.spec.center(anchors)
        vals = np.asarray(data(xy[:, 0], xy[:, 1]), dtype=float) * np.ones(len(anchors))
    elif np.isscalar(data):
        vals = np.full(len(cells), float(data))
    else:
        arr = np.asarray(data, dtype=float)
        if arr.shape == dom.spec.shape:
            vals = arr.ravel()[anchors]
        elif arr.shape == dom.anchors.shape:
            vals = arr[np.searchsorted(dom.anchors, anchors)]
        else:
            raise BadInput("boundary data shape not understood")
    if not np.all(np.isfinite(vals)):
        raise BadInput("boundary data must be finite")
    return vals


@dataclass
class DirichletProblem:
    dom: GridDomain
    p: float
    boundary_data: object
    opts: SolverOptions = field(default_factory=SolverOptions)


@dataclass
class ObstacleProblem:
    dirichlet: DirichletProblem
    psi: object = None  # ScalarField, full-grid array, or None for no obstacle


@dataclass
class SolveReport:
    energy: float
    iterations: int
    converged: bool
    max_violation: float
    monotone: bool
    rel_decrement: float = 0.0
    complementarity: float = 0.0
    message: str = ""

    def to_dict(self):
        return dict(self.__dict__)


def _check_boundary(dom, cells):
    if len(cells) == 0:
        raise NoBoundary("the domain touches no boundary vertex")
    lab, n = ndimage.label(dom.open, structure=FOUR)
    touched = np.unique(lab.ravel()[cells])
    if len(touched) < n:
        raise NoBoundary("a component of the domain touches no boundary vertex")


def dirichlet_energy(dom, p, gvals):
    cells, _, _ = dom.ghost_edges
    w = dom.weight.ravel()
    return GridEnergy(dom.spec, dom.open, dom.weight, p, ties=(cells, gvals, w[cells] / dom.h**p))


def _solve(dom, p, gvals, opts, lower=None, cache=None):
    check_exponent(p)
    cells, _, _ = dom.ghost_edges
    _check_boundary(dom, cells)
    ge = dirichlet_energy(dom, p, gvals)
    x0 = None
    if p != 2.0:
        # warm start from the quadratic problem with the same data
        q = dirichlet_energy(dom, 2.0, gvals)
        x0, _ = minimize(q.energy, None, tol=opts.tol, xtol=opts.xtol, max_iter=opts.max_iter)
    if lower is not None:
        lo = ge.restrict(lower)
        base = x0
        if base is None:
            base, _ = minimize(ge.energy, None, tol=opts.tol, xtol=opts.xtol, max_iter=opts.max_iter, solver_cache=cache)
        x0 = np.maximum(base, lo)
        x, rep = minimize(ge.energy, x0, lower=lo, tol=opts.tol, xtol=opts.xtol, max_iter=opts.max_iter)
    else:
        x, rep = minimize(ge.energy, x0, tol=opts.tol, xtol=opts.xtol, max_iter=opts.max_iter, solver_cache=cache)
    return ge, x, rep


def solve_dirichlet(prob: DirichletProblem, cache=None):
    """Minimize the edge energy with the given boundary values."""
    gvals = ghost_values(prob.dom, prob.boundary_data)
    ge, x, rep = _solve(prob.dom, prob.p, gvals, prob.opts, cache=cache)
    u = ScalarField(prob.dom, ge.full(x))
    return u, SolveReport(rep.energy, rep.iterations, rep.converged, 0.0, rep.monotone, rep.rel_decrement, 0.0, rep.message)


def _psi_values(dom, psi):
    if isinstance(psi, ScalarField):
        return psi.values
    if callable(psi):
        X, Y = dom.spec.centers()
        return np.asarray(psi(X, Y), float) * np.ones(dom.spec.shape)
    if np.isscalar(psi):
        return np.full(dom.spec.shape, float(psi))
    arr = np.asarray(psi, float)
    if arr.shape != dom.spec.shape:
        raise BadInput("obstacle shape does not match the grid")
    return arr


def obstacle_feasible(dom, gvals, psi_full):
    """Admissibility rule for the obstacle class.

    The class is empty when the obstacle exceeds the boundary data at every
    boundary-adjacent cell: no admissible field can then attain its boundary
    values anywhere.
    """
    cells, _, _ = dom.ghost_edges
    best = np.full(dom.spec.size, -np.inf)
    np.maximum.at(best, cells, gvals)
    adj = np.unique(cells)
    return bool(np.any(psi_full.ravel()[adj] <= best[adj] + 1e-12))


def _complementarity(ge, x, lo, tol):
    # stationarity on {u > psi + tol}, as net flux relative to the flux
    # through the cell; the mean flux guards cells where everything is flat.
    # An absolute residual has a rounding floor of order ulp^(p-1) / h^p
    # for p < 2, which sits above any useful tolerance on fine grids.
    g = ge.energy.grad(x)
    fl = ge.energy.flux(x)
    inactive = x > lo + tol
    if not inactive.any():
        return 0.0
    return float(np.max(np.abs(g[inactive]) / (fl[inactive] + fl.mean() + 1e-300)))


def complementarity_residual(dom, p, boundary_data, psi, u, tol=1e-8):
    """Relative stationarity residual of the field u on {u > psi + tol}."""
    gvals = ghost_values(dom, boundary_data)
    ge = dirichlet_energy(dom, p, gvals)
    vals = u.values if hasattr(u, "values") else np.asarray(u)
    lo = ge.restrict(np.where(np.isfinite(_psi_values(dom, psi)), _psi_values(dom, psi), -1e300))
    return _complementarity(ge, ge.restrict(vals), lo, tol)


def solve_obstacle(prob: ObstacleProblem):
    """Minimize the edge energy over fields u >= psi with the given boundary values."""
    dp = prob.dirichlet
    dom = dp.dom
    gvals = ghost_values(dom, dp.boundary_data)
    if prob.psi is None:
        u, rep = solve_dirichlet(dp)
        return u, rep
    psi = _psi_values(dom, prob.psi)
    finite = np.isfinite(psi) & dom.open
    if not finite.any():
        return solve_dirichlet(dp)
    psi = np.where(finite, psi, -1e300)
    if not obstacle_feasible(dom, gvals, np.where(finite, psi, -np.inf)):
        raise KEmpty("obstacle lies above the boundary data everywhere on the boundary")
    ge, x, rep = _solve(dom, dp.p, gvals, dp.opts, lower=psi)
    lo = ge.restrict(psi)
    comp = _complementarity(ge, x, lo, dp.opts.tol)
    viol = float(max(0.0, np.max(lo - x)))
    u = ScalarField(dom, ge.full(x))
    return u, SolveReport(rep.energy, rep.iterations, rep.converged, viol, rep.monotone, rep.rel_decrement, comp, rep.message)


# certificates


def _edge_pairs(dom):
    ny = dom.spec.ny
    op = dom.open_flat
    c = dom.open_cells
    a = np.concatenate([c, c])
    b = np.concatenate([c + ny, c + 1])
    i, j = np.divmod(c, ny)
    ok = np.concatenate([i < dom.spec.nx - 1, j < ny - 1])
    a, b = a[ok], b[ok]
    keep = op[b]
    return a[keep], b[keep]


def local_energy(dom, v, p, cells):
    """Edge energy over the edges touching `cells`."""
    a, b = _edge_pairs(dom)
    mark = np.zeros(dom.spec.size, bool)
    mark[cells] = True
    sel = mark[a] | mark[b]
    a, b = a[sel], b[sel]
    w = dom.weight.ravel()
    vv = v.ravel()
    return float(np.sum(0.5 * (w[a] + w[b]) * np.abs(vv[a] - vv[b]) ** p)) / dom.h**p


@dataclass
class CertificateReport:
    passed: bool
    worst_margin: float
    trials: int
    seed: object
    details: list = field(default_factory=list)


def check_superminimizer(dom, u, p, trials=100, rng_seed=0, both_signs=False):
    """Randomized test that nonnegative bumps never lower the energy.

    Bumps are supported on cells all of whose 4-neighbours are open, so
    boundary ghost terms are untouched.  The margin of a trial is
    energy(u + phi) - energy(u) on the edges meeting supp phi; the check
    passes if every margin is >= -1e-10.
    """
    v = u.values if isinstance(u, ScalarField) else np.asarray(u, float)
    rng = np.random.default_rng(rng_seed)
    interior = dom.open.copy()
    interior &= ndimage.binary_erosion(dom.open, structure=FOUR, border_value=0)
    cand = np.flatnonzero(interior.ravel())
    if len(cand) == 0:
        raise BadInput("no interior cells for bump tests")
    X, Y = dom.spec.centers()
    h = dom.h
    worst = np.inf
    details = []
    for t in range(trials):
        c = cand[rng.integers(len(cand))]
        cx, cy = dom.spec.center(c)
        rad = h * rng.uniform(1.0, 6.0)
        height = 10.0 ** rng.uniform(-4, -0.5)
        bump = np.clip(1 - np.hypot(X - cx, Y - cy) / rad, 0, None) * height
        bump = np.where(interior, bump, 0.0)
        supp = np.flatnonzero(bump.ravel() > 0)
        if len(supp) == 0:
            continue
        e0 = local_energy(dom, v, p, supp)
        signs = (1.0, -1.0) if both_signs else (1.0,)
        for s in signs:
            m = local_energy(dom, v + s * bump, p, supp) - e0
            worst = min(worst, m)
            details.append((int(c), float(rad), float(height), s, m))
    return CertificateReport(bool(worst >= -1e-10), float(worst), trials, rng_seed, details)


def box_cells(dom, box):
    """Open cells with centers inside the closed box (x0, x1, y0, y1)."""
    x0, x1, y0, y1 = box
    X, Y = dom.spec.centers()
    return (X >= x0) & (X <= x1) & (Y >= y0) & (Y <= y1) & dom.open


def check_superharmonic(dom, u, p, boxes, opts=None):
    """Solve on each box with data u on its frame; pass if the solution stays <= u."""
    v = u.values if isinstance(u, ScalarField) else np.asarray(u, float)
    opts = opts or SolverOptions()
    results = []
    worst = np.inf
    for box in boxes:
        V = box_cells(dom, box)
        if not V.any():
            raise BoxNotInterior(f"box {box} contains no open cell")
        frame = ndimage.binary_dilation(V, structure=FOUR) & ~V
        if not np.all(dom.open[frame]):
            raise BoxNotInterior(f"box {box} is not compactly inside the domain")
        sub = GridDomain(dom.spec, V, dom.weight, None, {"recipe": "box"})
        hv, _ = solve_dirichlet(DirichletProblem(sub, p, v, opts))
        margin = float(np.min((v - hv.values)[V]))
        worst = min(worst, margin)
        results.append((tuple(box), margin))
    return CertificateReport(bool(worst >= -1e-6), float(worst), len(boxes), None, results)
