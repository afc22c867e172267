"""Capacity estimates by convex p-energy minimization, and witness functions.

Five variants share one discrete energy (mass plus 4-neighbour edge terms,
as in the solvers) and differ only in the ground set and in which cells are
pinned to 1:

AMBIENT      the grid box padded by `ambient_pad` on every side, all cells;
CLOSURE_MU   open cells plus boundary vertices, boundary vertices weighted;
CLOSURE_MU0  open cells plus boundary vertices, boundary vertices weightless;
BAR          open cells only; a boundary vertex in E pins its open 4-neighbours;
BAR_MAZ      open cells only; a Mazurkiewicz boundary point pins the open
             4-neighbours of its anchor lying in its local component.

In the first three a boundary vertex in E pins itself and its 4-neighbours in
the closure.  With these choices the chain
BAR_MAZ <= BAR <= CLOSURE_MU0 <= CLOSURE_MU <= AMBIENT holds exactly for the
discrete minima, and BAR_MAZ of the full fibre over E equals BAR.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .domain import (
    CellSet,
    DomainRecipe,
    GridDomain,
    GridSpec,
    cantor_alpha,
    cantor_intervals,
    cantor_sequence,
    gen_domain,
)
from .energy import GridEnergy, check_exponent, minimize
from .errors import BadParams, InfeasibleTarget, InvalidCell
from .field import ScalarField, newtonian_norm
from .metric import MazBoundaryPoint, build_maz_boundary

TAGS = ("AMBIENT", "CLOSURE_MU", "CLOSURE_MU0", "BAR", "BAR_MAZ")


@dataclass(frozen=True)
class CapacityVariant:
    tag: str
    ambient_pad: float = 0.5

    def __post_init__(self):
        if self.tag not in TAGS:
            raise BadParams(f"unknown capacity variant {self.tag!r}")
        if not self.ambient_pad > 0:
            raise BadParams("ambient padding must be positive")

    def ambient_box(self, dom):
        """The padded rectangle standing in for the whole space."""
        XL, XR, YL, YR = dom.spec.bounds()
        k = self._pad_cells(dom.h)
        h = dom.h
        return (float(XL.min()) - k * h, float(XR.max()) + k * h, float(YL.min()) - k * h, float(YR.max()) + k * h)

    def _pad_cells(self, h):
        return max(1, math.ceil(self.ambient_pad / h - 1e-9))


AMBIENT = CapacityVariant("AMBIENT")
CLOSURE_MU = CapacityVariant("CLOSURE_MU")
CLOSURE_MU0 = CapacityVariant("CLOSURE_MU0")
BAR = CapacityVariant("BAR")
BAR_MAZ = CapacityVariant("BAR_MAZ")
VARIANTS = (AMBIENT, CLOSURE_MU, CLOSURE_MU0, BAR, BAR_MAZ)


def as_variant(v):
    return v if isinstance(v, CapacityVariant) else CapacityVariant(str(v).upper())


@dataclass
class TargetSet:
    """E split into open cells and boundary points.

    `boundary` holds boundary-vertex indices or MazBoundaryPoints.  For the
    BAR_MAZ variant a bare index stands for every Mazurkiewicz point over
    that vertex (its full fibre); the other variants read a
    MazBoundaryPoint as its anchor.
    """

    interior: CellSet | None = None
    boundary: list = field(default_factory=list)

    def is_empty(self):
        return (self.interior is None or len(self.interior.cells) == 0) and len(self.boundary) == 0

    def interior_cells(self):
        if self.interior is None:
            return np.zeros(0, np.int64)
        return np.asarray(self.interior.cells, np.int64)

    def anchors(self):
        out = [b.anchor if isinstance(b, MazBoundaryPoint) else int(b) for b in self.boundary]
        return np.unique(np.asarray(out, np.int64))

    def union(self, other):
        cells = np.union1d(self.interior_cells(), other.interior_cells())
        src = self.interior if self.interior is not None else other.interior
        inner = CellSet(src.spec, cells) if src is not None else None
        seen, merged = set(), []
        for b in list(self.boundary) + list(other.boundary):
            key = (b.anchor, b.component_id) if isinstance(b, MazBoundaryPoint) else int(b)
            if key not in seen:
                seen.add(key)
                merged.append(b)
        return TargetSet(inner, merged)


def anchors_where(dom, pred):
    """Boundary vertices whose centers satisfy pred(x, y)."""
    a = dom.anchors
    xy = dom.spec.center(a)
    return a[np.asarray(pred(xy[:, 0], xy[:, 1]), bool)]


def cells_where(dom, pred):
    """Open cells whose centers satisfy pred(x, y), as a CellSet."""
    c = dom.open_cells
    xy = dom.spec.center(c)
    return CellSet(dom.spec, c[np.asarray(pred(xy[:, 0], xy[:, 1]), bool)])


@dataclass
class CapacityOptions:
    tol: float = 1e-8
    max_iter: int = 20000
    maz: object = None  # a prebuilt MazBoundary for BAR_MAZ


@dataclass
class CapacityEstimate:
    variant: str
    value: float
    minimizer: ScalarField | None
    iterations: int
    rel_decrement: float
    converged: bool
    constraint_hash: str = ""
    monotone: bool = True
    ground: np.ndarray | None = None
    ground_spec: GridSpec | None = None

    def to_dict(self):
        return {
            "variant": self.variant,
            "value": self.value,
            "iterations": self.iterations,
            "rel_decrement": self.rel_decrement,
            "converged": self.converged,
            "monotone": self.monotone,
            "constraint_hash": self.constraint_hash,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def _neighbors4(spec, cells):
    ny = spec.ny
    i, j = np.divmod(np.asarray(cells, np.int64), ny)
    out = []
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        ii, jj = i + di, j + dj
        ok = (ii >= 0) & (ii < spec.nx) & (jj >= 0) & (jj < ny)
        out.append(ii[ok] * ny + jj[ok])
    return np.concatenate(out) if out else np.zeros(0, np.int64)


def _ambient_density(dom, spec):
    """Cell weights of the ambient space on `spec`."""
    if dom.info.get("weight") == "radial":
        X, Y = spec.centers()
        return spec.h**2 / np.maximum(np.hypot(X, Y), spec.h / 2)
    return np.full(spec.shape, spec.h**2)


def _validate(dom, E):
    cells = E.interior_cells()
    if len(cells) and not np.all(dom.open_flat[cells]):
        raise InvalidCell("interior part of E contains closed cells")
    anchors = E.anchors()
    if len(anchors):
        isb = np.isin(anchors, dom.anchors)
        if not np.all(isb):
            raise InfeasibleTarget("boundary part of E has a vertex with no adjacent open cell")
    return cells, anchors


def _maz_pins(dom, E, opts):
    """Open cells pinned by E under BAR_MAZ."""
    pins = []
    bare = [int(b) for b in E.boundary if not isinstance(b, MazBoundaryPoint)]
    maz = opts.maz
    if bare and maz is None:
        maz = build_maz_boundary(dom, anchors=np.unique(bare))
    for b in E.boundary:
        if isinstance(b, MazBoundaryPoint):
            pins.extend(b.adjacent)
        else:
            ids = maz.fibers.get(int(b))
            if not ids:
                raise InfeasibleTarget(f"boundary vertex {int(b)} has no Mazurkiewicz point")
            for k in ids:
                pins.extend(maz.points[k].adjacent)
    return np.asarray(pins, np.int64)


def constraint_set(dom, E, variant, opts=None):
    """Ground mask, weights, spec and pinned cells for a variant.

    Returns (spec, ground, weight, pinned) with flat indices on `spec`.
    """
    variant = as_variant(variant)
    opts = opts or CapacityOptions()
    cells, anchors = _validate(dom, E)
    spec = dom.spec
    tag = variant.tag
    if tag in ("BAR", "BAR_MAZ"):
        ground = dom.open_flat.copy()
        weight = dom.weight.ravel()
        if tag == "BAR":
            nb = _neighbors4(spec, anchors)
            pins = nb[dom.open_flat[nb]]
        else:
            pins = _maz_pins(dom, E, opts)
        pinned = np.union1d(cells, pins)
        return spec, ground, weight, pinned
    closure = dom.open_flat | dom.boundary_mask.ravel()
    nb = _neighbors4(spec, anchors)
    pins = np.union1d(anchors, nb[closure[nb]])
    pinned = np.union1d(cells, pins)
    dens = _ambient_density(dom, spec).ravel()
    if tag in ("CLOSURE_MU", "CLOSURE_MU0"):
        weight = np.where(dom.open_flat, dom.weight.ravel(), 0.0)
        if tag == "CLOSURE_MU":
            weight = np.where(dom.boundary_mask.ravel(), dens, weight)
        return spec, closure, weight, pinned
    k = variant._pad_cells(dom.h)
    ext = GridSpec(spec.x0 - k * spec.h, spec.y0 - k * spec.h, spec.h, spec.nx + 2 * k, spec.ny + 2 * k)
    weight = _ambient_density(dom, ext).ravel()
    i, j = np.divmod(dom.open_cells, spec.ny)
    weight[(i + k) * ext.ny + (j + k)] = dom.weight.ravel()[dom.open_cells]
    i, j = np.divmod(pinned, spec.ny)
    pinned = (i + k) * ext.ny + (j + k)
    return ext, np.ones(ext.size, bool), weight, pinned


def _hash_cells(spec, cells):
    hsh = hashlib.sha1()
    hsh.update(np.asarray([spec.nx, spec.ny], np.int64).tobytes())
    hsh.update(np.sort(np.asarray(cells, np.int64)).tobytes())
    return hsh.hexdigest()[:16]


def estimate_capacity(dom: GridDomain, E: TargetSet, p, variant, opts=None) -> CapacityEstimate:
    """Minimize sum w (|u|^p + edge energy) over the variant's admissible class.

    The minimizer takes values in [0, 1] (truncation never raises the
    energy and the minimizer is unique); it is clipped to [0, 1] against
    rounding before the value is evaluated.
    """
    check_exponent(p)
    variant = as_variant(variant)
    opts = opts or CapacityOptions()
    if E.is_empty():
        return CapacityEstimate(variant.tag, 0.0, None, 0, 0.0, True, _hash_cells(dom.spec, []))
    spec, ground, weight, pinned = constraint_set(dom, E, variant, opts)
    ge = GridEnergy(spec, ground, weight, p, fixed=(pinned, np.ones(len(pinned))), mass=True)
    x0 = None
    if p != 2.0:
        q = GridEnergy(spec, ground, weight, 2.0, fixed=(pinned, np.ones(len(pinned))), mass=True)
        x0, _ = minimize(q.energy, None, tol=opts.tol, max_iter=opts.max_iter)
        x0 = np.clip(x0, 0.0, 1.0)
    x, rep = minimize(ge.energy, x0, tol=opts.tol, max_iter=opts.max_iter)
    x = np.clip(x, 0.0, 1.0)
    value = float(ge.energy.value(x))
    full = ge.full(x)
    minimizer = ScalarField(dom, full) if spec is dom.spec else None
    est = CapacityEstimate(
        variant.tag, value, minimizer, rep.iterations, rep.rel_decrement, rep.converged,
        _hash_cells(spec, pinned), rep.monotone, ground.reshape(spec.shape), spec,
    )
    est.full_values = full
    return est


@dataclass
class ChainReport:
    values: dict
    checks: dict
    passed: bool

    def to_dict(self):
        return {"values": self.values, "checks": self.checks, "passed": self.passed}


def _leq(a, b, slack=1e-3, atol=1e-6):
    return bool(a <= (1 + slack) * b + atol)


def compare_capacities(dom, E, p, opts=None):
    """All five variants for E, the comparison chain and the fibre equality.

    BAR_MAZ is evaluated on the full fibre over E, so it must agree with BAR.
    """
    opts = opts or CapacityOptions()
    vals = {}
    for v in VARIANTS:
        vals[v.tag] = estimate_capacity(dom, E, p, v, opts).value
    checks = {
        "BAR_MAZ<=BAR": _leq(vals["BAR_MAZ"], vals["BAR"]),
        "BAR<=CLOSURE_MU0": _leq(vals["BAR"], vals["CLOSURE_MU0"]),
        "CLOSURE_MU0<=CLOSURE_MU": _leq(vals["CLOSURE_MU0"], vals["CLOSURE_MU"]),
        "CLOSURE_MU<=AMBIENT": _leq(vals["CLOSURE_MU"], vals["AMBIENT"]),
        "BAR<=AMBIENT": _leq(vals["BAR"], vals["AMBIENT"]),
    }
    ref = max(vals["BAR"], 1e-12)
    checks["BAR_MAZ==BAR"] = bool(abs(vals["BAR_MAZ"] - vals["BAR"]) <= 0.02 * ref)
    return ChainReport(vals, checks, all(checks.values()))


# witness functions


@dataclass
class WitnessValue:
    """Closed form and grid value of a witness; unpacks as the pair."""

    closed_form: float
    grid_value: float
    lp_part: float = 0.0
    info: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.closed_form, self.grid_value))


def comb_delta(j, p):
    return 0.75 ** (j / (p - 1.0))


def comb_closed_form(k):
    """Gradient energy of the comb witness h_k: sum_{j>=k} (2/3)^j = 3 (2/3)^k."""
    return float(3 * Fraction(2, 3) ** k)


def comb_witness(dom, k, p):
    """The comb witness h_k sampled at cell centers.

    On the tooth strip 2^-j < x < 2^(1-j), 0 < y < 1 it is min(y / delta_j, 1)
    for k <= j <= J.  The unresolved strips left of 2^-J carry the profile
    of strip J + 1, so the field depends on y only inside each resolved
    strip and no spurious horizontal jumps appear.
    """
    J = int(dom.info["J"])
    X, Y = dom.spec.centers()
    u = np.zeros(dom.spec.shape)
    band = (Y > 0) & (Y < 1)
    for j in range(k, J + 1):
        s = band & (X > 2.0**-j) & (X < 2.0 ** (1 - j))
        u = np.where(s, np.minimum(Y / comb_delta(j, p), 1.0), u)
    tail = band & (X < 2.0**-J)
    u = np.where(tail, np.minimum(Y / comb_delta(max(J + 1, k), p), 1.0), u)
    return ScalarField(dom, np.where(dom.open, u, 0.0))


def cusp_closed_form(R, beta, p):
    """Gradient energy R^(beta+1-p) / (beta+1) of u_R = max(1 - x/R, 0)."""
    return R ** (beta + 1 - p) / (beta + 1)


def cantor_un_bound(n, p, c="pow2sq"):
    """The norm bound 16 * 2^n * c_n^(1/p) for u_n."""
    cs = cantor_sequence(c, n) if not isinstance(c, str) else None
    if isinstance(c, str) and c == "pow2sq":
        return 16.0 * 2.0 ** (n - n * n / p)
    if isinstance(c, str) and c == "pow2":
        return 16.0 * 2.0 ** (n - n / p)
    cn = cs[n] if cs is not None else cantor_sequence(c, n)[n]
    return 16.0 * 2.0**n * float(cn) ** (1.0 / p)


def cantor_bound_table(ns, p, c="pow2sq"):
    return [(int(n), cantor_un_bound(n, p, c)) for n in ns]


def cantor_vk_bound(k, p, c="pow2sq", max_terms=400):
    """16 * sum_{n>=k} 2^n c_n^(1/p); BadParams if the series does not converge."""
    total = 0.0
    for n in range(k, k + max_terms):
        t = cantor_un_bound(n, p, c)
        total += t
        if n > k + 2 and t < 1e-17 * total:
            return total
    raise BadParams("the witness series does not converge for this sequence and p")


def cantor_measure_parts(k, M):
    """Exact shares of K in the first-hit decomposition over K*_m, m = k..M.

    Returns (parts, tail) as Fractions: parts[m - k] = (3/4)^(m-k) / 4 and
    tail = (3/4)^(M-k+1), so that sum(parts) + tail == 1.
    """
    if k < 0 or M < k:
        raise BadParams("need 0 <= k <= M")
    parts = [Fraction(3, 4) ** (m - k) * Fraction(1, 4) for m in range(k, M + 1)]
    return parts, Fraction(3, 4) ** (M - k + 1)


def cantor_measure_by_counting(k, M):
    """The same shares obtained by counting generation digits.

    A generation-g part of K is a digit string d_1..d_g in {0,1,2,3} (the
    quadrant chosen at each generation).  It lies in K*_n exactly when
    d_{n+2} = 3 - d_{n+1}: the grandchild nearest the centre.  A dynamic
    programme over the last digit counts strings whose first hit is at m.
    """
    if k < 0 or M < k:
        raise BadParams("need 0 <= k <= M")
    # state: count of strings by last digit, among those with no hit yet
    alive = {d: Fraction(1, 4) for d in range(4)}
    parts = []
    for m in range(k, M + 1):
        hit = Fraction(0)
        nxt = {d: Fraction(0) for d in range(4)}
        for last, w in alive.items():
            for d in range(4):
                if d == 3 - last:
                    hit += w / 4
                else:
                    nxt[d] += w / 4
        parts.append(hit)
        alive = nxt
    return parts, sum(alive.values(), Fraction(0))


def _cantor_un_field(dom, n, cs):
    """u_n = sum of the tent functions u_Q over the generation-n squares."""
    an = float(cantor_alpha(cs, n))
    slope = float(cantor_alpha(cs, n + 1) - cantor_alpha(cs, n + 2))
    bn = float(cantor_alpha(cs, n) - 2 * cantor_alpha(cs, n + 1) + 2 * cantor_alpha(cs, n + 2))
    X, Y = dom.spec.centers()
    u = np.zeros(dom.spec.shape)
    lefts = [float(a) for a in cantor_intervals(cs, n)]
    off = (an - bn) / 2
    for a in lefts:
        for b in lefts:
            dx = np.maximum(np.maximum(a + off - X, X - (a + off + bn)), 0.0)
            dy = np.maximum(np.maximum(b + off - Y, Y - (b + off + bn)), 0.0)
            d = np.hypot(dx, dy)
            inside = (X > a) & (X < a + an) & (Y > b) & (Y < b + an)
            u += np.where(inside, np.maximum(1.0 - d / slope, 0.0), 0.0)
    return u


@lru_cache(maxsize=2)
def _witness_domain(name, params, h):
    # repeated witness evaluations (k or R sweeps) share one grid
    return gen_domain(DomainRecipe(name, dict(params)), h)


def evaluate_witness(name, params=None, p=2.0):
    """Closed form and grid value of one of the example witnesses.

    comb_hk(k, h, J): gradient energy, closed form 3 (2/3)^k.
    cusp_uR(R, beta, h): gradient energy, closed form R^(beta+1-p)/(beta+1).
    cantor_un(n, c, h, m): Newtonian norm, closed-form bound 16 2^n c_n^(1/p).
    cantor_vk(k, c, h, m): Newtonian norm, bound 16 sum_{n>=k} 2^n c_n^(1/p).
    Grid values use the max-of-neighbours upper gradient on the recipe grid.
    """
    params = dict(params or {})
    check_exponent(p)
    if name == "comb_hk":
        k = int(params.get("k", 1))
        if k < 1:
            raise BadParams("comb witness needs k >= 1")
        h = float(params.get("h", 2.0**-10))
        rp = {"J": params["J"]} if "J" in params else {}
        dom = _witness_domain("comb", tuple(rp.items()), h)
        if k > dom.info["J"] + 1:
            raise BadParams("k exceeds the resolved comb depth")
        u = comb_witness(dom, k, p)
        parts = newtonian_norm(dom, u, p, stencil=params.get("stencil", "max"))
        return WitnessValue(comb_closed_form(k), parts.energy_part, parts.lp_part, {"J": dom.info["J"], "h": h})
    if name == "cusp_uR":
        R = float(params.get("R", 0.1))
        beta = float(params.get("beta", 3.0))
        if not 0 < R < 1:
            raise BadParams("cusp witness needs 0 < R < 1")
        if not beta > p - 1:
            raise BadParams("cusp witness needs beta > p - 1")
        h = float(params.get("h", 2.0**-9))
        dom = _witness_domain("cusp", (("beta", beta),), h)
        u = ScalarField.from_function(dom, lambda x, y: np.maximum(1 - x / R, 0.0))
        parts = newtonian_norm(dom, u, p, stencil=params.get("stencil", "max"))
        return WitnessValue(cusp_closed_form(R, beta, p), parts.energy_part, parts.lp_part, {"h": h})
    if name in ("cantor_un", "cantor_vk"):
        c = params.get("c", "pow2sq")
        h = float(params.get("h", 2.0**-8))
        rp = {"c": c}
        if "m" in params:
            rp["m"] = int(params["m"])
        dom = gen_domain(DomainRecipe("cantor_square", rp), h)
        m = int(dom.info["m"])
        if name == "cantor_un":
            n = int(params.get("n", 0))
            if n < 0:
                raise BadParams("n must be >= 0")
            cs = cantor_sequence(c, n + 2)
            closed = cantor_un_bound(n, p, c)
            u = _cantor_un_field(dom, n, cs)
        else:
            k = int(params.get("k", 0))
            if k < 0:
                raise BadParams("k must be >= 0")
            top = max(m, k)
            cs = cantor_sequence(c, top + 2)
            closed = cantor_vk_bound(k, p, c)
            u = sum(_cantor_un_field(dom, n, cs) for n in range(k, top + 1))
        parts = newtonian_norm(dom, ScalarField(dom, np.where(dom.open, u, 0.0)), p)
        return WitnessValue(closed, parts.total, parts.lp_part, {"m": m, "h": h})
    raise BadParams(f"unknown witness {name!r}")
