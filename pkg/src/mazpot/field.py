"""Scalar fields on grid domains, discrete upper gradients and norms."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import BadExponent, BadInput, BrokenPath

# 8-neighbour offsets; the first four are the axis directions
OFFSETS8 = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]


class ScalarField:
    """Values on the open cells of a domain.

    `values` is a full-grid array of shape (nx, ny); entries on closed cells
    are ignored (kept at 0).
    """

    def __init__(self, dom, values):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1 and values.size == len(dom.open_cells):
            full = np.zeros(dom.spec.size)
            full[dom.open_cells] = values
            values = full.reshape(dom.spec.shape)
        if values.shape != dom.spec.shape:
            raise BadInput("field shape does not match the grid")
        if not np.all(np.isfinite(values[dom.open])):
            raise BadInput("field has non-finite values on open cells")
        self.dom = dom
        self.values = np.where(dom.open, values, 0.0)

    @classmethod
    def from_function(cls, dom, fn):
        X, Y = dom.spec.centers()
        vals = np.where(dom.open, fn(X, Y), 0.0)
        return cls(dom, vals)

    @property
    def open_values(self):
        return self.values.ravel()[self.dom.open_cells]

    def at(self, x, y):
        return float(self.values.ravel()[self.dom.cell_at(x, y)])

    def __add__(self, c):
        other = c.values if isinstance(c, ScalarField) else c
        return ScalarField(self.dom, self.values + other)

    def __sub__(self, c):
        other = c.values if isinstance(c, ScalarField) else c
        return ScalarField(self.dom, self.values - other)

    def __mul__(self, c):
        return ScalarField(self.dom, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.dom, -self.values)

    def minimum(self, c):
        return ScalarField(self.dom, np.minimum(self.values, c))

    def to_csv(self, path):
        spec = self.dom.spec
        idx = self.dom.open_cells
        xy = spec.center(idx)
        i, j = np.divmod(idx, spec.ny)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "x", "y", "value"])
            for row in zip(i, j, xy[:, 0], xy[:, 1], self.values.ravel()[idx]):
                w.writerow([int(row[0]), int(row[1]), repr(float(row[2])), repr(float(row[3])), repr(float(row[4]))])


def read_field_csv(path):
    """Read a field CSV; returns (i, j, x, y, value) arrays."""
    try:
        data = np.genfromtxt(path, delimiter=",", names=True)
    except (OSError, ValueError) as exc:
        raise BadInput(f"cannot read field CSV {path}: {exc}") from None
    if data.dtype.names is None or list(data.dtype.names) != ["i", "j", "x", "y", "value"]:
        raise BadInput("field CSV must have header i,j,x,y,value")
    data = np.atleast_1d(data)
    if data.size == 0 or not np.all(np.isfinite(data["value"])):
        raise BadInput("field CSV is empty or has non-finite values")
    return data["i"].astype(int), data["j"].astype(int), data["x"], data["y"], data["value"]


@dataclass
class GradientField:
    dom: object
    g: np.ndarray


def _values(u):
    return u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)


def _shift(a, di, dj, fill):
    """out[i, j] = a[i + di, j + dj], `fill` off the grid."""
    out = np.full_like(a, fill)
    nx, ny = a.shape
    xs = slice(max(0, -di), nx - max(0, di))
    ys = slice(max(0, -dj), ny - max(0, dj))
    xd = slice(max(0, di), nx - max(0, -di))
    yd = slice(max(0, dj), ny - max(0, -dj))
    out[xs, ys] = a[xd, yd]
    return out


def upper_gradient(dom, u) -> GradientField:
    """Max over open 8-neighbours of |u(c) - u(n)| / dist(c, n).

    Diagonal neighbours count only when both cells sharing the corner are
    open, matching the moves allowed in the distance graph.
    """
    v = _values(u)
    h = dom.h
    op = dom.open
    g = np.zeros_like(v)
    for di, dj in OFFSETS8:
        ok = op & _shift(op, di, dj, False)
        if di and dj:
            ok &= _shift(op, di, 0, False) & _shift(op, 0, dj, False)
        dist = h * np.hypot(di, dj)
        diff = np.abs(v - _shift(v, di, dj, 0.0)) / dist
        g = np.where(ok, np.maximum(g, diff), g)
    return GradientField(dom, np.where(op, g, 0.0))


@dataclass
class NormParts:
    total: float
    lp_part: float
    energy_part: float


def edge_energy(dom, u, p):
    """The 4-neighbour edge p-energy used by the solvers (no ghost terms).

    Sum over edges between open cells of ((w_a + w_b) / 2) |u_a - u_b|^p / h^p.
    """
    v = _values(u)
    op = dom.open
    w = dom.weight
    total = 0.0
    for di, dj in ((1, 0), (0, 1)):
        ok = op & _shift(op, di, dj, False)
        diff = np.abs(v - _shift(v, di, dj, 0.0))
        we = 0.5 * (w + _shift(w, di, dj, 0.0))
        total += float(np.sum(np.where(ok, we * diff**p, 0.0)))
    return total / dom.h**p


def newtonian_norm(dom, u, p, stencil="max") -> NormParts:
    """Discrete Newtonian norm (sum w|u|^p + energy)^(1/p).

    stencil="max" uses the max-of-neighbours upper gradient; stencil="edge"
    uses the edge energy minimized by the solvers.
    """
    if not p > 1:
        raise BadExponent("p must exceed 1")
    v = _values(u)
    lp = float(np.sum(dom.weight * np.abs(v) ** p))
    if stencil == "max":
        g = upper_gradient(dom, v).g
        en = float(np.sum(dom.weight * g**p))
    elif stencil == "edge":
        en = edge_energy(dom, v, p)
    else:
        raise BadInput(f"unknown stencil {stencil!r}")
    return NormParts((lp + en) ** (1.0 / p), lp, en)


@dataclass
class PathCheck:
    passed: bool
    slack: float


def verify_upper_gradient_along_path(dom, u, g, path) -> PathCheck:
    """Check |u(first) - u(last)| <= sum of max(g_a, g_b) * |a - b| along a path.

    `path` is a sequence of flat cell indices, consecutive cells 8-adjacent
    and open.  The slack is the right side minus the left side.
    """
    v = _values(u).ravel()
    gv = (g.g if isinstance(g, GradientField) else np.asarray(g, dtype=float)).ravel()
    path = np.asarray(path, dtype=np.int64)
    if path.ndim != 1 or len(path) == 0:
        raise BrokenPath("empty path")
    ny = dom.spec.ny
    if np.any(path < 0) or np.any(path >= dom.spec.size) or not np.all(dom.open_flat[path]):
        raise BrokenPath("path leaves the open cells")
    i, j = np.divmod(path, ny)
    di, dj = np.diff(i), np.diff(j)
    if np.any(np.maximum(np.abs(di), np.abs(dj)) != 1):
        raise BrokenPath("consecutive path cells are not 8-adjacent")
    length = dom.h * np.hypot(di, dj)
    rhs = float(np.sum(np.maximum(gv[path[:-1]], gv[path[1:]]) * length))
    lhs = abs(v[path[0]] - v[path[-1]])
    # relative rounding allowance for long telescoping sums
    tol = 1e-12 * max(1.0, rhs)
    return PathCheck(lhs <= rhs + tol, rhs - lhs)
