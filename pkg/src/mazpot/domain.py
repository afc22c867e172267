"""Planar grid domains.

A domain lives on a uniform grid of square cells.  Each cell is open (part
of the domain) or closed.  Closed cells 4-adjacent to an open cell are the
boundary vertices of the domain.  Arrays are indexed ``[i, j]`` with ``i``
along x and ``j`` along y; flat cell indices are ``i * ny + j``.

Recipes always leave at least one ring of closed padding cells around the
region so that every boundary vertex lies inside the grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from fractions import Fraction

import numpy as np
from scipy import ndimage

from .errors import BadInput, BadParams, InvalidCell, NotRefinable, ResolutionTooCoarse

# 4-neighbour offsets in (di, dj), in the fixed direction order E, W, N, S
DIRS = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=np.int64)
OPPOSITE = np.array([1, 0, 3, 2])
FOUR = ndimage.generate_binary_structure(2, 1)

_EPS = 1e-12


@dataclass(frozen=True)
class GridSpec:
    x0: float
    y0: float
    h: float
    nx: int
    ny: int

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def size(self):
        return self.nx * self.ny

    def centers(self):
        xs = self.x0 + (np.arange(self.nx) + 0.5) * self.h
        ys = self.y0 + (np.arange(self.ny) + 0.5) * self.h
        return np.meshgrid(xs, ys, indexing="ij")

    def center(self, idx):
        """Center coordinates of flat cell indices (array or scalar)."""
        idx = np.asarray(idx)
        i, j = np.divmod(idx, self.ny)
        return np.stack([self.x0 + (i + 0.5) * self.h, self.y0 + (j + 0.5) * self.h], axis=-1)

    def locate(self, x, y):
        """Flat index of the cell whose half-open square contains (x, y)."""
        i = int(math.floor((x - self.x0) / self.h + 1e-9))
        j = int(math.floor((y - self.y0) / self.h + 1e-9))
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise InvalidCell(f"point ({x}, {y}) is outside the grid")
        return i * self.ny + j

    def nearest(self, x, y):
        """Flat index of the cell whose center is nearest to (x, y)."""
        i = int(round((x - self.x0) / self.h - 0.5))
        j = int(round((y - self.y0) / self.h - 0.5))
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise InvalidCell(f"point ({x}, {y}) is outside the grid")
        return i * self.ny + j

    def bounds(self):
        """Left, right, bottom and top edges of every cell, shape (nx, ny)."""
        xl = self.x0 + np.arange(self.nx) * self.h
        yl = self.y0 + np.arange(self.ny) * self.h
        XL, YL = np.meshgrid(xl, yl, indexing="ij")
        return XL, XL + self.h, YL, YL + self.h

    def to_dict(self):
        return dict(x0=self.x0, y0=self.y0, h=self.h, nx=self.nx, ny=self.ny)


@dataclass(frozen=True)
class DomainRecipe:
    """Name of a domain family plus its parameters."""

    name: str
    params: dict = field(default_factory=dict)

    def to_config(self):
        lines = [f"name = {self.name}"]
        for k in sorted(self.params):
            v = self.params[k]
            if isinstance(v, (list, tuple)):
                v = ",".join(str(t) for t in v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_config(cls, text):
        kv = parse_config(text)
        name = kv.pop("name", None)
        if name is None:
            raise BadInput("recipe config has no 'name' key")
        return cls(str(name), kv)


def parse_value(s):
    s = s.strip()
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    if s.lower() in ("true", "false"):
        return s.lower() == "true"
    if "," in s:
        return [parse_value(t) for t in s.split(",") if t.strip()]
    return s


def parse_config(text):
    """Parse flat ``key = value`` lines; '#' starts a comment."""
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BadInput(f"malformed config line: {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = parse_value(v)
    return out


class CellSet:
    """A set of cells given by sorted unique flat indices."""

    def __init__(self, spec: GridSpec, cells):
        self.spec = spec
        self.cells = np.unique(np.asarray(cells, dtype=np.int64).ravel())

    def __len__(self):
        return len(self.cells)

    def __contains__(self, idx):
        k = np.searchsorted(self.cells, idx)
        return k < len(self.cells) and self.cells[k] == idx

    def mask(self):
        m = np.zeros(self.spec.size, dtype=bool)
        m[self.cells] = True
        return m.reshape(self.spec.shape)

    def centers(self):
        return self.spec.center(self.cells)

    def __or__(self, other):
        return CellSet(self.spec, np.union1d(self.cells, other.cells))

    def __repr__(self):
        return f"CellSet(n={len(self)})"


class GridDomain:
    """Open cells of a grid together with their integration weights."""

    def __init__(self, spec, open_mask, weight=None, recipe=None, info=None):
        open_mask = np.asarray(open_mask, dtype=bool)
        if open_mask.shape != spec.shape:
            raise BadInput("mask shape does not match the grid")
        self.spec = spec
        self.open = open_mask
        if weight is None:
            weight = np.where(open_mask, spec.h**2, 0.0)
        self.weight = np.where(open_mask, weight, 0.0)
        self.recipe = recipe
        self.info = dict(info or {})

    @property
    def h(self):
        return self.spec.h

    @property
    def feature_scale(self):
        """Smallest geometric feature the recipe resolves (defaults to h)."""
        return float(self.info.get("feature_scale", self.spec.h))

    @cached_property
    def open_flat(self):
        return self.open.ravel()

    @cached_property
    def open_cells(self):
        return np.flatnonzero(self.open_flat)

    @cached_property
    def boundary_mask(self):
        """Closed cells 4-adjacent to an open cell."""
        near = ndimage.binary_dilation(self.open, structure=FOUR)
        return near & ~self.open

    @cached_property
    def anchors(self):
        """Flat indices of the boundary vertices, sorted."""
        return np.flatnonzero(self.boundary_mask.ravel())

    @cached_property
    def neighbors(self):
        """(size, 4) array of flat neighbour indices, -1 off the grid."""
        nx, ny = self.spec.shape
        I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        out = np.full((nx * ny, 4), -1, dtype=np.int64)
        for d, (di, dj) in enumerate(DIRS):
            ii, jj = I + di, J + dj
            ok = (ii >= 0) & (ii < nx) & (jj >= 0) & (jj < ny)
            out[:, d] = np.where(ok, ii * ny + jj, -1).ravel()
        return out

    @cached_property
    def ghost_edges(self):
        """Edges from open cells to boundary vertices.

        Returns arrays (cell, direction, anchor) sorted by cell then direction.
        """
        nb = self.neighbors[self.open_cells]
        oc = np.repeat(self.open_cells, 4)
        dd = np.tile(np.arange(4), len(self.open_cells))
        tgt = nb.ravel()
        ok = tgt >= 0
        ok[ok] = ~self.open_flat[tgt[ok]]
        return oc[ok], dd[ok], tgt[ok]

    def is_open(self, idx):
        return bool(self.open_flat[idx])

    def cell_at(self, x, y, require_open=True):
        idx = self.spec.locate(x, y)
        if require_open and not self.open_flat[idx]:
            raise InvalidCell(f"cell at ({x}, {y}) is not open")
        return idx

    def anchor_at(self, x, y):
        """Boundary vertex nearest to (x, y)."""
        pts = self.spec.center(self.anchors)
        k = int(np.argmin(np.hypot(pts[:, 0] - x, pts[:, 1] - y)))
        return int(self.anchors[k])

    def open_cell_near(self, x, y):
        pts = self.spec.center(self.open_cells)
        k = int(np.argmin(np.hypot(pts[:, 0] - x, pts[:, 1] - y)))
        return int(self.open_cells[k])

    def __repr__(self):
        name = self.recipe.name if self.recipe else "custom"
        return f"GridDomain({name}, h={self.h}, grid={self.spec.nx}x{self.spec.ny}, open={len(self.open_cells)})"

    # serialization
    def to_json(self):
        return json.dumps(
            {
                "grid": self.spec.to_dict(),
                "recipe": None if self.recipe is None else {"name": self.recipe.name, "params": self.recipe.params},
                "info": self.info,
                "open": np.packbits(self.open.ravel()).tolist(),
                "weight_mode": self.info.get("weight", "lebesgue"),
            }
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        spec = GridSpec(**d["grid"])
        bits = np.unpackbits(np.array(d["open"], dtype=np.uint8))[: spec.size]
        mask = bits.astype(bool).reshape(spec.shape)
        rec = d.get("recipe")
        recipe = None if rec is None else DomainRecipe(rec["name"], rec["params"])
        info = d.get("info", {})
        return cls(spec, mask, _weights(spec, mask, info.get("weight", "lebesgue")), recipe, info)

    def to_pgm(self, path):
        write_pgm(path, np.where(self.open, 255, 0).astype(np.uint8))


def write_pgm(path, img):
    """Write an (nx, ny) uint8 array as binary PGM, y pointing up."""
    rows = np.ascontiguousarray(np.flipud(np.asarray(img, dtype=np.uint8).T))
    with open(path, "wb") as fh:
        fh.write(f"P5\n{rows.shape[1]} {rows.shape[0]}\n255\n".encode())
        fh.write(rows.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise BadInput("not a binary PGM file")
    w, hgt = int(parts[1]), int(parts[2])
    rows = np.frombuffer(parts[4][: w * hgt], dtype=np.uint8).reshape(hgt, w)
    return np.flipud(rows).T.copy()


# ----------------------------------------------------------------------------
# recipes


def _weights(spec, mask, mode):
    if mode == "lebesgue":
        return np.where(mask, spec.h**2, 0.0)
    if mode == "radial":
        X, Y = spec.centers()
        r = np.hypot(X, Y)
        if np.any(mask & (r < _EPS)):
            raise BadParams("radial weight is singular at an open cell center")
        return np.where(mask, spec.h**2 / np.where(r > 0, r, 1.0), 0.0)
    raise BadParams(f"unknown weight mode {mode!r}")


def _box_grid(h, xa, xb, ya, yb, center_x=None, center_y=None, pad=1):
    """Grid covering [xa, xb] x [ya, yb] with `pad` closed rings.

    If center_x is given the grid is shifted so that center_x is a cell
    center, else the grid lines pass through xa (same for y).
    """

    def axis(a, b, c):
        if c is None:
            start = a - pad * h
        else:
            k = math.ceil((c - a) / h - 1e-9) + pad
            start = c - h / 2 - k * h
        n = math.ceil((b + pad * h - start) / h - 1e-9)
        return start, n

    x0, nx = axis(xa, xb, center_x)
    y0, ny = axis(ya, yb, center_y)
    return GridSpec(x0, y0, h, nx, ny)


def _inside_box(spec, xa, xb, ya, yb):
    XL, XR, YL, YR = spec.bounds()
    return (XL >= xa - _EPS) & (XR <= xb + _EPS) & (YL >= ya - _EPS) & (YR <= yb + _EPS)


def _vertical_wall(spec, x, ya, yb):
    """Cells whose half-open square meets the segment {x} x [ya, yb)."""
    XL, XR, YL, YR = spec.bounds()
    return (XL <= x + _EPS) & (x + _EPS < XR) & (YL < yb - _EPS) & (YR > ya + _EPS)


def _check_h(h):
    if not (isinstance(h, (int, float)) and h > 0 and math.isfinite(h)):
        raise BadParams("grid spacing h must be a positive number")


def _default_depth(h, gap_factor):
    """Largest J with 2^-J >= gap_factor * h (at least 0)."""
    return max(0, int(math.floor(math.log2(1.0 / (gap_factor * h)) + 1e-9)))


def _square(h, side=1.0):
    spec = _box_grid(h, 0.0, side, 0.0, side)
    return spec, _inside_box(spec, 0.0, side, 0.0, side), {}


def _rectangle(h, width=2.0, height=1.0):
    spec = _box_grid(h, 0.0, width, 0.0, height)
    return spec, _inside_box(spec, 0.0, width, 0.0, height), {}


def _slit_disc(h):
    if h > 0.25:
        raise ResolutionTooCoarse("slit disc needs h <= 1/4")
    spec = _box_grid(h, -1.0, 1.0, -1.0, 1.0, center_x=0.0, center_y=0.0)
    XL, XR, YL, YR = spec.bounds()
    inside = np.ones(spec.shape, bool)
    for cx, cy in ((XL, YL), (XL, YR), (XR, YL), (XR, YR)):
        inside &= cx**2 + cy**2 <= 1.0 + _EPS
    slit = (YL <= _EPS) & (_EPS < YR) & (XL <= 1.0 + _EPS) & (XR > _EPS)
    return spec, inside & ~slit, {"feature_scale": h}


def _cusp(h, beta=3.0):
    if beta <= 0:
        raise BadParams("cusp exponent beta must be positive")
    spec = _box_grid(h, 0.0, 1.0, 0.0, 1.0)
    XL, XR, YL, YR = spec.bounds()
    mask = _inside_box(spec, 0.0, 1.0, 0.0, 1.0) & (YR <= np.clip(XL, 0, None) ** beta + _EPS)
    if not mask.any():
        raise ResolutionTooCoarse("cusp has no open cell at this resolution")
    return spec, mask, {}


def _slit_positions_ok(xs, h, what):
    xs = np.sort(np.asarray(xs, float))
    if len(xs) > 1 and np.min(np.diff(xs)) < 3 * h - _EPS:
        raise ResolutionTooCoarse(f"{what}: gaps between walls must span at least two open cells")


def _comb(h, J=None):
    if J is None:
        J = _default_depth(h, 4.0)
    J = int(J)
    if J < 0:
        raise BadParams("comb depth J must be >= 0")
    xs = [2.0**-j for j in range(J + 1)]
    _slit_positions_ok(xs + [0.0], h, "comb")
    spec = _box_grid(h, 0.0, 2.0, -1.0, 1.0, center_x=0.0)
    mask = _inside_box(spec, 0.0, 2.0, -1.0, 1.0)
    for s in xs:
        mask &= ~_vertical_wall(spec, s, 0.0, 1.0)
    return spec, mask, {"J": J, "feature_scale": 2.0**-J, "slits": xs}


def _thick_comb(h, J=None):
    if J is None:
        J = _default_depth(h, 24.0)
    J = int(J)
    if J < 0 or 2.0**-J / 8 < 3 * h - _EPS:
        raise ResolutionTooCoarse("thick comb: gaps between rectangles are not resolved")
    spec = _box_grid(h, 0.0, 2.0, -1.0, 1.0, center_x=0.0)
    mask = _inside_box(spec, 0.0, 2.0, -1.0, 1.0)
    XL, XR, YL, YR = spec.bounds()
    for j in range(J + 1):
        a, b = 0.75 * 2.0**-j, 1.25 * 2.0**-j
        mask &= ~((XL <= b + _EPS) & (XR > a + _EPS) & (YL < 1.0 - _EPS) & (YR > _EPS))
    return spec, mask, {"J": J, "feature_scale": 2.0**-J / 8}


def _double_comb(h, J=None):
    if J is None:
        J = _default_depth(h, 4.0)
    J = int(J)
    if J < 1:
        raise BadParams("double comb depth J must be >= 1")
    xs = [0.0] + [s * 2.0**-j for j in range(1, J + 1) for s in (1, -1)]
    _slit_positions_ok(xs, h, "double comb")
    spec = _box_grid(h, -1.0, 1.0, -1.0, 1.0, center_x=0.0)
    mask = _inside_box(spec, -1.0, 1.0, -1.0, 1.0)
    for s in xs:
        mask &= ~_vertical_wall(spec, s, 0.0, 1.0)
    return spec, mask, {"J": J, "feature_scale": 2.0**-J, "slits": sorted(xs)}


def _countable_comb(h, J=None):
    if J is None:
        J = _default_depth(h, 8.0)
    J = int(J)
    main = [2.0**-j for j in range(J + 1)]
    extra = []
    for j in range(J + 1):
        k = 3
        while 2.0 ** (-j - k - 1) >= 3 * h - _EPS:
            extra += [2.0**-j * (1 + 2.0**-k), 2.0**-j * (1 - 2.0**-k)]
            k += 1
    xs = main + extra
    _slit_positions_ok(xs + [0.0], h, "countable comb")
    spec = _box_grid(h, 0.0, 2.0, -1.0, 1.0, center_x=0.0)
    mask = _inside_box(spec, 0.0, 2.0, -1.0, 1.0)
    for s in xs:
        mask &= ~_vertical_wall(spec, s, 0.0, 1.0)
    return spec, mask, {"J": J, "feature_scale": 2.0**-J, "slits": sorted(xs)}


# Cantor constructions


def cantor_c(rule, n):
    """The sequence c_n for the named rules, as exact fractions."""
    if rule == "pow2":
        return Fraction(1, 2**n)
    if rule == "pow2sq":
        return Fraction(1, 2 ** (n * n))
    raise BadParams(f"unknown Cantor rule {rule!r}")


def cantor_sequence(c, m):
    """c_0..c_m as Fractions from a rule name or an explicit list."""
    if isinstance(c, str):
        return [cantor_c(c, n) for n in range(m + 1)]
    seq = [Fraction(v).limit_denominator(10**15) if isinstance(v, float) else Fraction(v) for v in c]
    if len(seq) < m + 1:
        raise BadParams("explicit c sequence shorter than the requested generation")
    if seq[0] <= 0 or seq[0] > Fraction(1, 3):
        raise BadParams("explicit c sequence needs 0 < c_0 <= 1/3")
    if any(b >= a or b <= 0 for a, b in zip(seq, seq[1:])):
        raise BadParams("c sequence must be positive and strictly decreasing")
    return seq[: m + 1]


def cantor_alpha(cs, n):
    return Fraction(1, 2**n) * (1 + cs[n])


def cantor_intervals(cs, n):
    """Left end points of the 2^n generation-n intervals (exact)."""
    left = [Fraction(0)]
    for g in range(1, n + 1):
        shift = cantor_alpha(cs, g - 1) - cantor_alpha(cs, g)
        left = [a + s for a in left for s in (Fraction(0), shift)]
    return left


def _box_dist_range(spec, q):
    """Min and max over each closed cell of the distance to the square q."""
    XL, XR, YL, YR = spec.bounds()
    qx0, qx1, qy0, qy1 = q
    dx = np.maximum.reduce([np.zeros_like(XL), qx0 - XR, XL - qx1])
    dy = np.maximum.reduce([np.zeros_like(YL), qy0 - YR, YL - qy1])
    dmin = np.hypot(dx, dy)
    dmax = np.zeros_like(XL)
    for cx, cy in ((XL, YL), (XL, YR), (XR, YL), (XR, YR)):
        ex = np.maximum.reduce([np.zeros_like(cx), qx0 - cx, cx - qx1])
        ey = np.maximum.reduce([np.zeros_like(cy), qy0 - cy, cy - qy1])
        dmax = np.maximum(dmax, np.hypot(ex, ey))
    return dmin, dmax


def _cantor(h, m=None, c="pow2", arcs=True, thick=False):
    if m is None:
        m = 0
        cs = cantor_sequence(c, 12)
        while m < 12:
            n = m + 1
            alpha = float(cantor_alpha(cs, n))
            theta = float(cantor_alpha(cs, n - 1) - 2 * cantor_alpha(cs, n))
            gap = 2.0**-n * theta / 6 if arcs else theta
            if thick:
                gap /= 2
            if gap < 4 * h or alpha < 4 * h:
                break
            m = n
    m = int(m)
    if m < 0:
        raise BadParams("generation m must be >= 0")
    cs = cantor_sequence(c, max(m, 1))
    spec = _box_grid(h, -1.0, 3.0, -1.0, 3.0)
    mask = _inside_box(spec, -1.0, 3.0, -1.0, 3.0)
    XL, XR, YL, YR = spec.bounds()
    am = float(cantor_alpha(cs, m))
    if am < 2 * h:
        raise ResolutionTooCoarse("Cantor squares smaller than two cells")
    lefts = [float(a) for a in cantor_intervals(cs, m)]
    for a in lefts:
        for b in lefts:
            # cells whose open square meets the closed square
            mask &= ~((XL < a + am - _EPS) & (XR > a + _EPS) & (YL < b + am - _EPS) & (YR > b + _EPS))
    feature = am
    if arcs:
        for n in range(1, m + 1):
            an = float(cantor_alpha(cs, n))
            theta = float(cantor_alpha(cs, n - 1) - 2 * cantor_alpha(cs, n))
            step = 2.0**-n * theta / 6
            rho = step / 4 if thick else 0.0
            if (step - 2 * rho) < 3 * h - _EPS:
                raise ResolutionTooCoarse("Cantor arcs closer than three cells")
            feature = min(feature, step - 2 * rho)
            ln = [float(a) for a in cantor_intervals(cs, n)]
            for a in ln:
                for b in ln:
                    dmin, dmax = _box_dist_range(spec, (a, a + an, b, b + an))
                    for k in range(2**n + 1):
                        t = theta / 6 * (1 + 2.0**-n * k)
                        wall = (dmin <= t + rho + _EPS) & (dmax >= t - rho - _EPS)
                        if k % 2 == 0:
                            wall &= XR >= a - rho - _EPS
                        else:
                            wall &= XL <= a + an + rho + _EPS
                        mask &= ~wall
    info = {"m": m, "min_gap": feature, "c": c if isinstance(c, str) else [str(v) for v in cs]}
    return spec, mask, info


RECIPES = {
    "square": _square,
    "rectangle": _rectangle,
    "slit_disc": _slit_disc,
    "cusp": _cusp,
    "comb": _comb,
    "thick_comb": _thick_comb,
    "double_comb": _double_comb,
    "countable_comb": _countable_comb,
    "cantor_arcs": lambda h, m=None: _cantor(h, m, "pow2", arcs=True),
    "cantor_thick": lambda h, m=None: _cantor(h, m, "pow2", arcs=True, thick=True),
    "cantor_square": lambda h, m=None, c="pow2sq": _cantor(h, m, c, arcs=False),
}


def gen_domain(recipe, h, weight="lebesgue") -> GridDomain:
    """Rasterize a recipe at spacing h.

    `recipe` is a DomainRecipe or a recipe name.  Parameters not given use
    the recipe defaults, which for the truncated families pick the deepest
    truncation the resolution supports.
    """
    if isinstance(recipe, str):
        recipe = DomainRecipe(recipe)
    _check_h(h)
    if recipe.name == "custom_mask":
        raise NotRefinable("custom masks are built with from_mask")
    fn = RECIPES.get(recipe.name)
    if fn is None:
        raise BadParams(f"unknown recipe {recipe.name!r}")
    params = dict(recipe.params)
    weight = params.pop("weight", weight)
    try:
        spec, mask, info = fn(h, **params)
    except TypeError as exc:
        raise BadParams(f"bad parameters for {recipe.name}: {exc}") from None
    info = dict(info)
    info["weight"] = weight
    info["recipe"] = recipe.name
    if not mask.any():
        raise ResolutionTooCoarse("no open cells at this resolution")
    return GridDomain(spec, mask, _weights(spec, mask, weight), recipe, info)


def from_mask(mask, h=1.0, x0=0.0, y0=0.0, weight=None):
    """Domain from an explicit boolean mask (a custom_mask domain)."""
    mask = np.asarray(mask, dtype=bool)
    spec = GridSpec(x0, y0, h, *mask.shape)
    return GridDomain(spec, mask, weight, None, {"recipe": "custom_mask"})


def domain_measure(dom, cells=None):
    """Total weight of the open cells, or of the given open cells."""
    if cells is None:
        return float(dom.weight.sum())
    idx = cells.cells if isinstance(cells, CellSet) else np.asarray(cells)
    return float(dom.weight.ravel()[idx].sum())


def components(dom, restrict=None):
    """4-connected components of the open cells, largest first.

    `restrict` optionally limits the search to a boolean mask.
    """
    m = dom.open if restrict is None else (dom.open & restrict)
    lab, n = ndimage.label(m, structure=FOUR)
    if n == 0:
        return []
    flat = lab.ravel()
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=n + 1)
    starts = np.concatenate([[0], np.cumsum(counts)])
    comps = [CellSet(dom.spec, order[starts[k] : starts[k + 1]]) for k in range(1, n + 1)]
    comps.sort(key=lambda c: (-len(c), c.cells[0]))
    return comps


def refine(dom):
    """The same recipe at half the spacing (truncation defaults deepen)."""
    if dom.recipe is None:
        raise NotRefinable("domain has no recipe to refine")
    return gen_domain(dom.recipe, dom.h / 2, dom.info.get("weight", "lebesgue"))
