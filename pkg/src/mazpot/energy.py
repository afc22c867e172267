"""Discrete p-energies on grids and their Newton-type minimizers.

The energy of a vector x of free values is

    E(x) = sum_i m_i |x_i|^p
         + sum_e k_e |x_a(e) - x_b(e)|^p
         + sum_t c_t |x_i(t) - v_t|^p

with nonnegative coefficients: cell masses, edges between free values, and
tie terms pulling a free value toward a fixed one (boundary data or a
constrained cell).  Every term is a convex function of a difference, which
makes the discrete comparison principle exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import BadExponent

P_MIN, P_MAX = 1.1, 16.0
DIRECT_MAX = 120_000


def check_exponent(p):
    if not (P_MIN <= p <= P_MAX):
        raise BadExponent(f"p = {p} outside the supported range [{P_MIN}, {P_MAX}]")


class PEnergy:
    def __init__(self, n, p, edges=None, ties=None, mass=None, const=0.0):
        self.n = int(n)
        self.p = float(p)
        e = edges if edges is not None else (np.zeros(0, int), np.zeros(0, int), np.zeros(0))
        t = ties if ties is not None else (np.zeros(0, int), np.zeros(0), np.zeros(0))
        self.ea, self.eb, self.ek = (np.asarray(e[0], np.int64), np.asarray(e[1], np.int64), np.asarray(e[2], float))
        self.ti, self.tv, self.tk = (np.asarray(t[0], np.int64), np.asarray(t[1], float), np.asarray(t[2], float))
        self.mass = np.zeros(self.n) if mass is None else np.asarray(mass, float)
        self.const = float(const)
        self._pattern = None

    def _phi(self, t, eps):
        if eps == 0.0:
            return np.abs(t) ** self.p
        return (t * t + eps * eps) ** (self.p / 2) - eps**self.p

    def _dphi(self, t, eps):
        if eps == 0.0:
            return self.p * np.sign(t) * np.abs(t) ** (self.p - 1)
        return self.p * t * (t * t + eps * eps) ** (self.p / 2 - 1)

    def _d2phi(self, t, eps, eps2=0.0):
        p = self.p
        if p == 2.0:
            return np.full(t.shape, 2.0)
        if eps == 0.0:
            return p * (p - 1) * (t * t + eps2) ** ((p - 2) / 2)
        s = t * t + eps * eps
        return p * s ** (p / 2 - 2) * ((p - 1) * t * t + eps * eps)

    def value(self, x, eps=0.0):
        de = x[self.ea] - x[self.eb]
        dt = x[self.ti] - self.tv
        return (
            float(np.dot(self.mass, self._phi(x, eps)))
            + float(np.dot(self.ek, self._phi(de, eps)))
            + float(np.dot(self.tk, self._phi(dt, eps)))
            + self.const
        )

    def grad(self, x, eps=0.0):
        de = x[self.ea] - x[self.eb]
        fe = self.ek * self._dphi(de, eps)
        g = self.mass * self._dphi(x, eps)
        g += np.bincount(self.ea, fe, self.n) - np.bincount(self.eb, fe, self.n)
        g += np.bincount(self.ti, self.tk * self._dphi(x[self.ti] - self.tv, eps), self.n)
        return g

    def flux(self, x):
        """Sum of the absolute values of the terms making up grad(x), per variable."""
        fe = np.abs(self.ek * self._dphi(x[self.ea] - x[self.eb], 0.0))
        f = np.abs(self.mass * self._dphi(x, 0.0))
        f += np.bincount(self.ea, fe, self.n) + np.bincount(self.eb, fe, self.n)
        f += np.bincount(self.ti, np.abs(self.tk * self._dphi(x[self.ti] - self.tv, 0.0)), self.n)
        return f

    def hessian(self, x, eps2=0.0, eps=0.0):
        """Sparse Hessian of the (eps-smoothed) energy.

        With eps = 0, eps2 > 0 regularizes |t|^(p-2) at t = 0.
        """
        de = x[self.ea] - x[self.eb]
        ce = self.ek * self._d2phi(de, eps, eps2)
        diag = self.mass * self._d2phi(x, eps, eps2)
        diag += np.bincount(self.ea, ce, self.n) + np.bincount(self.eb, ce, self.n)
        diag += np.bincount(self.ti, self.tk * self._d2phi(x[self.ti] - self.tv, eps, eps2), self.n)
        rows = np.concatenate([self.ea, self.eb, np.arange(self.n)])
        cols = np.concatenate([self.eb, self.ea, np.arange(self.n)])
        vals = np.concatenate([-ce, -ce, diag])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))

    def diff_scale(self, x):
        """Root mean square of the edge and tie differences."""
        de = np.concatenate([x[self.ea] - x[self.eb], x[self.ti] - self.tv])
        return float(np.sqrt(np.mean(de * de))) if len(de) else 1.0

    def is_quadratic(self):
        return self.p == 2.0


@dataclass
class MinimizeReport:
    energy: float
    iterations: int
    converged: bool
    rel_decrement: float
    monotone: bool
    history: list = field(default_factory=list)
    message: str = ""


try:
    from cvxopt import cholmod as _cholmod
    from cvxopt import matrix as _cvx_matrix
    from cvxopt import spmatrix as _cvx_spmatrix
except ImportError:  # pragma: no cover - optional accelerator
    _cholmod = None

CHOLMOD_MAX = 1_500_000


def _pattern_key(A):
    return (A.shape[0], A.nnz, hash(A.indptr.tobytes()), hash(A.indices.tobytes()))


class LinearSolver:
    """Solve symmetric positive definite systems.

    Sparse Cholesky (CHOLMOD through cvxopt) up to CHOLMOD_MAX unknowns,
    SuperLU up to DIRECT_MAX when cvxopt is missing, AMG-CG otherwise.  A
    `cache` dict lets successive matrices with one sparsity pattern share
    the symbolic Cholesky analysis.
    """

    def __init__(self, A, rtol=1e-12, cache=None):
        self.A = A.tocsr()
        self.rtol = rtol
        n = A.shape[0]
        self.kind = "amg"
        if _cholmod is not None and n <= CHOLMOD_MAX:
            try:
                self._factor_cholmod(cache)
                self.kind = "cholmod"
            except ArithmeticError:
                # not numerically positive definite; fall through to LU
                pass
        if self.kind == "amg" and n <= DIRECT_MAX:
            self._lu = splu(self.A.tocsc(), permc_spec="MMD_AT_PLUS_A")
            self.kind = "splu"
        if self.kind == "amg":
            import pyamg

            # the Hessians are weighted graph Laplacians plus a diagonal
            # (M-matrices), where classical AMG is the faster choice
            self._ml = pyamg.ruge_stuben_solver(self.A, max_coarse=500)

    @property
    def direct(self):
        return self.kind != "amg"

    def _factor_cholmod(self, cache):
        L = sp.tril(self.A, format="csr")
        L.sort_indices()
        key = _pattern_key(L)
        coo = L.tocoo()
        M = _cvx_spmatrix(_cvx_matrix(coo.data), _cvx_matrix(coo.row.astype(np.int64)),
                          _cvx_matrix(coo.col.astype(np.int64)), size=L.shape)
        sym = cache.get("cholmod") if cache is not None else None
        if sym is None or sym[0] != key:
            sym = (key, _cholmod.symbolic(M, uplo="L"))
            if cache is not None:
                cache["cholmod"] = sym
        F = sym[1]
        _cholmod.numeric(M, F)
        self._F = F

    def solve(self, b, x0=None):
        if self.kind == "cholmod":
            B = _cvx_matrix(np.asarray(b, float).copy())
            _cholmod.solve(self._F, B)
            return np.array(B).ravel()
        if self.kind == "splu":
            return self._lu.solve(b)
        x = self._ml.solve(b, x0=x0, tol=self.rtol, accel="cg", maxiter=500)
        # one refinement sweep against the true residual
        r = b - self.A @ x
        if np.linalg.norm(r) > self.rtol * max(np.linalg.norm(b), 1e-300):
            x = x + self._ml.solve(r, tol=self.rtol, accel="cg", maxiter=500)
        return x


def _newton(energy, x, lower, eps, xtol, max_iter, cache, hist, rtol=1e-12):
    """Damped (projected) Newton on the eps-smoothed energy.

    rtol is the relative residual of the inner linear solves when they are
    iterative; loose values give inexact Newton steps.
    """
    n = energy.n
    quad = energy.is_quadratic()
    E = energy.value(x, eps)
    monotone = True
    converged = False
    rel = math.inf
    msg = "iteration cap"
    it = 0
    for it in range(1, max_iter + 1):
        g = energy.grad(x, eps)
        eps2 = 0.0
        if not quad and eps == 0.0:
            eps2 = max(1e-6 * energy.diff_scale(x) ** 2, 1e-30)
        if lower is None:
            free = None
        else:
            active = (x <= lower + 1e-13 * (1 + np.abs(lower))) & (g > 0)
            free = ~active
        if quad and free is None and "lin" in cache:
            lin = cache["lin"]
        else:
            H = energy.hessian(x, eps2, eps)
            if free is not None and not free.all():
                idx = np.flatnonzero(free)
                H = H[idx][:, idx]
            lin = LinearSolver(H, rtol, cache) if H.shape[0] else None
            if quad and free is None:
                cache["lin"] = lin
        d = np.zeros(n)
        if free is None:
            d = -lin.solve(g)
        elif free.any():
            d[free] = -lin.solve(g[free])
        if not np.all(np.isfinite(d)):
            msg = "non-finite Newton step"
            break
        scale_x = max(1.0, float(np.max(np.abs(x))))
        # backtracking line search along the projected arc
        alpha = 1.0
        accepted = False
        for _ in range(60):
            xn = x + alpha * d
            if lower is not None:
                xn = np.maximum(xn, lower)
            En = energy.value(xn, eps)
            slope = float(np.dot(g, xn - x))
            if En <= E + 1e-4 * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # no decrease found; fine only if the predicted decrease is at rounding level
            pred = -float(np.dot(g, d))
            converged = pred <= 1e-11 * max(abs(E), 1e-300) or float(np.max(np.abs(d))) <= 1e3 * xtol * scale_x
            msg = "energy at rounding floor" if converged else "line search failed"
            break
        step = float(np.max(np.abs(xn - x)))
        if En > E:
            monotone = False
        rel = (E - En) / max(abs(En), 1e-300)
        x, E = xn, En
        hist.append(E)
        if step <= xtol * scale_x:
            converged = True
            msg = "step below xtol"
            break
        if quad and free is None and it >= 2 and rel < 1e-15:
            converged = True
            msg = "quadratic solve refined"
            break
    return x, E, it, converged, rel, monotone, msg


def minimize(energy: PEnergy, x0=None, lower=None, tol=1e-8, xtol=1e-11, max_iter=200, solver_cache=None):
    """Minimize a PEnergy, optionally subject to x >= lower.

    Damped Newton with Armijo backtracking; with a lower bound the
    free/active split of projected Newton is used.  For p < 2 the kink of
    |t|^p at 0 stalls plain Newton, so the energy is first smoothed to
    (t^2 + eps^2)^(p/2) and eps is driven to zero in stages before a final
    pass on the true energy.  Stops when the largest accepted update is
    below xtol (relative to max(1, |x|_inf)) or the energy stops decreasing
    at rounding level; after the iteration cap, convergence means the
    relative energy decrement fell below `tol`.
    """
    n = energy.n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if lower is not None:
        lower = np.asarray(lower, float)
        x = np.maximum(x, lower)
    if n == 0:
        e = energy.value(x)
        return x, MinimizeReport(e, 0, True, 0.0, True, [e])
    cache = solver_cache if solver_cache is not None else {}
    hist = [energy.value(x)]
    total = 0
    monotone = True
    if energy.p < 2.0:
        scale = energy.diff_scale(x) or 1.0
        eps = 0.1 * scale
        while total < max_iter:
            last = eps <= 1e-10 * scale
            # intermediate stages only need to track the smoothed minimizer
            # to within eps, so their Newton steps can be inexact
            x, E, it, converged, rel, _, msg = _newton(
                energy, x, lower, eps, xtol if last else eps, max_iter - total, cache, [],
                1e-12 if eps <= 1e-8 * scale else 1e-6,
            )
            total += it
            if last:
                break
            # gentle steps keep every stage within a few Newton iterations;
            # large jumps in eps stall on edges whose difference crosses 0
            eps *= 0.1
        E = energy.value(x)
        hist.append(E)
        if msg == "iteration cap":
            converged = False
    else:
        x, E, it, converged, rel, mono, msg = _newton(energy, x, lower, 0.0, xtol, max_iter, cache, hist)
        total += it
    monotone = all(b <= a * (1 + 1e-14) + 1e-300 for a, b in zip(hist, hist[1:]))
    if msg == "iteration cap":
        converged = rel < tol
    return x, MinimizeReport(E, total, converged, rel, monotone, hist, msg)


class GridEnergy:
    """A PEnergy assembled over grid cells.

    ground: boolean (size,) mask of cells carrying values; weight: per-cell
    measure; fixed: (cells, values) of ground cells with prescribed values;
    ties: (cells, values, coefs) extra terms coef |u_c - value|^p on ground
    cells; mass: include sum w |u|^p.  Edges join 4-neighbouring ground
    cells with coefficient (w_a + w_b) / 2 / h^p.
    """

    def __init__(self, spec, ground, weight, p, fixed=None, ties=None, mass=False):
        size = spec.size
        ny = spec.ny
        ground = np.asarray(ground, bool).ravel()
        w = np.asarray(weight, float).ravel()
        hp = spec.h**p
        fixed_val = np.full(size, np.nan)
        if fixed is not None:
            fc, fv = fixed
            fixed_val[np.asarray(fc, np.int64)] = fv
        is_fixed = ~np.isnan(fixed_val) & ground
        free_mask = ground & ~is_fixed
        self.spec = spec
        self.free = np.flatnonzero(free_mask)
        self.fixed_cells = np.flatnonzero(is_fixed)
        self.fixed_vals = fixed_val[self.fixed_cells]
        var = np.full(size, -1, np.int64)
        var[self.free] = np.arange(len(self.free))
        self.var = var
        cells = np.arange(size)
        i = cells // ny
        j = cells % ny
        a_list, b_list = [], []
        right = (i < spec.nx - 1)
        a_list.append(cells[right])
        b_list.append(cells[right] + ny)
        up = (j < ny - 1)
        a_list.append(cells[up])
        b_list.append(cells[up] + 1)
        a = np.concatenate(a_list)
        b = np.concatenate(b_list)
        keep = ground[a] & ground[b]
        a, b = a[keep], b[keep]
        k = 0.5 * (w[a] + w[b]) / hp
        fa, fb = free_mask[a], free_mask[b]
        const = 0.0
        both = fa & fb
        ea, eb, ek = var[a[both]], var[b[both]], k[both]
        # edges with one fixed end become ties
        t1 = fa & ~fb
        t2 = fb & ~fa
        ti = [var[a[t1]], var[b[t2]]]
        tv = [fixed_val[b[t1]], fixed_val[a[t2]]]
        tk = [k[t1], k[t2]]
        nn = ~fa & ~fb
        const += float(np.sum(k[nn] * np.abs(fixed_val[a[nn]] - fixed_val[b[nn]]) ** p))
        if ties is not None:
            tc, tval, tcoef = (np.asarray(t) for t in ties)
            tc = tc.astype(np.int64)
            on_free = free_mask[tc]
            ti.append(var[tc[on_free]])
            tv.append(np.asarray(tval, float)[on_free])
            tk.append(np.asarray(tcoef, float)[on_free])
            fx = ~on_free
            const += float(np.sum(tcoef[fx] * np.abs(fixed_val[tc[fx]] - tval[fx]) ** p))
        mvec = None
        if mass:
            mvec = w[self.free]
            const += float(np.sum(w[self.fixed_cells] * np.abs(self.fixed_vals) ** p))
        self.energy = PEnergy(
            len(self.free), p, (ea, eb, ek),
            (np.concatenate(ti), np.concatenate(tv), np.concatenate(tk)), mvec, const,
        )

    def full(self, x, fill=0.0):
        out = np.full(self.spec.size, fill)
        out[self.free] = x
        out[self.fixed_cells] = self.fixed_vals
        return out.reshape(self.spec.shape)

    def restrict(self, values):
        return np.asarray(values, float).ravel()[self.free]
