"""Acceptance suite: the fourteen criteria at their stated tolerances.

Each test prints one line "criterion N: PASS|FAIL ..." and then asserts.
Runtime limits are part of each criterion and are checked as well.
"""

import time
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from scipy import integrate

from mazpot.capacity import (
    AMBIENT,
    BAR,
    BAR_MAZ,
    CLOSURE_MU,
    TargetSet,
    anchors_where,
    cantor_bound_table,
    cantor_measure_by_counting,
    cantor_measure_parts,
    cells_where,
    comb_closed_form,
    constraint_set,
    cusp_closed_form,
    estimate_capacity,
    evaluate_witness,
)
from mazpot.domain import DomainRecipe, domain_measure, gen_domain
from mazpot.energy import GridEnergy
from mazpot.field import ScalarField, newtonian_norm
from mazpot.mc_oracle import WalkConfig, mc_crosscheck
from mazpot.metric import build_maz_boundary, inner_distance, mazurkiewicz_distance
from mazpot.perron import MazBoundaryData, invariance_experiment, perron_solve
from mazpot.solver import DirichletProblem, GhostData, ObstacleProblem, SolverOptions, solve_dirichlet, solve_obstacle


@pytest.fixture
def report(capsys):
    """report(n, ok, detail, t0, limit): print the criterion line, return the verdict."""

    def emit(n, ok, detail, t0, limit):
        dt = time.time() - t0
        in_time = dt < limit
        verdict = ok and in_time
        with capsys.disabled():
            tail = "" if in_time else f" (over the {limit:.0f} s limit)"
            print(f"\ncriterion {n:2d}: {'PASS' if verdict else 'FAIL'}  {detail}  [{dt:.1f} s{tail}]")
        return verdict

    return emit


def comb_tip(dom):
    return TargetSet(None, list(anchors_where(dom, lambda x, y: (np.abs(x) < 1e-9) & (y > 0) & (y <= 1 + 1e-9))))


def strictly_decreasing(seq):
    return all(b < a for a, b in zip(seq, seq[1:]))


def test_criterion_01_comb_witness(report):
    t0 = time.time()
    closed_err, grid_err = [], []
    for k in range(1, 7):
        w = evaluate_witness("comb_hk", {"k": k, "h": 2.0**-10}, 2.0)
        closed_err.append(abs(w.closed_form - float(3 * Fraction(2, 3) ** k)))
        grid_err.append(w.grid_value / w.closed_form - 1)
    ok_closed = max(closed_err) <= 1e-12
    ok_grid = all(abs(e) <= 0.05 for e in grid_err)
    detail = "closed forms max err {:.1e}; grid rel err {}".format(max(closed_err), ", ".join(f"{e:+.1%}" for e in grid_err))
    assert report(1, ok_closed and ok_grid, detail, t0, 10)


def test_criterion_02_comb_tip_capacity(report):
    t0 = time.time()
    bars, mus = [], []
    for k in (7, 8, 9, 10):
        dom = gen_domain("comb", 2.0**-k)
        E = comb_tip(dom)
        bars.append(estimate_capacity(dom, E, 2.0, BAR).value)
        mus.append(estimate_capacity(dom, E, 2.0, CLOSURE_MU).value)
    ok = bars[-1] <= 0.35 and strictly_decreasing(bars) and min(mus) >= 0.2
    detail = "BAR {} ; CLOSURE_MU min {:.3f}".format(", ".join(f"{b:.4f}" for b in bars), min(mus))
    assert report(2, ok, detail, t0, 300)


def test_criterion_03_cusp(report):
    t0 = time.time()
    beta, p, Rs = 3.0, 2.0, (0.2, 0.1, 0.05)
    quad_err = []
    for R in Rs:
        q, _ = integrate.dblquad(lambda y, x: R ** (-p), 0.0, R, 0.0, lambda x: x**beta)
        quad_err.append(abs(cusp_closed_form(R, beta, p) - q) / q)
    bars, bound_ok = [], True
    for k in (7, 8, 9):
        dom = gen_domain(DomainRecipe("cusp", {"beta": beta}), 2.0**-k)
        a = dom.anchors
        xy = dom.spec.center(a)
        E = TargetSet(None, [int(a[np.argmin(np.hypot(xy[:, 0], xy[:, 1]))])])
        bars.append(estimate_capacity(dom, E, p, BAR).value)
        # the witnesses 1 - x / R, shifted to the resolved tip, are admissible
        x_tip = dom.spec.center(constraint_set(dom, E, BAR)[3])[:, 0].max()
        for R in Rs:
            u = ScalarField.from_function(dom, lambda x, y: np.clip(1 - (x - x_tip) / R, 0.0, 1.0))
            bound_ok &= bars[-1] <= newtonian_norm(dom, u, p, stencil="edge").total ** p + 1e-9
    ok = max(quad_err) <= 0.02 and strictly_decreasing(bars) and bound_ok
    detail = "quadrature rel err {:.1e}; BAR origin {} ; below witness bounds: {}".format(
        max(quad_err), ", ".join(f"{b:.4f}" for b in bars), bound_ok
    )
    assert report(3, ok, detail, t0, 60)


def _random_target(dom, rng):
    """A box of open cells, a run of boundary vertices, or both."""
    (x0, x1, y0, y1) = dom.spec.bounds()[0].min(), dom.spec.bounds()[1].max(), dom.spec.bounds()[2].min(), dom.spec.bounds()[3].max()
    cx, cy = rng.uniform(x0, x1), rng.uniform(y0, y1)
    w = rng.uniform(0.05, 0.3)
    kind = rng.integers(3)
    inner = None
    anchors = []
    if kind in (0, 2):
        inner = cells_where(dom, lambda x, y: (np.abs(x - cx) <= w) & (np.abs(y - cy) <= w))
    if kind in (1, 2):
        anchors = list(anchors_where(dom, lambda x, y: np.hypot(x - cx, y - cy) <= 2 * w))
    return TargetSet(inner, anchors)


def test_criterion_04_capacity_axioms(report):
    t0 = time.time()
    rng = np.random.default_rng(4)
    doms = [gen_domain(r, 2.0**-8) for r in ("square", "slit_disc", "cusp")]
    worst = {"monotone": 0.0, "subadditive": 0.0, "measure": 0.0}
    done = 0
    while done < 50:
        dom = doms[done % 3]
        p = (1.5, 2.0, 3.0)[(done // 3) % 3]
        A, B = _random_target(dom, rng), _random_target(dom, rng)
        if A.is_empty() or B.is_empty():
            continue
        ca = estimate_capacity(dom, A, p, BAR).value
        cb = estimate_capacity(dom, B, p, BAR).value
        cab = estimate_capacity(dom, A.union(B), p, BAR).value
        worst["monotone"] = max(worst["monotone"], ca - cab, cb - cab)
        worst["subadditive"] = max(worst["subadditive"], cab - ca - cb)
        worst["measure"] = max(worst["measure"], domain_measure(dom, A.interior_cells()) - ca)
        done += 1
    ok = all(v <= 1e-6 for v in worst.values())
    detail = "worst violations " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert report(4, ok, detail, t0, 600)


def test_criterion_05_capacity_chain(report):
    t0 = time.time()
    dom = gen_domain("slit_disc", 2.0**-8)
    h = dom.h
    rng = np.random.default_rng(5)
    slit = anchors_where(dom, lambda x, y: (np.abs(y) < h / 2) & (x > 2 * h) & (x < 1 - 2 * h))
    sxy = dom.spec.center(slit)
    maz = build_maz_boundary(dom, anchors=slit)
    worst_chain, worst_eq, one_sided_ok = 0.0, 0.0, True
    for t in range(20):
        if t % 2 == 0:
            x0, w = rng.uniform(0.05, 0.75), rng.uniform(0.05, 0.2)
            E = TargetSet(None, list(slit[(sxy[:, 0] >= x0) & (sxy[:, 0] <= x0 + w)]))
        else:
            th, w = rng.uniform(0.2, 2 * np.pi - 0.2), rng.uniform(0.1, 0.4)
            E = TargetSet(None, list(anchors_where(dom, lambda x, y: (np.hypot(x, y) > 0.99) & (np.abs(np.angle(np.exp(1j * (np.arctan2(y, x) - th)))) <= w))))
        v = {V.tag: estimate_capacity(dom, E, 2.0, V).value for V in (BAR_MAZ, BAR, AMBIENT)}
        worst_chain = max(worst_chain, v["BAR_MAZ"] / (v["BAR"] * (1 + 1e-3)), v["BAR"] / (v["AMBIENT"] * (1 + 1e-3)))
        worst_eq = max(worst_eq, abs(v["BAR_MAZ"] - v["BAR"]) / v["BAR"])
        if t % 2 == 0:
            upper = [maz.points[k] for a in E.anchors() for k in maz.fibers[int(a)] if dom.spec.center(maz.points[k].representative)[1] > 0]
            one_sided_ok &= estimate_capacity(dom, TargetSet(None, upper), 2.0, BAR_MAZ).value <= v["BAR"] * (1 + 1e-3)
    ok = worst_chain <= 1.0 and worst_eq <= 0.02 and one_sided_ok
    detail = f"max ratio in chain {worst_chain:.4f} (<= 1), BAR_MAZ vs BAR rel {worst_eq:.1e}, one-sided <= BAR: {one_sided_ok}"
    assert report(5, ok, detail, t0, 600)


def test_criterion_06_solver_exactness(report):
    t0 = time.time()
    dom = gen_domain("square", 2.0**-6)
    X, _ = dom.spec.centers()
    errs = []
    for p in (1.5, 2.0, 3.0):
        u, _ = solve_dirichlet(DirichletProblem(dom, p, lambda x, y: x))
        errs.append(float(np.max(np.abs(u.values - X)[dom.open])))
        c, _ = solve_dirichlet(DirichletProblem(dom, p, -0.375))
        errs.append(float(np.max(np.abs(c.open_values + 0.375))))
    ok = max(errs) <= 1e-8
    assert report(6, ok, f"max sup error {max(errs):.1e}", t0, 60)


def test_criterion_07_max_comparison_contraction(report):
    t0 = time.time()
    rng = np.random.default_rng(7)
    doms = [gen_domain("square", 2.0**-5), gen_domain("comb", 2.0**-5)]
    worst = {"max principle": 0.0, "order": 0.0, "contraction": 0.0}
    for t in range(100):
        dom = doms[t % 2]
        p = (1.5, 2.0, 3.0)[t % 3]
        n = len(dom.ghost_edges[0])
        f = rng.uniform(-1, 1, n)
        g = f + rng.uniform(0, 0.5, n) * (rng.random(n) < 0.5)
        uf, _ = solve_dirichlet(DirichletProblem(dom, p, GhostData(f)))
        ug, _ = solve_dirichlet(DirichletProblem(dom, p, GhostData(g)))
        a, b = uf.open_values, ug.open_values
        worst["max principle"] = max(worst["max principle"], f.min() - a.min(), a.max() - f.max())
        worst["order"] = max(worst["order"], float(np.max(a - b)))
        worst["contraction"] = max(worst["contraction"], float(np.max(np.abs(a - b)) - np.max(np.abs(f - g))))
    ok = all(v <= 1e-6 for v in worst.values())
    assert report(7, ok, "worst violations " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()), t0, 900)


def test_criterion_08_gradient_check(report):
    t0 = time.time()
    rng = np.random.default_rng(8)
    dom = gen_domain("slit_disc", 2.0**-3)
    cells, _, _ = dom.ghost_edges
    worst = 0.0
    for t in range(20):
        p = (2.0, 3.0)[t % 2]
        ties = (cells, rng.normal(size=len(cells)), np.full(len(cells), 1 / dom.h**p))
        E = GridEnergy(dom.spec, dom.open, dom.weight, p, ties=ties, mass=True).energy
        x = rng.normal(size=E.n)
        g = E.grad(x)
        step = 1e-6
        fd = np.array([(E.value(x + step * e) - E.value(x - step * e)) / (2 * step) for e in np.eye(E.n)])
        worst = max(worst, float(np.linalg.norm(fd - g) / np.linalg.norm(g)))
    assert report(8, worst <= 1e-5, f"max relative error {worst:.1e} over 20 fields", t0, 60)


def test_criterion_09_mc_crosscheck(report):
    t0 = time.time()
    h = 2.0**-6
    cfg = WalkConfig(100000, rng_seed=9)
    sq = gen_domain("square", h)
    u, _ = solve_dirichlet(DirichletProblem(sq, 2.0, lambda x, y: x))
    r1 = mc_crosscheck(sq, lambda x, y: x, u, [(0.25, 0.5), (0.5, 0.5), (0.75, 0.5)], cfg)
    sd = gen_domain("slit_disc", h)
    maz = build_maz_boundary(sd)

    def one_sided(x, y):
        # 1 on the upper side of the slit, 0 on its lower side and the circle
        return ((y > 0) & (x > 0) & (x < 1) & (y < 2 * h)).astype(float)

    data = MazBoundaryData.from_function(sd, maz, one_sided, side=True)
    pr = perron_solve(sd, maz, data, 2.0)
    r2 = mc_crosscheck(sd, data, pr.solution, [(0.5, 0.1), (0.5, -0.1), (-0.5, 0.3)], cfg, maz=maz)
    rows = r1.rows + r2.rows
    worst = max(r["gap"] - 3 * r["stderr"] for r in rows)
    ok = r1.passed and r2.passed
    assert report(9, ok, f"max (gap - 3 stderr) {worst:+.4f} (<= 0.02) over {len(rows)} probes", t0, 180)


def test_criterion_10_invariance(report):
    t0 = time.time()
    hs = [2.0**-k for k in (7, 8, 9, 10)]

    def tip(x, y):
        return (np.abs(x) < 1e-9) & (y > 0) & (y <= 1 + 1e-9)

    def slit1(x, y):
        return (np.abs(x - 1.0) < 1e-9) & (y >= 0) & (y <= 1 + 1e-9)

    f = lambda x, y: np.asarray(y, float)  # noqa: E731
    rep = invariance_experiment("comb", f, tip, 5.0, 2.0, hs, far=0.1)
    ctrl = invariance_experiment("comb", f, slit1, 1.0, 2.0, hs, far=0.1, probes=[(1.5, 0.5)])
    probe = [d[0] for d in ctrl.probe_diffs]
    ok = rep.verdict == "decreasing" and rep.sup_diffs[-1] <= 0.15 and min(probe) >= 0.05
    detail = "tip sup diffs {} ; control probe min {:.3f}".format(", ".join(f"{d:.4f}" for d in rep.sup_diffs), min(probe))
    assert report(10, ok, detail, t0, 600)


def test_criterion_11_obstacle(report):
    t0 = time.time()
    dom = gen_domain("square", 2.0**-6)
    X, Y = dom.spec.centers()
    op = dom.open
    psi = 0.6 - 2 * ((X - 0.5) ** 2 + (Y - 0.5) ** 2)
    above, comp, mono = True, 0.0, 0.0
    for p in (1.5, 2.0, 3.0):
        opts = SolverOptions(tol=1e-10)
        prev = None
        for j in range(1, 5):
            f = lambda x, y, j=j: np.sin(3 * x) * np.cos(2 * y) * 0.3 + 1.0 / j  # noqa: E731
            u, rep = solve_obstacle(ObstacleProblem(DirichletProblem(dom, p, f, opts), psi))
            above &= bool(np.all(u.values[op] >= psi[op]))
            comp = max(comp, rep.complementarity)
            if prev is not None:
                mono = max(mono, float(np.max(u.values[op] - prev[op])))
            prev = u.values
    ok = above and comp <= 1e-6 and mono <= 1e-6
    assert report(11, ok, f"u >= psi exactly: {above}; complementarity {comp:.1e}; max increase {mono:.1e}", t0, 300)


def test_criterion_12_fibers(report):
    t0 = time.time()
    h = 2.0**-7
    sd = gen_domain("slit_disc", h)
    maz = build_maz_boundary(sd)
    xy = sd.spec.center(sd.anchors)
    sizes = np.array([maz.fiber_size(a) for a in sd.anchors])
    r_end = max(maz.probe_radii)
    slit = (np.abs(xy[:, 1]) < h / 2) & (xy[:, 0] > r_end) & (xy[:, 0] < 1 - r_end)
    circle = (np.hypot(xy[:, 0], xy[:, 1]) > 1 - 2 * h) & (np.hypot(xy[:, 0] - 1, xy[:, 1]) > r_end)
    ok_slit = bool(np.all(sizes[slit] == 2))
    ok_tip = maz.fiber_size(sd.anchor_at(0.0, 0.0)) == 1
    ok_circle = bool(np.all(sizes[circle] == 1))
    arcs = gen_domain("cantor_arcs", 2.0**-7)
    am = build_maz_boundary(arcs)
    arc_sizes = {len(v) for v in am.fibers.values()}
    dc = gen_domain("double_comb", 2.0**-9)
    a0 = dc.anchor_at(0.0, 0.5)
    dm = build_maz_boundary(dc, anchors=[a0])
    ok_dc = dm.fiber_size(a0) >= 3 and a0 in dm.unstable
    ok = ok_slit and ok_tip and ok_circle and arc_sizes <= {1, 2} and ok_dc
    detail = f"slit 2: {ok_slit}, tip 1: {ok_tip}, circle 1: {ok_circle}, Cantor arcs sizes {sorted(arc_sizes)}, double comb x=0 fiber {dm.fiber_size(a0)} unstable {a0 in dm.unstable}"
    assert report(12, ok, detail, t0, 120)


def test_criterion_13_metric_ordering(report):
    t0 = time.time()
    rng = np.random.default_rng(13)
    bad = {}
    for name in ("square", "slit_disc", "comb", "double_comb"):
        dom = gen_domain(name, 2.0**-6)
        h = dom.h
        nbad = 0
        for _ in range(200):
            a, b = rng.choice(dom.open_cells, 2, replace=False)
            e = float(np.hypot(*(dom.spec.center(a) - dom.spec.center(b))))
            dm = mazurkiewicz_distance(dom, a, b)
            din = inner_distance(dom, a, b)
            good = e <= dm.hi + 2 * h and dm.lo <= din + 2 * h
            if name == "square":
                good &= abs(dm.hi - e) <= 4 * h
            nbad += not good
        bad[name] = nbad
    ok = sum(bad.values()) == 0
    assert report(13, ok, "violations per recipe " + ", ".join(f"{k} {v}/200" for k, v in bad.items()), t0, 300)


def test_criterion_14_cantor_bookkeeping(report):
    t0 = time.time()
    exact = True
    for k in (0, 1, 2):
        for m in range(k, 13):
            parts, tail = cantor_measure_parts(k, m)
            exact &= sum(parts, Fraction(0)) + tail == 1
            exact &= (parts, tail) == cantor_measure_by_counting(k, m)
    worst = 0.0
    for p in (1.5, 2.0, 3.0):
        with mpmath.workdps(60):
            for n, val in cantor_bound_table(range(0, 13), p, "pow2sq"):
                ref = 16 * mpmath.mpf(2) ** n * (mpmath.mpf(2) ** (-(n * n))) ** (1 / mpmath.mpf(p))
                worst = max(worst, float(abs(mpmath.mpf(val) - ref) / ref))
    ok = exact and worst <= 1e-12
    assert report(14, ok, f"exact telescoping: {exact}; bound table max rel err {worst:.1e}", t0, 10)


def test_witness_closed_form_values():
    # the closed forms alone, separate from the grid comparison above
    for k in range(1, 7):
        assert comb_closed_form(k) == pytest.approx(3 * (2 / 3) ** k, abs=1e-12)
