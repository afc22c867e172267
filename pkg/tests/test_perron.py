import numpy as np
import pytest

from mazpot.domain import DomainRecipe, gen_domain
from mazpot.errors import BadInput, CertificateMissing, NotNested
from mazpot.field import ScalarField
from mazpot.metric import build_maz_boundary
from mazpot.perron import (
    MazBoundaryData,
    approach_values,
    boundary_limit_report,
    comparison_check,
    edge_values,
    generalized_boundary,
    generalized_perron_solve,
    invariance_experiment,
    perron_solve,
    points_near,
    uniform_stability_check,
)
from mazpot.solver import DirichletProblem, solve_dirichlet

BOXES = [(0.2, 0.45, 0.2, 0.8), (0.5, 0.8, 0.3, 0.7)]


@pytest.fixture(scope="module")
def square():
    dom = gen_domain("square", 2.0**-6)
    return dom, build_maz_boundary(dom)


def one_sided(h):
    def f(x, y):
        upper_slit = (y > 0) & (x > 0) & (np.hypot(x, y) < 1 - 2 * h)
        upper_circle = (y > 0) & (np.hypot(x, y) >= 1 - 2 * h)
        return (upper_slit | upper_circle).astype(float)

    return f


def test_square_matches_dirichlet(square):
    dom, maz = square
    f = lambda x, y: np.sin(3 * x) + y**2  # noqa: E731
    data = MazBoundaryData.from_function(dom, maz, f)
    r = perron_solve(dom, maz, data, 2.0)
    u, _ = solve_dirichlet(DirichletProblem(dom, 2.0, f))
    assert np.max(np.abs(r.solution.values - u.values)) <= 1e-10


def test_slit_disc_one_sided():
    h = 2.0**-9
    dom = gen_domain("slit_disc", h)
    maz = build_maz_boundary(dom)
    data = MazBoundaryData.from_function(dom, maz, one_sided(h), side=True)
    r = perron_solve(dom, maz, data, 2.0)
    v = r.solution.open_values
    assert v.min() >= -1e-9 and v.max() <= 1 + 1e-9
    app = approach_values(dom, maz, r.solution)
    for k in maz.fibers[int(dom.anchor_at(0.5, 0.0))]:
        above = dom.spec.center(maz.points[k].representative)[1] > 0
        assert app[k] >= 0.8 if above else app[k] <= 0.2
    tip = points_near(dom, maz, 0.0, 0.0, 2 * h)
    end = points_near(dom, maz, 1.0, 0.0, 2 * h)
    rep = boundary_limit_report(r, exceptional=np.concatenate([tip, end]), eps=0.05)
    assert rep.fraction >= 0.9


def test_double_comb_jump():
    h = 2.0**-7
    dom = gen_domain("double_comb", h)
    maz = build_maz_boundary(dom)
    f = lambda x, y: np.where((x >= 0) & (x <= 1) & (y > 0) & (y <= 1), y, 0.0)  # noqa: E731
    data = MazBoundaryData.from_function(dom, maz, f)
    r = perron_solve(dom, maz, data, 2.0)
    assert r.report.converged
    exc = [k for k, pt in enumerate(maz.points) if abs(dom.spec.center(pt.anchor)[0]) < 0.1]
    assert boundary_limit_report(r, exceptional=exc).fraction >= 0.9


def test_boundary_limits_continuous_and_constant(square):
    dom, maz = square
    r = perron_solve(dom, maz, MazBoundaryData.from_function(dom, maz, lambda x, y: x * y), 2.0)
    assert boundary_limit_report(r).fraction >= 0.95
    c = perron_solve(dom, maz, MazBoundaryData(np.full(len(maz.points), 0.3)), 3.0)
    assert boundary_limit_report(c, eps=1e-9).fraction == 1.0


def test_data_validation(square):
    dom, maz = square
    with pytest.raises(BadInput):
        MazBoundaryData([0.0, np.nan])
    with pytest.raises(BadInput):
        edge_values(dom, maz, MazBoundaryData(np.zeros(3)))


def test_comparison(square):
    dom, maz = square
    X, _ = dom.spec.centers()
    u = ScalarField(dom, np.minimum(1.0, 2 * X))
    v = ScalarField(dom, X - 0.5)
    assert comparison_check(dom, u, v, maz, boxes=BOXES).passed
    r = perron_solve(dom, maz, MazBoundaryData.from_function(dom, maz, lambda x, y: x), 2.0)
    rep = comparison_check(dom, r.solution + 0.1, r.solution - 0.1, maz, boxes=BOXES)
    assert rep.passed
    bad = comparison_check(dom, r.solution, r.solution + 0.2, maz, boxes=BOXES)
    assert not bad.passed and bad.stage == "boundary"
    with pytest.raises(CertificateMissing):
        comparison_check(dom, u, v, maz)
    with pytest.raises(CertificateMissing):
        comparison_check(dom, ScalarField(dom, X**2), v, maz, boxes=BOXES)


def test_invariance_empty_set():
    rep = invariance_experiment("comb", lambda x, y: y, lambda x, y: np.zeros_like(x, bool), 5.0, 2.0, [2.0**-4, 2.0**-5])
    assert rep.sup_diffs == [0.0, 0.0]


def test_invariance_rejects_increasing_resolutions():
    with pytest.raises(BadInput):
        invariance_experiment("comb", lambda x, y: y, lambda x, y: x < 0, 1.0, 2.0, [2.0**-5, 2.0**-4])


def test_generalized_same_domain(square):
    dom, maz = square
    f = lambda x, y: np.cos(2 * x) * y  # noqa: E731
    a = perron_solve(dom, maz, MazBoundaryData.from_function(dom, maz, f), 2.0).solution
    b = generalized_perron_solve(dom, dom, lambda anc, rep: f(anc[:, 0], anc[:, 1]), 2.0).solution
    assert np.max(np.abs(a.values - b.values)) <= 1e-10


def test_generalized_two_sided_slit():
    h = 2.0**-7
    dom = gen_domain("double_comb", h)
    G = gen_domain(DomainRecipe("double_comb", {"J": 1}), h)
    gb = generalized_boundary(dom, G)
    assert max(len(v) for v in gb.fibers.values()) == 2

    def data(a, r):
        on = (np.abs(a[:, 0] - 0.5) < h) & (a[:, 1] > 0)
        return np.where(on, np.where(r[:, 0] > a[:, 0], 1.0, 0.0), 0.5)

    u = generalized_perron_solve(dom, G, data, 2.0).solution
    assert u.at(0.5 + 2 * h, 0.5) > 0.8
    assert u.at(0.5 - 2 * h, 0.5) < 0.2


def test_generalized_requires_nesting():
    a = gen_domain("square", 2.0**-5)
    b = gen_domain("slit_disc", 2.0**-5)
    with pytest.raises(NotNested):
        generalized_boundary(a, b)


def test_uniform_stability(square):
    dom, maz = square
    n = len(maz.points)
    theta = np.arctan2(*(dom.spec.center(maz.phi) - 0.5).T[::-1])
    f = MazBoundaryData(np.cos(theta))
    shifted = [f + 1.0 / j for j in (1, 2, 4)]
    rep = uniform_stability_check(dom, maz, shifted, f, 2.0)
    assert rep.passed
    assert rep.solution_diffs == pytest.approx([1.0, 0.5, 0.25], abs=1e-9)
    wiggly = [f + MazBoundaryData(np.sin(j * theta) / j) for j in (1, 2, 4)]
    assert uniform_stability_check(dom, maz, wiggly, f, 3.0).passed
    same = uniform_stability_check(dom, maz, [f], f, 2.0)
    assert same.solution_diffs == [0.0]
    assert n == len(f.values)
