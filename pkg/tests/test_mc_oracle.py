import numpy as np
import pytest

from mazpot import kernels
from mazpot.domain import gen_domain
from mazpot.errors import BadInput, InvalidCell
from mazpot.mc_oracle import WalkConfig, harmonic_measure_mc, mc_crosscheck, run_walks, transition_table
from mazpot.metric import build_maz_boundary
from mazpot.perron import MazBoundaryData, perron_solve
from mazpot.solver import DirichletProblem, solve_dirichlet


@pytest.fixture(scope="module")
def square():
    return gen_domain("square", 2.0**-5)


@pytest.fixture(scope="module")
def slit():
    h = 2.0**-6
    dom = gen_domain("slit_disc", h)
    maz = build_maz_boundary(dom)

    def f(x, y):
        return ((y > 0) & (((x > 0) & (np.hypot(x, y) < 1 - 2 * h)) | (np.hypot(x, y) >= 1 - 2 * h))).astype(float)

    return dom, maz, MazBoundaryData.from_function(dom, maz, f, side=True)


def test_square_center(square):
    est = harmonic_measure_mc(square, (0.5, 0.5), lambda x, y: x, WalkConfig(100000))
    # the centre cell sits h/2 off 0.5
    x0 = square.spec.center(square.cell_at(0.5, 0.5))[0]
    assert abs(est.mean - x0) <= 3 * est.stderr
    assert est.n_timeout == 0
    assert sum(est.hits.values()) == est.n_absorbed


def test_slit_upper_side_dominates(slit):
    dom, maz, data = slit
    est = harmonic_measure_mc(dom, (0.5, 0.1), data, WalkConfig(20000), maz)
    assert est.mean > 0.6


def test_constant_data_is_exact(square):
    est = harmonic_measure_mc(square, (0.3, 0.6), 0.7, WalkConfig(5000))
    assert est.mean == 0.7 and est.stderr == 0.0


def test_deterministic_and_backend_independent(square):
    cfg = WalkConfig(3000, rng_seed=11, batch_size=1000)
    a = run_walks(square, (0.4, 0.4), cfg)
    b = run_walks(square, (0.4, 0.4), cfg)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    prev = kernels.use("python")
    try:
        c = run_walks(square, (0.4, 0.4), cfg)
    finally:
        kernels.use(prev)
    assert np.array_equal(a[0], c[0]) and np.array_equal(a[1], c[1])
    d = run_walks(square, (0.4, 0.4), WalkConfig(3000, rng_seed=12, batch_size=1000))
    assert not np.array_equal(a[0], d[0])


def test_timeouts_are_reported(square):
    events, steps = run_walks(square, (0.5, 0.5), WalkConfig(200, max_steps=3))
    assert np.all(events[steps >= 3] == -1)
    est = harmonic_measure_mc(square, (0.5, 0.5), lambda x, y: x, WalkConfig(200, max_steps=3))
    assert est.n_timeout > 0 and est.n_absorbed + est.n_timeout == 200


def test_transition_table(square):
    nxt = transition_table(square)
    n_edges = len(square.ghost_edges[0])
    op = square.open_cells
    assert nxt[op].min() >= -n_edges
    dest = nxt[op][nxt[op] >= 0]
    assert square.open_flat[dest].all()
    assert (nxt[op] < 0).sum() == n_edges


def test_errors(square, slit):
    closed = int(np.flatnonzero(~square.open_flat)[0])
    with pytest.raises(InvalidCell):
        run_walks(square, closed, WalkConfig(10))
    dom, maz, data = slit
    with pytest.raises(BadInput):
        harmonic_measure_mc(dom, (0.5, 0.1), data, WalkConfig(10))
    with pytest.raises(BadInput):
        WalkConfig(0)


def test_crosscheck_square(square):
    u, _ = solve_dirichlet(DirichletProblem(square, 2.0, lambda x, y: x))
    rep = mc_crosscheck(square, lambda x, y: x, u, [(0.25, 0.5), (0.5, 0.5), (0.75, 0.5)], WalkConfig(50000))
    assert rep.passed
    assert [r["mc_mean"] for r in rep.rows] == pytest.approx([0.25, 0.5, 0.75], abs=0.02)


def test_crosscheck_slit(slit):
    dom, maz, data = slit
    r = perron_solve(dom, maz, data, 2.0)
    assert mc_crosscheck(dom, data, r.solution, [(0.5, 0.25), (0.5, -0.1)], WalkConfig(50000), maz=maz).passed


def test_crosscheck_comb():
    dom = gen_domain("comb", 2.0**-6)
    f = lambda x, y: np.cos(x) + y  # noqa: E731
    u, _ = solve_dirichlet(DirichletProblem(dom, 2.0, f))
    assert mc_crosscheck(dom, f, u, [(1.5, 0.5), (0.75, -0.5), (0.3, 0.8)], WalkConfig(50000)).passed
