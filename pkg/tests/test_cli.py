import json

import numpy as np
import pytest

from mazpot import cli, pipelines
from mazpot.domain import gen_domain, read_pgm
from mazpot.field import ScalarField
from mazpot.metric import build_maz_boundary
from mazpot.perron import MazBoundaryData, perron_solve


def run(tmp_path, *argv):
    return cli.main([*argv, "--out", str(tmp_path)])


def load(path):
    with open(path) as fh:
        return json.load(fh)


def test_unknown_example_writes_nothing(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run-example", "unknown-name", "--out", str(out)]) == 2
    assert not out.exists()


def test_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["nope"])
    assert exc.value.code == 2
    assert run(tmp_path, "solve", "--data", "__import__('os')") == 2
    assert run(tmp_path, "metric", "--a", "0.1,0.1") == 2
    assert run(tmp_path, "gen", "--recipe", "no_such") == 2
    assert run(tmp_path, "run-example", "cantor-deep", "--set", "bogus=1") == 2
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("bogus = 1\n")
    assert run(tmp_path, "gen", "--config", str(cfg)) == 2


def test_settings_accept_strings():
    s = pipelines.settings("comb-invariance", {"hs": ["2^-5", "2^-6"], "seed": "3", "tol": "1e-9"})
    assert s["hs"] == [2.0**-5, 2.0**-6] and s["seed"] == 3 and s["tol"] == 1e-9
    assert pipelines.settings("comb-capacity", {"h": "2^-7"})["h"] == 2.0**-7


def test_bad_setting_values(tmp_path):
    assert run(tmp_path, "run-example", "comb-invariance", "--set", "hs=2^-5,abc") == 2
    assert run(tmp_path, "run-example", "mc-check", "--set", "walks=1.5") == 2


def test_run_example_cantor_deep(tmp_path):
    assert run(tmp_path, "run-example", "cantor-deep") == 0
    rep = load(tmp_path / "cantor-deep.json")
    assert rep["passed"] and rep["command"] == "run-example"
    assert rep["config"]["settings"]["p"] == 2.0
    assert all({"threshold", "provenance", "relation"} <= set(c) for c in rep["checks"])


def test_run_example_metric_chain(tmp_path):
    code = run(tmp_path, "run-example", "metric-chain", "--set", "recipe=slit_disc", "--set", "pairs=200")
    assert code == 0
    rep = load(tmp_path / "metric-chain.json")
    assert rep["results"]["pairs"] == 200 and rep["passed"]


def test_run_example_comb_capacity(tmp_path):
    assert run(tmp_path, "run-example", "comb-capacity", "--set", "p=2", "--set", "h=0.001953125") == 0
    rep = load(tmp_path / "comb-capacity.json")
    assert rep["results"]["BAR"]["value"] <= 0.4
    assert [r["closed_form"] for r in rep["results"]["witness"]] == pytest.approx([3 * (2 / 3) ** k for k in range(1, 7)], abs=1e-12)
    assert (tmp_path / "comb.pgm").exists()


def test_failed_assertion_exit_code(tmp_path, monkeypatch):
    def failing(s):
        return {"x": 1}, [pipelines.check("always fails", 1.0, 0.0, "<=")]

    monkeypatch.setitem(pipelines.EXAMPLES, "failing", (failing, {}))
    assert run(tmp_path, "run-example", "failing") == 1
    rep = load(tmp_path / "failing.json")
    assert rep["passed"] is False


def test_reports_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.main(["run-example", "metric-chain", "--set", "pairs=20", "--seed", "3", "--out", str(d)]) == 0
    ra, rb = load(a / "metric-chain.json"), load(b / "metric-chain.json")
    for r in (ra, rb):
        r.pop("wall_time")
    assert ra == rb


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "m.cfg"
    cfg.write_text("recipe = square\nh = 2^-4\na = 0.2,0.2\nb = 0.8,0.8\n")
    assert run(tmp_path, "metric", "--config", str(cfg)) == 0
    rep = load(tmp_path / "metric.json")
    assert rep["config"]["h"] == 2.0**-4
    assert run(tmp_path, "metric", "--config", str(cfg), "--h", "2^-5") == 0
    assert load(tmp_path / "metric.json")["config"]["h"] == 2.0**-5


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("MAZPOT_OUT", str(tmp_path / "env"))
    assert cli.main(["gen", "--recipe", "square", "--h", "2^-4"]) == 0
    assert (tmp_path / "env" / "square.pgm").exists()


def test_solve_capacity_perron_mc(tmp_path):
    assert run(tmp_path, "solve", "--recipe", "square", "--h", "2^-4", "--data", "x", "--p", "3") == 0
    assert (tmp_path / "solution.csv").read_text().startswith("i,j,x,y,value")
    assert run(tmp_path, "solve", "--h", "2^-4", "--data", "x", "--obstacle", "0.5 + 0*x") == 0
    assert run(tmp_path, "capacity", "--recipe", "slit_disc", "--h", "2^-4", "--boundary-box", "0.2,0.6,-0.05,0.05", "--variant", "chain") == 0
    assert load(tmp_path / "capacity.json")["passed"]
    assert run(tmp_path, "capacity", "--h", "2^-4", "--box", "0.4,0.6,0.4,0.6", "--variant", "BAR") == 0
    assert load(tmp_path / "capacity.json")["results"]["value"] >= 0.04
    assert run(tmp_path, "capacity", "--h", "2^-4", "--box", "0.4,0.6,0.4,0.6", "--variant", "XYZ") == 2
    assert run(tmp_path, "perron", "--recipe", "slit_disc", "--h", "2^-4", "--data", "(y > 0) * 1.0", "--side") == 0
    assert run(tmp_path, "mc", "--h", "2^-4", "--data", "x", "--start", "0.5,0.5", "--walks", "2000") == 0
    assert abs(load(tmp_path / "mc.json")["results"]["mean"] - 0.5) < 0.1


def test_render_constant_field(tmp_path):
    dom = gen_domain("comb", 2.0**-4)
    ScalarField(dom, np.full(dom.spec.shape, 0.3)).to_csv(str(tmp_path / "c.csv"))
    assert run(tmp_path, "render", str(tmp_path / "c.csv"), str(tmp_path / "c.pgm")) == 0
    img = read_pgm(str(tmp_path / "c.pgm"))
    assert set(np.unique(img)) == {0, int(img.max())}
    assert (img > 0).sum() == dom.open.sum()


def test_render_gradient_and_png(tmp_path):
    dom = gen_domain("square", 2.0**-4)
    ScalarField.from_function(dom, lambda x, y: x).to_csv(str(tmp_path / "x.csv"))
    assert run(tmp_path, "render", str(tmp_path / "x.csv"), str(tmp_path / "x.pgm")) == 0
    img = read_pgm(str(tmp_path / "x.pgm")).astype(int)
    row = img[img.shape[0] // 2]
    row = row[row > 0]
    assert np.all(np.diff(row) > 0)
    assert run(tmp_path, "render", str(tmp_path / "x.csv"), str(tmp_path / "x.png"), "--palette", "heat") == 0
    assert (tmp_path / "x.png").stat().st_size > 0
    assert run(tmp_path, "render", str(tmp_path / "x.csv"), str(tmp_path / "x.txt")) == 2


def test_render_slit_discontinuity(tmp_path):
    h = 2.0**-5
    dom = gen_domain("slit_disc", h)
    maz = build_maz_boundary(dom)
    data = MazBoundaryData.from_function(dom, maz, lambda x, y: (y > 0).astype(float), side=True)
    perron_solve(dom, maz, data, 2.0).solution.to_csv(str(tmp_path / "s.csv"))
    assert run(tmp_path, "render", str(tmp_path / "s.csv"), str(tmp_path / "s.pgm"), "--range", "0,1") == 0
    img = read_pgm(str(tmp_path / "s.pgm")).astype(int)
    # image rows run top to bottom; the slit row is black between bright and dark rows
    i = dom.spec.locate(0.5, 0.0) // dom.spec.ny
    col = img[:, i]
    r0 = img.shape[0] - 1 - dom.spec.locate(0.5, 0.0) % dom.spec.ny
    assert col[r0] == 0
    assert col[r0 - 1] - col[r0 + 1] > 150


def test_make_function():
    f = cli.make_function("sin(x) + y**2")
    assert f(np.array([0.0]), np.array([2.0]))[0] == pytest.approx(4.0)
    with pytest.raises(cli.UsageError):
        cli.make_function("x +")
