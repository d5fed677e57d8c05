import json
import math

import numpy as np
import pytest

from levyfem.cli import main
from levyfem.fem import build_mesh
from levyfem.harness import (
    PUT_PARAMS,
    ConfigError,
    RunConfig,
    convergence_study,
    dumps_json,
    export_surface,
    fitted_order,
    import_surface,
    jensen_diagnostic,
    ordering_holds,
    parse_config,
    price,
    smoothing_sup_error,
    write_rows,
)
from levyfem.payoff import PayoffKind, PayoffSpec
from levyfem.timestepper import Scheme, SchemeConfig, run

SMALL = """
[model]
diffusion_volatility = 0.3, 0.2
mean_jump_size = -0.9
mean_jump_volatility = 0.45
jump_intensity = 0.1
correlation = 0.3
interest_rate = 0.05
strike = 40
maturity = 0.1
weights = 0.5, 0.5
underlying_price = 40, 40

[payoff]
kind = basket_put
delta = 0.05

[discretization]
M = 4.5
n_per_side = 33
dt = 0.02
scheme = crank_nicolson_full
"""


def test_parse_config_full():
    cfg = parse_config(SMALL)
    assert cfg.params.sigma == (0.3, 0.2)
    assert cfg.params.lam == (0.1, 0.1)
    assert cfg.params.T == 0.1 and cfg.params.K == 40.0
    assert cfg.kind is PayoffKind.BASKET_PUT
    assert cfg.n_per_side == 33 and cfg.dt == 0.02
    assert cfg.scheme is Scheme.CN_FULL
    assert cfg.resolved_delta() == 0.05


def test_parse_config_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert cfg.resolved_delta() == pytest.approx(2 * 9 * math.sqrt(2) / 128)


@pytest.mark.parametrize("text", [
    "[model]\nvolatility = 0.2\n",
    "[model]\ncorrelation = 1.5\n",
    "[model]\ndiffusion_volatility = abc\n",
    "[model]\nweights = 0.2, 0.3, 0.5\n",
    "[payoff]\nkind = rainbow\n",
    "[discretization]\nscheme = leapfrog\n",
    "[discretization]\nn_per_side = 2\n",
    "[extra]\na = 1\n",
    "no section header",
])
def test_parse_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_price_small_config():
    out = price(parse_config(SMALL))
    assert out["kind"] == "basket_put"
    assert 0.0 < out["price"] < 40.0
    assert out["n_steps"] == 5 and "elapsed_s" not in out


def test_cli_price(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text(SMALL)
    out = tmp_path / "res.json"
    assert main(["price", "--config", str(cfg), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc == json.loads(capsys.readouterr().out)
    assert doc["price"] > 0


def test_cli_config_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[model]\ncorrelation = 2\n")
    assert main(["price", "--config", str(bad)]) == 2
    assert main(["price", "--config", str(tmp_path / "missing.ini")]) == 2
    with pytest.raises(SystemExit) as ei:
        main(["tables", "--which", "5", "--out", str(tmp_path)])
    assert ei.value.code == 2


def test_cli_dump_mesh_and_quadrature(tmp_path):
    assert main(["dump-mesh", "--M", "1", "--n-per-side", "5", "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "vertices.csv").read_text().splitlines()) == 1 + 25
    assert len((tmp_path / "triangles.csv").read_text().splitlines()) == 1 + 32
    q = tmp_path / "q.csv"
    assert main(["dump-quadrature", "--n-nodes", "32", "--out", str(q)]) == 0
    assert len(q.read_text().splitlines()) == 1 + 64


def test_cli_converge_delta(tmp_path):
    out = tmp_path / "d.json"
    code = main(["converge", "--axis", "delta", "--levels", "3", "--out", str(out)])
    doc = json.loads(out.read_text())
    assert len(doc["errors"]["sup"]) == 3
    assert code == (0 if doc["passed"] else 1)


def test_fitted_order():
    h = np.array([0.1, 0.05, 0.025])
    assert fitted_order(h, 3 * h**2) == pytest.approx(2.0)


def test_ordering_helper():
    assert ordering_holds(1.0, 2.0, 3.0)
    assert not ordering_holds(2.5, 2.0, 3.0)
    assert ordering_holds(2.01, 2.0, 3.0, slack=0.02)


def test_smoothing_error_shrinks_with_delta():
    a = smoothing_sup_error(PayoffSpec(PayoffKind.BASKET_PUT, 0.2, PUT_PARAMS))
    b = smoothing_sup_error(PayoffSpec(PayoffKind.BASKET_PUT, 0.1, PUT_PARAMS))
    assert 0 < b < a


@pytest.fixture(scope="module")
def surface():
    s = build_mesh(4.5, 17)
    spec = PayoffSpec(PayoffKind.BASKET_PUT, 0.5, PUT_PARAMS)
    return run(s, spec, SchemeConfig.for_horizon(0.05, 0.01))


@pytest.mark.parametrize("suffix", [".csv", ".json"])
def test_export_roundtrip_and_determinism(tmp_path, surface, suffix):
    a, b = tmp_path / ("a" + suffix), tmp_path / ("b" + suffix)
    grid = np.linspace(20, 60, 9)
    export_surface(surface, a, grid, grid[:5])
    export_surface(surface, b, grid, grid[:5])
    assert a.read_bytes() == b.read_bytes()
    doc = import_surface(a)
    S1, S2 = np.meshgrid(grid, grid[:5])
    np.testing.assert_array_equal(doc["S1"], S1.ravel())
    np.testing.assert_array_equal(doc["V"], surface.price(S1.ravel(), S2.ravel()))
    assert not list(tmp_path.glob(".tmp_*"))


def test_export_all_vertices_and_empty_window(tmp_path, surface):
    export_surface(surface, tmp_path / "all.csv")
    assert len(import_surface(tmp_path / "all.csv")["V"]) == surface.space.n_vertices
    export_surface(surface, tmp_path / "empty.csv", [], [])
    assert (tmp_path / "empty.csv").read_text() == "S1,S2,V\n"
    assert import_surface(tmp_path / "empty.csv")["V"].size == 0


def test_polynomial_report_and_export_agree(tmp_path):
    from levyfem.harness import POLY_PARAMS, _solve

    p = POLY_PARAMS.replace(sigma=(0.1, 0.1), rho=0.3, T=0.1)
    cfg = RunConfig(params=p, kind=PayoffKind.POLYNOMIAL, n_per_side=65)
    out = price(cfg)
    assert out["jd"] == pytest.approx(6447.487, abs=1e-3)
    assert out["bs"] == pytest.approx(6436.263, abs=1e-3)
    assert out["rel_err"] == pytest.approx(abs(out["price"] - out["jd"]) / out["jd"])
    export_surface(_solve(cfg), tmp_path / "p.json", [40.0], [40.0])
    assert import_surface(tmp_path / "p.json")["V"][0] == out["price"]


def test_convergence_needs_three_levels():
    with pytest.raises(ValueError):
        convergence_study("delta", 2)


def test_json_and_rows_are_stable(tmp_path):
    doc = {"b": np.float64(0.1), "a": [np.int64(2), np.bool_(True)]}
    assert dumps_json(doc) == '{\n  "a": [\n    2,\n    true\n  ],\n  "b": 0.1\n}\n'
    write_rows(tmp_path / "r.csv", [{"x": 1 / 3, "ok": True}])
    assert (tmp_path / "r.csv").read_text() == "x,ok\n0.33333333333333331,true\n"


def test_jensen_diagnostic_holds():
    res = jensen_diagnostic(n_per_side=65)
    assert res["holds"]
    assert res["basket_put"] < res["portfolio"]
    assert all(leg > 0 for leg in res["legs"])


def test_basket_put_against_monte_carlo():
    # 400k-path Monte Carlo of the same model (tau 0.9, sigma 0.3) gives 3.315, standard error 0.008
    p = PUT_PARAMS.replace(T=0.9)
    n = 129
    h = 2 * 4.5 * math.sqrt(2) / (n - 1)
    cfg = RunConfig(params=p, kind=PayoffKind.BASKET_PUT, n_per_side=n, dt=0.01, delta=0.25 * h)
    assert price(cfg)["price"] == pytest.approx(3.315, rel=0.02)


def test_parse_config_inline_comments():
    cfg = parse_config("[model]\ncorrelation = 0.2   ; note\n[payoff]\nkind = basket_call # call\n")
    assert cfg.params.rho == 0.2 and cfg.kind is PayoffKind.BASKET_CALL
