from __future__ import annotations

import csv
import io
import json

import numpy as np
import pytest
from click.testing import CliRunner

from structhinf.cli import main
from structhinf.saddle import inner_max, objective
from structhinf.sysfile import fixture_text, load_gains


@pytest.fixture()
def runner():
    return CliRunner()


def _toy_problem(a: float = 0.1) -> dict:
    """One-state problem, open loop unstable for a > 0."""
    return {
        "name": "toy",
        "parameters": [{"name": "a", "min": -1.0, "max": 1.0}],
        "partition": {"n": [1], "m_w": [1], "m_u": [1], "o_y": [1], "p": [1]},
        "xi_basis": ["1"],
        "eta_basis": ["1"],
        "matrices": [{"A": [[a]], "Bw": [[1.0]], "Bu": [[1.0]],
                      "Cy": [[1.0]], "Dyw": [[0.0]]}],
        "performance": {"Cz": [[1.0], [0.0]], "Dzw": [[0.0], [0.0]],
                        "Dzu": [[0.0], [0.5]]},
        "control_graph": [[1]],
        "design_graph": [[1]],
    }


def _varying_problem() -> dict:
    """One-state problem with A(alpha) = -1 + 0.5 alpha and a frozen gain."""
    data = _toy_problem(a=-1.0)
    data["xi_basis"] = ["1", "a"]
    data["matrices"][0]["Dyw"] = [[0.2]]
    data["matrices"].append({"A": [[0.5]], "Bw": [[0.0]], "Bu": [[0.0]],
                             "Cy": [[0.0]], "Dyw": [[0.0]]})
    data["gamma0"] = [[[-0.5]]]
    return data


def test_validate_bundled_fixtures(runner):
    res = runner.invoke(main, ["validate", "--system", "example1"],
                        catch_exceptions=False)
    assert res.exit_code == 0
    assert res.output.startswith("warning:")
    assert "ok: example1 (1 warning(s))" in res.output

    res = runner.invoke(main, ["validate", "--system", "platoon"],
                        catch_exceptions=False)
    assert res.exit_code == 0
    assert "ok: platoon" in res.output


def test_validate_rejects_mismatched_dimensions(runner, tmp_path):
    data = json.loads(fixture_text("example1"))
    data["matrices"][0]["Bu"] = [[1.0], [1.0]]
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(data))
    res = runner.invoke(main, ["validate", "--system", str(path)])
    assert res.exit_code == 1
    assert "Bu" in res.stderr


def test_norm_at_point_matches_library(runner, tmp_path, example1):
    out = tmp_path / "norm.json"
    res = runner.invoke(main, ["norm", "--system", "example1",
                               "--alpha", "0,0", "--output", str(out)],
                        catch_exceptions=False)
    assert res.exit_code == 0
    payload = json.loads(out.read_text())
    want = objective(example1.system, example1.gamma0, [0.0, 0.0])
    assert payload["J"] == pytest.approx(want, rel=1e-9)
    assert payload["unstable"] is False
    assert payload["gamma_source"] == "gamma0"
    assert payload["parameters"] == ["a1", "a2"]
    assert len(payload["peaks"]) >= 1
    assert f"J = {payload['J']!r}" in res.output


def test_norm_worst_matches_inner_max(runner, tmp_path, example1):
    out = tmp_path / "worst.json"
    res = runner.invoke(main, ["norm", "--system", "example1", "--worst",
                               "--output", str(out)],
                        catch_exceptions=False)
    assert res.exit_code == 0
    payload = json.loads(out.read_text())
    inner = inner_max(example1.system, example1.gamma0, example1.alpha0,
                      example1.solver.step, eps=example1.solver.eps_inner)
    assert payload["J"] == pytest.approx(inner.J, rel=1e-9)
    np.testing.assert_allclose(payload["alpha"], inner.alpha)


def test_norm_reports_instability_with_exit_zero(runner, tmp_path):
    path = tmp_path / "toy.json"
    path.write_text(json.dumps(_toy_problem(a=0.1)))
    out = tmp_path / "norm.json"
    res = runner.invoke(main, ["norm", "--system", str(path), "--zero-gain",
                               "--alpha", "0", "--output", str(out)],
                        catch_exceptions=False)
    assert res.exit_code == 0
    assert "J = inf (closed loop unstable)" in res.output
    payload = json.loads(out.read_text())
    assert payload["J"] is None
    assert payload["unstable"] is True


def test_norm_rejects_bad_alpha_and_conflicting_flags(runner, tmp_path):
    res = runner.invoke(main, ["norm", "--system", "example1",
                               "--alpha", "0"])
    assert res.exit_code == 1
    assert "--alpha" in res.stderr

    gain = tmp_path / "gain.json"
    gain.write_text("{}")
    res = runner.invoke(main, ["norm", "--system", "example1",
                               "--gain-file", str(gain), "--zero-gain"])
    assert res.exit_code == 1
    assert "mutually exclusive" in res.stderr


def test_design_output_is_deterministic_and_loadable(runner, tmp_path,
                                                     example1):
    outs = []
    for name in ("d1.json", "d2.json"):
        out = tmp_path / name
        res = runner.invoke(main, ["design", "--system", "example1",
                                   "--max-outer", "3", "--output", str(out)],
                            catch_exceptions=False)
        assert res.exit_code == 0
        assert "status = " in res.output
        outs.append(out.read_text())
    assert outs[0] == outs[1]
    payload = json.loads(outs[0])
    assert payload["status"] in ("converged", "max-iters")
    assert payload["settings"]["step"] == "c/k:0.1"
    loaded = load_gains(json.loads(outs[0]), example1.system)
    assert np.all(loaded.coeffs[loaded.masks == 0.0] == 0.0)
    assert [rec["outer"] for rec in payload["trace"]] == \
        sorted(rec["outer"] for rec in payload["trace"])


def test_design_aborts_on_unstabilized_start(runner, tmp_path):
    path = tmp_path / "toy.json"
    path.write_text(json.dumps(_toy_problem(a=0.1)))
    out = tmp_path / "design.json"
    res = runner.invoke(main, ["design", "--system", str(path),
                               "--output", str(out)])
    assert res.exit_code == 2
    payload = json.loads(out.read_text())
    assert payload["status"] == "instability-abort"
    assert payload["J_star"] == "inf"
    assert "destabilizes" in res.stderr


def test_sweep_grid_and_single_point(runner, tmp_path, example1):
    out = tmp_path / "sweep.csv"
    res = runner.invoke(main, ["sweep", "--system", "example1",
                               "--grid-n", "3", "--output", str(out)],
                        catch_exceptions=False)
    assert res.exit_code == 0
    rows = list(csv.reader(io.StringIO(out.read_text())))
    assert rows[0] == ["a1", "a2", "J"]
    assert len(rows) == 1 + 9
    mid = next(r for r in rows[1:] if float(r[0]) == 0.0 and float(r[1]) == 0.0)
    want = objective(example1.system, example1.gamma0, [0.0, 0.0])
    assert float(mid[2]) == pytest.approx(want, rel=1e-9)

    res = runner.invoke(main, ["sweep", "--system", "example1",
                               "--grid-n", "1"], catch_exceptions=False)
    rows = list(csv.reader(io.StringIO(res.output)))
    assert len(rows) == 2
    assert float(rows[1][2]) == pytest.approx(want, rel=1e-9)


def test_ratio_csv_shape_and_bounds(runner, tmp_path):
    path = tmp_path / "vary.json"
    path.write_text(json.dumps(_varying_problem()))
    out = tmp_path / "ratio.csv"
    res = runner.invoke(main, ["ratio", "--system", str(path),
                               "--grid-n", "2", "--restarts", "4",
                               "--output", str(out)],
                        catch_exceptions=False)
    assert res.exit_code == 0
    assert res.output.startswith("r = ")
    rows = list(csv.reader(io.StringIO(out.read_text())))
    assert rows[0] == ["a", "J_strategy", "J_baseline", "ratio", "flag"]
    assert len(rows) == 1 + 2
    for row in rows[1:]:
        assert float(row[3]) >= 1.0 - 1e-12
        assert row[4] == ""

    res = runner.invoke(main, ["ratio", "--system", str(path),
                               "--grid-n", "1"])
    assert res.exit_code == 1
    assert "at least 2" in res.stderr


def test_selftest_passes(runner):
    res = runner.invoke(main, ["selftest"], catch_exceptions=False)
    assert res.exit_code == 0
    assert "all " in res.output and "checks passed" in res.output
    assert "FAIL" not in res.output


def test_version_flag(runner):
    res = runner.invoke(main, ["--version"], catch_exceptions=False)
    assert res.exit_code == 0
    assert "structhinf" in res.output
