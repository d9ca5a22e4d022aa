import json

import pytest

from hml_tori.cli import main

REF = ["--a", "1", "--b", "1", "--c1", "1", "--c2", "1", "--c3", "1"]


def _config(tmp_path, doc):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    return str(p)


def test_derive(capsys):
    assert main(["derive", *REF]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["derived"]["frakC"] == {"num": 6, "den": 1}
    assert out["oscillation_exists"] is True


def test_derive_nonpositive_C(capsys):
    assert main(["derive", "--a", "-9", "--b", "-9", "--c1", "1", "--c2", "1", "--c3", "1"]) == 2


def test_profile(capsys):
    assert main(["profile", "--frakC", "6", "--c3", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["tau"] - 1.718622815866053) < 1e-10
    assert out["energy_residual_10_periods"] < 1e-10


def test_profile_c3_zero_is_invalid(capsys):
    assert main(["profile", "--frakC", "6", "--c3", "0"]) == 2
    assert "error" in capsys.readouterr().err


def test_missing_params_is_invalid(capsys):
    assert main(["verify", "--a", "1"]) == 2


def test_search_empty_grid_is_invalid(tmp_path, capsys):
    assert main(["search", "--config", _config(tmp_path, {"search": {"grids": {}}})]) == 2
    assert main(["search", "--config", _config(tmp_path, {})]) == 2


def test_search_runs(tmp_path, capsys):
    cfg = {"search": {"grids": {k: {"min": v, "max": v} for k, v in
                                {"a": -3, "b": -3, "c1": 2, "c2": 2}.items()},
                      "winding_targets": ["4/5"], "n_check_points": 8}}
    out_path = tmp_path / "res.json"
    assert main(["search", "--config", _config(tmp_path, cfg), "--out", str(out_path)]) == 0
    doc = json.loads(out_path.read_text())
    assert doc["stats"]["candidates"] == 1 and doc["candidates"][0]["closing"]["n"] == 5


def test_verify_reference(tmp_path, capsys):
    cfg = _config(tmp_path, {"params": {"a": 1, "b": 1, "c1": 1, "c2": 1, "c3": 1},
                             "certification": {"n_points": 100, "n_reduced": 20, "n_connection": 16}})
    assert main(["verify", "--config", cfg]) == 0
    assert "overall: PASS" in capsys.readouterr().out
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    main(["verify", "--config", cfg, "--format", "json", "--out", str(a)])
    main(["verify", "--config", cfg, "--format", "json", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_verify_failure_exit_code(tmp_path, capsys):
    cfg = _config(tmp_path, {"params": {"a": 1, "b": 1, "c1": 1, "c2": 1, "c3": 1},
                             "certification": {"n_points": 50, "n_reduced": 10, "n_connection": 8}})
    assert main(["verify", "--config", cfg, "--tol-verify", "norm=0"]) == 1
    assert main(["verify", "--config", cfg, "--tol-verify", "nonsense=1"]) == 2


def test_sample(capsys):
    assert main(["sample", *REF, "--x", "0", "--y", "0", "--z", "0"]) == 0
    out = json.loads(capsys.readouterr().out)
    re1, im1 = out["samples"][0]["psi"][0]
    assert abs(re1 - 0.2016) < 1e-4 and im1 == 0.0


def test_export(tmp_path, capsys):
    path = tmp_path / "grid.csv"
    args = ["export", "--a", "-3", "--b", "-3", "--c1", "2", "--c2", "2",
            "--c3", "1.4346311712640087", "--grid", "4", "4", "4", "--out", str(path)]
    assert main(args) == 0
    assert len(path.read_text().splitlines()) == 65
