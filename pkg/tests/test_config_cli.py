import numpy as np
import pytest

from krflow import cli, fileio
from krflow.config import ConfigError, parse_config
from krflow.geometry import Chart


def test_minimal_torus_config_uses_defaults():
    run = parse_config("[run]\ncommand = flow-torus\n", env={})
    assert run.torus.resolution == 32
    assert run.out == "out"


def test_unknown_key_is_named():
    text = "[run]\ncommand = flow-torus\n[torus]\nn = 1\ndt_polciy = 0.1\n"
    with pytest.raises(ConfigError) as err:
        parse_config(text, env={})
    assert "dt_polciy" in str(err.value)
    assert err.value.line == 5


def test_parse_error_has_line_number():
    with pytest.raises(ConfigError) as err:
        parse_config("[run]\ncommand = cone\nnot a pair\n", env={})
    assert err.value.line == 3


def test_invalid_value_names_key():
    with pytest.raises(ConfigError) as err:
        parse_config("[run]\ncommand = flow-p1\n[p1]\nscale = -2\n", env={})
    assert err.value.key == "p1.scale"
    assert err.value.line == 4


def test_cone_config():
    run = parse_config("[run]\ncommand = cone\n[cone]\nmodel = BlpP2\nclass = 1,3\n", env={})
    assert run.cone.model == "BlpP2"
    assert run.cone.cls == ("1", "3")


def test_optional_and_list_values():
    run = parse_config("[run]\ncommand = flow-torus\n[torus]\ndt = none\nsample_times = 0.25, 0.5\n"
                       "enforce_cfl = no\n", env={})
    assert run.torus.dt is None
    assert run.torus.sample_times == (0.25, 0.5)
    assert run.torus.enforce_cfl is False


def test_output_override_from_environment():
    run = parse_config("[run]\ncommand = cone\nout = a\n", env={"KRFLOW_OUT": "b"})
    assert run.out == "b"


def test_snapshot_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    for data in (rng.normal(size=(3, 4)), rng.normal(size=(2, 2, 2)) + 1j * rng.normal(size=(2, 2, 2))):
        path = tmp_path / "a.snap"
        fileio.write_snapshot(path, data, kind="potential", t="0.5")
        snap = fileio.read_snapshot(path)
        assert snap.meta == {"kind": "potential", "t": "0.5"}
        assert np.array_equal(snap.data, data)


def test_grid_csv_shape():
    ch = Chart(1, 4)
    text = fileio.grid_csv(ch, np.zeros(ch.shape), "phi")
    lines = text.splitlines()
    assert lines[0] == "x,y,phi"
    assert len(lines) == 1 + 16


def test_cli_cone(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("KRFLOW_OUT", raising=False)
    assert cli.main(["cone", "--model", "ExS", "--class", "1,1", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "T=inf" in out and "(c)" in out
    assert (tmp_path / "cone.csv").read_text().splitlines()[1].startswith("ExS,")


def test_cli_cone_errors(tmp_path, monkeypatch):
    monkeypatch.delenv("KRFLOW_OUT", raising=False)
    assert cli.main(["cone", "--model", "K3", "--class", "1", "--out", str(tmp_path)]) == 4
    assert cli.main(["cone", "--model", "P1", "--class", "-1", "--out", str(tmp_path)]) == 4


def test_cli_flow_p1(tmp_path, monkeypatch):
    monkeypatch.delenv("KRFLOW_OUT", raising=False)
    cfg = tmp_path / "p1.ini"
    cfg.write_text("[run]\ncommand = flow-p1\n[p1]\nresolution = 16\n")
    assert cli.main(["flow-p1", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "monitors.csv").read_text().splitlines()
    assert rows[0] == "t,area,area_law_residual,sup_psi,ricci_residual_rescaled,round_deviation"
    law = [float(r.split(",")[2]) for r in rows[1:]]
    assert max(law[: int(0.8 * len(law))]) < 5e-3


def test_cli_flow_torus_outputs(tmp_path, monkeypatch):
    monkeypatch.delenv("KRFLOW_OUT", raising=False)
    cfg = tmp_path / "t.ini"
    cfg.write_text("[run]\ncommand = flow-torus\n[torus]\nresolution = 16\nt_max = 0.1\nmonitor_dt = 0.05\n")
    out = tmp_path / "o"
    assert cli.main(["flow-torus", "--config", str(cfg), "--out", str(out)]) == 2
    for name in ("monitors.csv", "estimates.txt", "estimates.csv", "phi_final.snap", "phi_final.csv"):
        assert (out / name).exists()
    snap = fileio.read_snapshot(out / "phi_final.snap")
    assert snap.data.shape == (16, 16)


def test_cli_config_error_exit_code(tmp_path, monkeypatch):
    monkeypatch.delenv("KRFLOW_OUT", raising=False)
    cfg = tmp_path / "t.ini"
    cfg.write_text("[run]\ncommand = flow-torus\n[torus]\nbogus = 1\n")
    assert cli.main(["flow-torus", "--config", str(cfg), "--out", str(tmp_path)]) == 4
    assert cli.main(["flow-p1", "--config", str(cfg), "--out", str(tmp_path)]) == 4
    assert cli.main(["flow-p1", "--config", str(tmp_path / "missing.ini")]) == 4


def test_cli_env_out(tmp_path, monkeypatch):
    monkeypatch.setenv("KRFLOW_OUT", str(tmp_path / "env"))
    assert cli.main(["cone", "--model", "P1", "--class", "2"]) == 0
    assert (tmp_path / "env" / "cone.csv").exists()


def test_cli_verify_small(tmp_path, monkeypatch):
    monkeypatch.delenv("KRFLOW_OUT", raising=False)
    code = cli.main(["verify", "--seed", "1", "--resolution", "24", "--trials", "1", "--out", str(tmp_path)])
    text = (tmp_path / "verify.txt").read_text()
    assert code == 0, text
    assert "FAIL" not in text
