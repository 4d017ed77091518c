import json
import os

import pytest

from wavemaslov.cli import RunConfig, main, read_config


@pytest.fixture(scope="module")
def scalar_wave_file(tmp_path_factory, scalar_profile):
    path = tmp_path_factory.mktemp("wave") / "wave.json"
    path.write_text(scalar_profile.to_json())
    return str(path)


def test_missing_config_writes_nothing(tmp_path, capsys):
    out = tmp_path / "never"
    assert main(["run", "--config", str(tmp_path / "absent.cfg"), "--out", str(out)]) == 2
    assert not out.exists()
    assert "not found" in capsys.readouterr().err


def test_config_without_section_header(tmp_path):
    cfg = tmp_path / "x.cfg"
    cfg.write_text("system = scalar\na = 0.25  # comment\nstages = wave, oracle\nM = 800\n")
    values = read_config(str(cfg))
    assert values == {"system": "scalar", "a": 0.25, "stages": ("wave", "oracle"), "M": 800}
    RunConfig(**values).validate()


def test_unknown_key_is_a_config_error(tmp_path):
    cfg = tmp_path / "x.cfg"
    cfg.write_text("colour = blue\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_flags_override_config(tmp_path, scalar_wave_file):
    cfg = tmp_path / "x.cfg"
    cfg.write_text("system = fhn\nM = 400\n")
    out = tmp_path / "o"
    code = main(["oracle", "--config", str(cfg), "--system", "scalar", "--M", "800",
                 "--wave", scalar_wave_file, "--out", str(out)])
    assert code == 0
    data = json.loads((out / "oracle.json").read_text())
    assert data["M"] == 800 and data["variant"] == "Lc"


def test_stage_failure_reports_code(tmp_path, scalar_wave_file, capsys):
    code = main(["box", "--system", "scalar", "--wave", scalar_wave_file, "--lambda-max", "0.01",
                 "--out", str(tmp_path)])
    assert code == 3
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    # the shelf sits below the unstable eigenvalue, so the top side is crossed
    assert err["stage"] == "box" and err["code"] == "shelf_violated"


def test_scalar_run_is_deterministic(tmp_path, scalar_wave_file):
    reports = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = main(["run", "--system", "scalar", "--wave", scalar_wave_file, "--out", str(out)])
        assert code == 0
        assert sorted(os.listdir(out)) == ["box.json", "evans.csv", "oracle.json", "report.json",
                                          "wave.json", "winding.json"]
        reports.append((out / "report.json").read_bytes())
    assert reports[0] == reports[1]
    report = json.loads(reports[0])
    assert abs(report["maslov"]) == 1
    assert sum(e[0] > 1e-4 for e in report["oracle_eigs"]) == 1
    assert report["verdict"] == "unstable"
    assert all(report["checks"].values())
    header = (tmp_path / "a" / "evans.csv").read_text().splitlines()[0]
    assert header == "lambda_re,lambda_im,D_re,D_im,z_spread"


def test_fhn_default_config_reports_stable(tmp_path, fhn_profile):
    wave = tmp_path / "wave.json"
    wave.write_text(fhn_profile.to_json())
    out = tmp_path / "fhn"
    cfg = os.path.join(os.path.dirname(__file__), "..", "configs", "fhn_default.cfg")
    assert main(["run", "--config", cfg, "--wave", str(wave), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert all(report["checks"].values()) and len(report["checks"]) == 4
    assert report["verdict"] == "stable"
    assert report["maslov"] == 0 and report["mu"] == [0, 0, 0, 0]
    assert report["winding"] == 1
