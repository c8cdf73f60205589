import json
import os

import pytest

from planelike import cli
from planelike import config as C
from planelike.errors import ValidationError

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")


def _write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


BASE = """format_version = 1
[kernel]
kind = "K1"
dim = 1
s1 = 0.25
[grid]
m = 16
[forcing]
kind = "cosine"
amplitude = 0.05
[solver]
p = [1]
[experiment]
kind = "solve-cell"
"""


def test_s1_out_of_range(tmp_path, capsys):
    path = _write(tmp_path, BASE.replace("s1 = 0.25", "s1 = 0.6"))
    assert cli.main(["--out", str(tmp_path / "o"), "run", path]) == 2
    err = capsys.readouterr().err
    assert "kernel.s1" in err and "(0, 1/2)" in err
    assert not (tmp_path / "o").exists()


def test_missing_kernel_table(tmp_path):
    path = _write(tmp_path, 'format_version = 1\n[experiment]\nkind = "check"\n')
    with pytest.raises(ValidationError, match="kernel"):
        C.load(path)


def test_unknown_key_path(tmp_path):
    path = _write(tmp_path, BASE.replace("[solver]", "[solver]\nstep = 3"))
    with pytest.raises(ValidationError, match=r"solver\.step"):
        C.load(path)


def test_unknown_experiment_key(tmp_path):
    path = _write(tmp_path, BASE + "radii = [0.1]\n")
    with pytest.raises(ValidationError, match=r"experiment\.radii"):
        C.load(path)


def test_unknown_criterion_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--out", str(tmp_path), "check", "bogus"])
    assert exc.value.code == 2


def test_check_single_entry(tmp_path):
    out = tmp_path / "chk"
    assert cli.main(["--out", str(out), "check", "coarea"]) == 0
    rep = json.loads((out / "acceptance.json").read_text())
    assert rep["format_version"] == C.FORMAT_VERSION
    assert [c["id"] for c in rep["criteria"]] == [2]


def test_check_config_quick_suite(tmp_path):
    path = _write(tmp_path, 'format_version = 1\n[kernel]\nkind = "K1"\ndim = 1\n'
                            '[experiment]\nkind = "check"\ncriteria = [1, 5, 10]\n')
    out = tmp_path / "q"
    assert cli.main(["--out", str(out), "check", "--config", path, "1", "5", "10"]) == 0
    rep = json.loads((out / "acceptance.json").read_text())
    assert all(c["passed"] for c in rep["criteria"])


def test_solve_cell_artifacts_and_manifest(tmp_path):
    path = _write(tmp_path, BASE)
    out = tmp_path / "s"
    assert cli.main(["--out", str(out), "run", path]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config_hash"] == C.config_hash(C.load(path))
    assert man["status"] == 0 and man["wall_time"] >= 0
    for name in ("profile.csv", "calibration.csv", "solve_report.json"):
        assert name in man["artifacts"]
    head = (out / "profile.csv").read_text().splitlines()[0]
    assert f"config_hash={man['config_hash']}" in head
    assert not [p for p in os.listdir(out) if p.startswith(".partial")]


def test_determinism_of_csv(tmp_path):
    path = _write(tmp_path, BASE)
    for d in ("a", "b"):
        assert cli.main(["--out", str(tmp_path / d), "run", path]) == 0
    for name in ("profile.csv", "calibration.csv", "calibration_default.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_partial_outputs_removed(tmp_path, monkeypatch):
    def boom(cfg, out):
        out.json("half.json", {"x": 1})
        raise RuntimeError("simulated crash")
    monkeypatch.setitem(cli.EXPERIMENTS, "solve-cell", boom)
    path = _write(tmp_path, BASE)
    with pytest.raises(RuntimeError):
        cli.main(["--out", str(tmp_path / "f"), "run", path])
    assert os.listdir(tmp_path / "f") == []


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(C.OUTPUT_ENV, str(tmp_path / "env"))
    path = _write(tmp_path, BASE)
    assert cli.main(["run", path]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()


def test_unconverged_is_check_failure(tmp_path):
    path = _write(tmp_path, BASE.replace("p = [1]", "p = [1]\nmethod = \"pdhg\"\nmax_iter = 3"))
    assert cli.main(["--out", str(tmp_path / "u"), "run", path]) == 3


@pytest.mark.parametrize("name", ["validate_k3", "plateau_1d", "scan_isoperimetric", "stable_norm_2d",
                                  "gamma_square", "levelsets_2d", "solve_cell_1d"])
def test_shipped_configs_run(tmp_path, name):
    assert cli.main(["--out", str(tmp_path / name), "run", os.path.join(CONFIGS, name + ".toml")]) == 0


def test_shipped_configs_validate():
    for f in sorted(os.listdir(CONFIGS)):
        C.load(os.path.join(CONFIGS, f))
