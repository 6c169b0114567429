import json
import subprocess
import sys

import pytest

from dynperc.cli import ConfigError, ExperimentConfig, build_config, main, run
from dynperc.stats import THREADS_ENV


@pytest.fixture(autouse=True)
def _keep_env(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)


def invoke(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_constants_csv(capsys):
    code, out, err = invoke(capsys, "constants")
    assert code == 0
    assert "# alpha_0: 217/816" in out
    assert "0,31/36," in out
    assert "217/816,0," in out
    assert "wall_time" in err and "wall_time" not in out


def test_majority_spectrum(capsys):
    code, out, _ = invoke(capsys, "spectral-exact", "--function", "majority3", "--format", "json")
    data = json.loads(out)
    assert code == 0 and set(data) == {"command", "config", "results", "summary", "version"}
    coef = {row["S_mask"]: row["hat_h"] for row in data["results"]}
    assert coef == {0: 0.5, 1: 0.25, 2: 0.25, 3: 0.0, 4: 0.25, 5: 0.0, 6: 0.0, 7: -0.25}


def test_duality_output_independent_of_threads(tmp_path, capsys):
    outs = []
    for threads in ("1", "3"):
        path = tmp_path / f"d{threads}.csv"
        code, _, _ = invoke(capsys, "duality", "--samples", "20000", "--L", "4", "--seed", "5",
                            "--threads", threads, "--out", str(path))
        assert code == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_bad_settings_exit_2(tmp_path, capsys):
    assert invoke(capsys, "duality", "--L", "7")[0] == 2
    assert invoke(capsys, "constants", "--alpha", "1/2")[0] == 2
    assert invoke(capsys, "nonsense")[0] == 2
    cfg = tmp_path / "run.cfg"
    cfg.write_text("command = scan\nR = 4\ngamma = 0.5\n")
    code, _, err = invoke(capsys, "--config", str(cfg))
    assert code == 2 and f"{cfg}:3: gamma" in err


def test_resource_caps_exit_3(capsys):
    assert invoke(capsys, "spectral-exact", "--function", "one-arm", "--R", "4")[0] == 3
    assert invoke(capsys, "duality", "--L", "4096")[0] == 3
    assert invoke(capsys, "jp-check", "--max-bits", "20")[0] == 3


def test_config_roundtrip():
    cfg = build_config("arm", {"k": "3", "geometry": "half", "r": "2,4"})
    again = ExperimentConfig.from_text(cfg.text)
    assert again == cfg and again.text == cfg.text
    with pytest.raises(ConfigError):
        build_config("arm", {"gamma": "1"})


def test_config_file_matches_flags(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# example\ncommand = jp-check\ninstances = 20\nseed = 3\n")
    a = invoke(capsys, "--config", str(cfg))[1]
    b = invoke(capsys, "jp-check", "--instances", "20", "--seed", "3")[1]
    assert a == b and "# config: instances = 20" in a


def test_correlate_then_integrate(tmp_path, capsys):
    curve = tmp_path / "curve.csv"
    code, _, _ = invoke(capsys, "correlate", "--function", "parity", "--S", "0,0;1,0", "--kernel", "iid",
                        "--samples", "4000", "--t-min", "0.0625", "--out", str(curve))
    assert code == 0
    code, out, _ = invoke(capsys, "integrate", "--input", str(curve), "--gamma", "0,0.5", "--format", "json")
    assert code == 0
    rows = json.loads(out)["results"]
    assert [r["gamma"] for r in rows] == [0.0, 0.5]
    # (1 - e^-2) / 2 for the |S| = 2 parity under resampling at rate 1
    assert abs(rows[0]["second_moment_integral"] - 0.4323) <= rows[0]["error"] + 0.02


def test_run_is_deterministic():
    cfg = build_config("scan", {"R": "3", "T": "2", "trajectories": "2", "seed": "4"})
    assert run(cfg) == run(cfg)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "dynperc", "constants", "--format", "json"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["summary"]["alpha_0"] == "217/816"
