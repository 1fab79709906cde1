import json
import subprocess
import sys

import numpy as np
import pytest

from heston_laq.cli import ConfigError, covariance_close, main, parse_config


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_config():
    cfg = parse_config("experiment = quadcheck\nseed = 3\n")
    assert cfg.seed == 3 and cfg.M == 20 and cfg.n_steps == 5000 and cfg.scheme == "euler"
    assert cfg.T_list == [5.0] and cfg.steps(5.0) == 5000
    assert cfg.theta.b == 1.0


def test_sections_comments_and_overrides():
    cfg = parse_config("[run]\nexperiment = laq  # trailing\nseed = 1\nb = -1\nh_list = 0,1,0,0; 0,0,1,0\n",
                       {"seed": 9, "out_dir": None})
    assert cfg.seed == 9 and cfg.lines["seed"] == "command line"
    assert cfg.T_list == [10.0, 20.0]  # supercritical defaults
    assert cfg.h_list == [[0, 1, 0, 0], [0, 0, 1, 0]]
    assert "h_list = 0.0, 1.0, 0.0, 0.0; 0.0, 0.0, 1.0, 0.0" in cfg.resolved_text()


@pytest.mark.parametrize("text, msg", [
    ("experiment = laq\nseed = 1\na = 0.3\n", "line 3: a = 0.3 is outside the admissible domain"),
    ("experiment = laq\nseed = 1\nM = 5\nM = 6\n", "line 4: duplicate key 'M' (first set on line 3)"),
    ("experiment = laq\nseed = 1\nfoo = 2\n", "line 3: unknown key 'foo'"),
    ("experiment = laq\nseed = x\n", "line 2: cannot parse seed"),
    ("experiment = nope\nseed = 1\n", "line 1: unknown experiment"),
    ("experiment = laq\n", "missing required key(s): seed"),
    ("experiment = laq\nseed = 1\njunk\n", "line 3: expected 'key = value'"),
    ("experiment = laq\nseed = 1\nrho = 1\n", "rho"),
    ("experiment = laq\nseed = 1\nh = 1, 2\n", "four entries"),
])
def test_config_errors(text, msg):
    with pytest.raises(ConfigError, match=None) as e:
        parse_config(text)
    assert msg in str(e.value)


def test_quadcheck_end_to_end(tmp_path):
    cfg = write(tmp_path, "seed = 4\nM = 5\nn_steps = 2000\n")
    out = tmp_path / "q"
    assert main(["quadcheck", "--config", str(cfg), "--out", str(out)]) == 0
    doc = json.loads((out / "summary.json").read_text())
    assert doc["job"] == "quadcheck" and doc["statistics"]["max_rel_residual"] <= 1e-8
    assert (out / "config.resolved").exists() and (out / "replicates.csv").exists()


def test_same_config_same_bytes(tmp_path):
    cfg = write(tmp_path, "seed = 4\nM = 300\nT = 2\nn_steps = 400\n")
    outs = []
    for k in range(2):
        d = tmp_path / f"o{k}"
        assert main(["mle", "--config", str(cfg), "--out", str(d)]) in (0, 2)
        resolved = [ln for ln in (d / "config.resolved").read_text().splitlines() if not ln.startswith("out_dir")]
        outs.append([(d / "summary.json").read_bytes(), (d / "replicates.csv").read_bytes(), resolved])
    assert outs[0] == outs[1]


def test_laq_supercritical_reports_violation(tmp_path):
    cfg = write(tmp_path, "seed = 2\nb = -1\nT_list = 5\nM = 200\nlimit_size = 50000\nlimit_n_steps = 200\n")
    out = tmp_path / "l"
    assert main(["laq", "--config", str(cfg), "--out", str(out)]) == 0
    st = json.loads((out / "summary.json").read_text())["statistics"]
    assert st["violation_closed_form"] == pytest.approx(0.81681, abs=1e-4)
    assert [0.0, 1.0, 0.0, 0.0] in st["h_list"]


def test_threshold_violation_exit_2(tmp_path):
    cfg = write(tmp_path, "seed = 1\nT = 20\nM = 200\nn_steps = 2000\ntol_power = 0\ntol_se = 0\n")
    assert main(["power", "--config", str(cfg), "--out", str(tmp_path / "p")]) == 2
    assert json.loads((tmp_path / "p" / "summary.json").read_text())["statistics"]["accepted"] is False


def test_simulate_writes_path(tmp_path):
    cfg = write(tmp_path, "seed = 1\nT = 1\nn_steps = 50\nscheme = exact\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    assert len((tmp_path / "s" / "path.csv").read_text().splitlines()) == 52


def test_oracle_subcommand(tmp_path):
    cfg = write(tmp_path, "seed = 1\nM = 20000\nlimit_n_steps = 400\n")
    assert main(["oracle", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["bogus", "--config", "x"])
    assert e.value.code == 1 and "usage" in capsys.readouterr().err
    assert main(["laq", "--config", str(tmp_path / "missing.cfg")]) == 1
    bad = write(tmp_path, "a = 0.3\n")
    assert main(["laq", "--config", str(bad), "--seed", "1"]) == 1


def test_console_script_module(tmp_path):
    r = subprocess.run([sys.executable, "-m", "heston_laq.cli", "nope", "--config", "x"], capture_output=True)
    assert r.returncode == 1 and b"usage" in r.stderr


def test_covariance_close():
    target = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert covariance_close(np.array([[1.1, 0.1], [0.1, 1.8]]), target, 0.15)
    assert not covariance_close(np.array([[1.2, 0.0], [0.0, 2.0]]), target, 0.15)
    assert not covariance_close(np.array([[1.0, 0.3], [0.3, 2.0]]), target, 0.15)
