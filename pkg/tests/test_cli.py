import json
import subprocess
import sys

import numpy as np
import pytest

from memsx.cli import config_hash, load_config, run, ConfigError


def write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc, indent=1))
    return path


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# memsx ")
    return lines[1].split(","), np.array([[float(v) if v else np.nan for v in ln.split(",")] for ln in lines[2:]])


def test_simulate_zero_voltage(tmp_path):
    cfg = write(tmp_path, {"model": {"lam": 0.0}, "geometry": {"n_x": 15}})
    assert run(["simulate", str(cfg), "--out", str(tmp_path)]) == 0
    header, data = read_csv(tmp_path / "snapshots.csv")
    assert header == ["t", "x", "u"]
    assert np.all(data[:, 2] == 0)
    header, _ = read_csv(tmp_path / "trajectory.csv")
    assert header == ["t", "min_u", "E_m", "E_e_scaled", "total", "zipped_count"]


def test_simulate_classical_touchdown_exit_4(tmp_path):
    cfg = write(tmp_path, {"model": {"lam": 10.0}, "geometry": {"n_x": 15}, "dynamics": {"dt": 1e-3}})
    assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 4
    summary = json.loads((tmp_path / "simulate.json").read_text())
    assert summary["terminated"] and summary["final_min_u"] == -1.0


def test_unknown_key_reports_line(tmp_path, capsys):
    cfg = write(tmp_path, '{\n  "model": {"lam": 1.0},\n  "geometry": {\n    "nx": 5\n  }\n}\n')
    assert run(["steady", str(cfg)]) == 2
    assert ":4: unknown key geometry.nx" in capsys.readouterr().err


def test_malformed_json_and_unknown_section(tmp_path, capsys):
    cfg = write(tmp_path, '{\n "model": {"lam": 1.0,}\n}')
    assert run(["steady", str(cfg)]) == 2
    assert ":2:" in capsys.readouterr().err
    cfg = write(tmp_path, '{"plate": {}}')
    assert run(["steady", str(cfg)]) == 2


def test_bad_values_and_commands(tmp_path):
    assert run(["steady", str(write(tmp_path, {"model": {"tau": -1}}))]) == 2
    assert run(["steady", str(write(tmp_path, {"model": {"force": "magic"}}))]) == 2
    assert run(["explode", str(write(tmp_path, {}))]) == 2
    assert run(["steady"]) == 2
    assert run(["steady", str(tmp_path / "missing.json")]) == 2


def test_steady_failure_exit_3(tmp_path):
    cfg = write(tmp_path, {"model": {"lam": 5.0}, "geometry": {"n_x": 15}})
    assert run(["steady", str(cfg), "--out", str(tmp_path)]) == 3
    assert json.loads((tmp_path / "steady.json").read_text())["converged"] is False


def test_potential_and_force_outputs(tmp_path):
    doc = {"model": {"force": "robin"}, "geometry": {"n_x": 15, "n_z1": 5, "n_z2": 5}}
    cfg = write(tmp_path, doc)
    assert run(["potential", str(cfg), "--out", str(tmp_path)]) == 0
    header, data = read_csv(tmp_path / "potential.csv")
    assert header == ["x", "z", "layer", "psi"] and np.all(data[:, 2] == 1)
    assert run(["force", str(cfg), "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "force.json").read_text())
    assert len(report["shape_derivative"]) == 3


def test_seed_override_changes_hash(tmp_path):
    cfg = write(tmp_path, {})
    assert config_hash(load_config(cfg)) == config_hash(load_config(cfg))
    assert config_hash(load_config(cfg, seed=5)) != config_hash(load_config(cfg))
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "[1, 2]"))


def test_csv_full_precision(tmp_path):
    cfg = write(tmp_path, {"model": {"lam": 1.0}, "geometry": {"n_x": 15}, "dynamics": {"lam_grid": [0.3, 0.7]}})
    assert run(["bifurcate", str(cfg), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "bifurcation.csv").read_text().splitlines()
    mantissa = lines[2].split(",")[1].lstrip("-").replace(".", "").split("e")[0].lstrip("0")
    assert len(mantissa) >= 15


def test_limits_subcommand(tmp_path):
    doc = {
        "geometry": {"n_x": 31, "n_z1": 9, "n_z2": 5},
        "output": {"study": "thin_plate", "scaling": "Od", "sequence": [0.2, 0.1]},
    }
    assert run(["limits", str(write(tmp_path, doc)), "--out", str(tmp_path), "--jobs", "2"]) == 0
    header, data = read_csv(tmp_path / "limits.csv")
    assert header[0] == "delta" and data.shape == (2, 8)


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path, {"geometry": {"n_x": 15}})
    proc = subprocess.run(
        [sys.executable, "-m", "memsx.cli", "steady", str(cfg), "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
