import json

import numpy as np
import yaml

from bibc.cli import main
from bibc.scene import save_scene

from conftest import small_scene


def test_snr_calibration_command(capsys):
    assert main(["snr-calibration", "--config", "default", "--trials", "500"]) == 0
    out = capsys.readouterr().out
    assert "beta_bar" in out


def test_partition_and_beamform_roundtrip(tmp_path, capsys):
    scene_path = tmp_path / "scene.yaml"
    save_scene(small_scene(), scene_path)
    part_path = tmp_path / "part.json"
    assert main([
        "partition", "--config", str(scene_path), "--method", "dp",
        "--problem", "p_bf", "--out", str(part_path),
    ]) == 0
    part = json.loads(part_path.read_text())
    assert part["ref_id"] in part["reader_ids"]
    assert (tmp_path / "part.diagnostics.csv").exists()

    assert main([
        "beamform", "--config", str(scene_path), "--problem", "p_bf",
        "--partition-file", str(part_path), "--p-max", "2.0",
        "--out-prefix", str(tmp_path / "bf"),
    ]) == 0
    sol_rows = (tmp_path / "bf.solution.csv").read_text().strip().splitlines()
    x = np.array([complex(float(r.split(",")[0]), float(r.split(",")[1]))
                  for r in sol_rows[1:]])
    assert np.isclose(np.sum(np.abs(x) ** 2), 2.0, rtol=1e-9)
    diag = (tmp_path / "bf.diagnostics.csv").read_text().splitlines()
    assert diag[0] == "objective_db,c_s_db,power,feasible"

    # without a partition file the role selection runs for the problem itself
    assert main([
        "beamform", "--config", str(scene_path), "--problem", "p_alpha0",
        "--out-prefix", str(tmp_path / "bf0"),
    ]) == 0
    diag0 = (tmp_path / "bf0.diagnostics.csv").read_text().splitlines()[1].split(",")
    assert int(diag0[3]) == 1          # feasible
    assert float(diag0[1]) <= -180.0   # interference suppressed


def test_pe_sweep_command(tmp_path):
    scene_path = tmp_path / "scene.yaml"
    save_scene(small_scene(), scene_path)
    out = tmp_path / "pe.csv"
    assert main([
        "pe-sweep", "--config", str(scene_path), "--problem", "p_alpha0",
        "--bits", "16", "--snr-db-range", "22:26:2", "--trials", "0",
        "--out", str(out),
    ]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "snr_db,problem,bits,pe_closed,pe_sim,trials"
    assert len(lines) == 4


def test_estimate_command(tmp_path):
    scene_path = tmp_path / "scene.yaml"
    save_scene(small_scene(), scene_path)
    out = tmp_path / "nmse.csv"
    assert main([
        "estimate", "--config", str(scene_path), "--snr-p-db", "8",
        "--trials", "10", "--jprime", "1", "--out", str(out),
    ]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "snr_p_db,ap_id,nmse_iter,nmse_noiter"
    assert len(lines) == 1 + 5


def test_run_command_with_config_file(tmp_path):
    scene_path = tmp_path / "scene.yaml"
    save_scene(small_scene(), scene_path)
    exp = {
        "kind": "pg_map",
        "scene": str(scene_path),
        "problems": ["p_bf"],
        "grid": {"nx": 6, "ny": 4, "z": 2.0},
        "out": str(tmp_path / "pg.csv"),
    }
    cfg_path = tmp_path / "exp.yaml"
    cfg_path.write_text(yaml.safe_dump(exp))
    assert main(["run", "--config", str(cfg_path)]) == 0
    lines = (tmp_path / "pg.csv").read_text().strip().splitlines()
    assert lines[0] == "x_m,y_m,pg_db"
    assert len(lines) == 1 + 24
