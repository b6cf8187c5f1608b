import json

import pytest

from radlimit.cli import main

SLAB = {
    "domain": {"kind": "slab", "width": 2.0},
    "source": {"kind": "cone", "axis": [1.0, 0.0, 0.0], "half_angle": 1.0471975511965976},
    "eps": [0.2, 0.1],
}


def _config(tmp_path, payload, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def test_kernel_table_command(tmp_path):
    out = tmp_path / "out"
    assert main(["kernel-table", "--out", str(out), "--quiet"]) == 0
    lines = (out / "kernel_table.csv").read_text().splitlines()
    assert lines[0].startswith("x [1],K [1]")
    report = json.loads((out / "kernel_table.json").read_text())
    assert report["passed"] and len(report["config_hash"]) == 64


def test_milne_solve_command(tmp_path):
    out = tmp_path / "out"
    assert main(["milne-solve", "--out", str(out), "--normal", "0", "0", "1", "--quiet"]) == 0
    report = json.loads((out / "milne_solve.json").read_text())
    assert abs(report["u_inf"] - 4 * 3.141592653589793) <= 1e-3
    assert (out / "milne_profile.csv").read_text().startswith("y [1],u [u]")


def test_malformed_config_exits_two(tmp_path, capsys):
    cfg = _config(tmp_path, {"eps": [0.05, 0.1]})
    assert main(["convergence-study", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "strictly decreasing" in capsys.readouterr().err


def test_missing_config_exits_two(tmp_path):
    assert main(["kernel-table", "--config", str(tmp_path / "nope.json")]) == 2


def test_study_command_is_deterministic(tmp_path):
    cfg = _config(tmp_path, SLAB)
    outs = [tmp_path / "a", tmp_path / "b"]
    for o in outs:
        assert main(["convergence-study", "--config", cfg, "--out", str(o), "--quiet"]) == 0
    for name in ("study.csv", "study.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    assert (outs[0] / "timings.json").exists()


def test_transport_and_elliptic_commands_on_slab(tmp_path):
    cfg = _config(tmp_path, SLAB)
    assert main(["transport-solve", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
    assert (tmp_path / "transport_eps0.1.csv").exists()
    assert main(["elliptic-solve", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0


def test_boundary_map_rejects_slab(tmp_path):
    cfg = _config(tmp_path, SLAB)
    assert main(["boundary-map", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 1


def test_boundary_map_on_ball(tmp_path):
    cfg = _config(tmp_path, {"milne": {"samples": 6}})
    assert main(["boundary-map", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
    rows = (tmp_path / "boundary_map.csv").read_text().splitlines()
    assert len(rows) == 7


def test_unknown_command_fails():
    with pytest.raises(SystemExit):
        main(["explode"])
