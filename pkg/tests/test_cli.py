import json
import subprocess
import sys
from pathlib import Path

import pytest

from robinmc.cli import main

ROOT = Path(__file__).resolve().parents[1]
SMOKE = ROOT / "configs" / "smoke.toml"


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


CONSTANT = """
lambda = 1.0
x = [0.3, 0.0, 0.0]
n = 4.0
[domain]
type = "ball"
center = [0.0, 0.0, 0.0]
radius = 1.0
[coefficients]
type = "isotropic"
value = 0.5
lambda_ell = 2.0
[f]
name = "constant"
value = 2.0
[g]
name = "constant"
value = 2.0
[sim]
dt = 1e-3
weight_floor = 1e-4
[mc]
paths = 200
"""


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_robin_constant(tmp_path, capsys):
    code, out, _ = run(["solve-robin", "--config", write(tmp_path, CONSTANT), "--seed", "4"], capsys)
    res = json.loads(out)
    assert code == 0 and res["value"] == pytest.approx(2.0, abs=1e-3)
    assert set(res) >= {"value", "stderr", "paths", "dt", "kappa", "seed", "truncation_flagged"}


def test_missing_lambda(tmp_path, capsys):
    text = CONSTANT.replace("lambda = 1.0\n", "")
    code, _, err = run(["solve-robin", "--config", write(tmp_path, text), "--seed", "1"], capsys)
    assert code == 2 and "lambda" in err


def test_unknown_key_named(tmp_path, capsys):
    text = CONSTANT.replace("[mc]\n", "[mc]\nwarp = 3\n")
    code, _, err = run(["solve-robin", "--config", write(tmp_path, text), "--seed", "1"], capsys)
    assert code == 2 and "mc.warp" in err


def test_nonpositive_penalty(tmp_path, capsys):
    code, _, _ = run(["solve-robin", "--config", write(tmp_path, CONSTANT), "--seed", "1", "--n", "0"], capsys)
    assert code == 2


def test_seed_required(tmp_path, capsys):
    code, _, err = run(["solve-robin", "--config", write(tmp_path, CONSTANT)], capsys)
    assert code == 2 and "seed" in err


def test_dirichlet_cases(tmp_path, capsys):
    cfg = write(tmp_path, CONSTANT.replace('value = 2.0\n[g]', 'value = 0.0\n[g]').replace(
        '[g]\nname = "constant"\nvalue = 2.0', '[g]\nname = "constant"\nvalue = 0.0'))
    code, out, _ = run(["solve-dirichlet", "--config", cfg, "--seed", "2"], capsys)
    assert code == 0 and json.loads(out)["value"] == 0.0
    code, out, _ = run(["solve-dirichlet", "--config", str(SMOKE), "--x", "0.6,0.8,0", "--seed", "2"], capsys)
    res = json.loads(out)
    assert res["value"] == pytest.approx(0.6, abs=1e-15) and res["stderr"] == 0.0


def test_converge_shape_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["converge", "--config", str(SMOKE), "--out", str(a)], capsys)[0] == 0
    assert run(["converge", "--config", str(SMOKE), "--out", str(b), "--workers", "2"], capsys)[0] == 0
    lines = (a / "convergence.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 3
    assert lines[0].startswith("x0,x1,x2,n,estimate,stderr,gap")
    assert (a / "convergence.csv").read_bytes() == (b / "convergence.csv").read_bytes()
    meta = json.loads((a / "convergence.json").read_text())
    assert meta["seed"] == 1 and "wall_time_s" in meta


def test_oracle_rows(tmp_path, capsys):
    text = """
lambda = 1.0
[domain]
type = "box"
lower = [0.0, 0.0, 0.0]
upper = [1.0, 1.0, 1.0]
[coefficients]
type = "isotropic"
value = 0.5
lambda_ell = 2.0
[f]
name = "coordinate"
[g]
name = "coordinate"
[oracle]
solver = "robin"
resolution = 9
n = 10.0
[mc]
seed = 0
"""
    out = tmp_path / "o"
    code, stdout, _ = run(["oracle", "--config", write(tmp_path, text), "--out", str(out)], capsys)
    assert code == 0
    rows = (out / "oracle.csv").read_text().splitlines()
    assert len(rows) == 1 + 9**3
    header = json.loads((out / "oracle.json").read_text())
    assert header["resolution"] == 9 and header["iterations"] > 0


def test_validate_exit_codes(tmp_path, capsys):
    assert run(["validate", "--config", str(SMOKE)], capsys)[0] == 0
    tampered = SMOKE.read_text().replace("[sim]\n", "[sim]\nkappa = 4.0546\n")
    assert run(["validate", "--config", write(tmp_path, tampered)], capsys)[0] == 1


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "robinmc", "solve-robin", "--config", str(SMOKE)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert "value" in json.loads(res.stdout)
