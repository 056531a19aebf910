import json

import numpy as np
import pytest

from synfem.harness.cli import main
from synfem.harness.config import ConfigError, ExperimentConfig, validate
from synfem.harness.io import load_solution, write_csv
from synfem.harness.study import convergence_study, run
from synfem.mesh import save_mesh, unit_square

NEWTONIAN_MMS = {
    "mesh": {"n": 2}, "levels": 2, "law": {"type": "rational", "a": 2.0, "b": 0.0},
    "convection": False, "c_d": 0.5,
    "f": {"type": "manufactured", "stream": "x**2*(1-x)**2*y**2*(1-y)**2", "p": "0", "c": "1/2"},
}


def write_config(tmp_path, raw):
    raw = dict(raw, output=str(tmp_path / "out"))
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(raw))
    return p


@pytest.mark.parametrize("raw, pointer", [
    ({"mesh": {"n": 0}}, "/mesh/n"),
    ({"pairing": "P1_P1"}, "/pairing"),
    ({"stress": {"nu0": -1}}, "/stress/nu0"),
    ({"solver": {"damping": 2.0}}, "/solver/damping"),
    ({"stress": {"c_range": [1.0, 0.0]}}, "/stress/c_range"),
    ({"mesh": {"path": "missing.txt"}}, "/mesh/path"),
    ({"bogus": 1}, "/"),
])
def test_config_pointer(raw, pointer, tmp_path):
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.from_dict(raw, tmp_path)
    assert exc.value.pointer == pointer


def test_defaults_merged():
    cfg = ExperimentConfig.from_dict({"stress": {"nu0": 2.0}})
    assert cfg["stress"]["kappa1"] == 1.0 and cfg.params.stress.nu0 == 2.0
    validate({})


def test_zero_forcing_run(tmp_path):
    cfg = ExperimentConfig.load(write_config(tmp_path, {"mesh": {"n": 2}, "c_d": 0.25}))
    table = run(cfg)
    assert all(r["converged"] for r in table.rows)
    header, data = load_solution(tmp_path / "out" / "solution_L0.npz")
    assert header["converged"] and not data["U"].any() and not data["P"].any()
    np.testing.assert_allclose(data["C"], 0.25)


def test_run_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    for d in (a, b):
        run(ExperimentConfig.load(write_config(d, NEWTONIAN_MMS)))
    assert (a / "out" / "convergence.csv").read_bytes() == (b / "out" / "convergence.csv").read_bytes()


def test_exact_solution_in_space():
    # u* = 0 and an affine c*: both lie in the discrete spaces
    raw = dict(NEWTONIAN_MMS, f={"type": "manufactured", "u": ["0", "0"], "p": "0", "c": "(x + y)/4"})
    table = convergence_study(ExperimentConfig.from_dict(raw), 2)
    for key in ("err_u_h1", "err_p_l2", "err_c_h1"):
        assert max(table.column(key)) <= 1e-12


def test_cli_run_and_errors(tmp_path, capsys):
    cfg = write_config(tmp_path, {"mesh": {"n": 2}})
    assert main(["run", "--config", str(cfg)]) == 0
    bad = write_config(tmp_path, {"mesh": {"n": 0}})
    assert main(["run", "--config", str(bad)]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "config" and err["pointer"] == "/mesh/n"


def test_cli_mesh_info(tmp_path, capsys):
    save_mesh(unit_square(1), tmp_path / "sq.txt")
    assert main(["mesh-info", str(tmp_path / "sq.txt"), "--refine", "1"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert (info["elements"], info["vertices"]) == (8, 9)
    (tmp_path / "bad.txt").write_text("1 1 0\n0 0\n0 1 2\n")
    assert main(["mesh-info", str(tmp_path / "bad.txt")]) == 2


def test_cli_study_and_diagnose(tmp_path):
    cfg = write_config(tmp_path, NEWTONIAN_MMS)
    assert main(["study", "--config", str(cfg), "--levels", "2", "--csv", str(tmp_path / "t.csv")]) == 0
    assert (tmp_path / "t.csv").read_text().startswith("level")
    assert main(["diagnose", "--config", str(cfg), "--which", "infsup", "--levels", "2"]) == 0


def test_write_csv_repr_roundtrip(tmp_path):
    x = 0.1 + 0.2
    write_csv(tmp_path / "a.csv", [{"a": x, "b": 3}])
    assert float((tmp_path / "a.csv").read_text().splitlines()[1].split(",")[0]) == x
