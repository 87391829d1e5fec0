import csv
import json
import math

import numpy as np
import pytest

from hdgcd.cli import main
from hdgcd.experiments import RunConfig, TableArtifact, run_checks, run_conditioning, run_convergence, run_fields


def read_vtk_values(path, name):
    lines = path.read_text().splitlines()
    i = lines.index(f"SCALARS {name} double 1")
    n = int(lines[lines.index(next(ln for ln in lines if ln.startswith("POINT_DATA")))].split()[1])
    return np.array([float(v) for v in lines[i + 2:i + 2 + n]])


def test_config_validation():
    with pytest.raises(ValueError, match="unknown config keys"):
        RunConfig.from_dict({"problem": "smooth", "colour": "red"})
    with pytest.raises(ValueError):
        RunConfig.from_dict({"method": "HDG7"})
    with pytest.raises(ValueError):
        RunConfig.from_dict({"epsilon": 0.0})
    cfg = RunConfig.from_dict({"epsilon": 1e-3, "k": 2})
    assert cfg.epsilon == [1e-3] and cfg.k == [2]


@pytest.mark.parametrize("method,eps,k,n,value", [
    ("HDG1", 1e-9, 1, 10, 2.04e-2),
    ("HDG3", 1.0, 2, 20, 1.41e-4),
])
def test_convergence_table_values(method, eps, k, n, value):
    cfg = RunConfig(problem="smooth", epsilon=[eps], k=[k], levels=[n], method=[method])
    (table,) = run_convergence(cfg)
    row = table.rows[0]
    assert row[:2] == [k, n] and row[-1] == "ok"
    assert row[2] == pytest.approx(value, rel=0.02)
    assert math.isnan(row[3])


def test_zero_problem_gives_zero_errors(tmp_path):
    cfg = RunConfig(problem={"exact": "0", "beta": ["1", "2"], "name": "zero"}, epsilon=[1e-3],
                    k=[0, 1], levels=[2, 4])
    (table,) = run_convergence(cfg)
    assert all(r[2] <= 1e-12 for r in table.rows)
    assert all(math.isnan(r[3]) for r in table.rows)
    rows = list(csv.reader(open(table.write(tmp_path))))
    assert rows[0] == ["k", "inv_h", "error", "order", "status"]
    assert all(r[3] == "" for r in rows[1:])


def test_order_column_consistent():
    cfg = RunConfig(problem="smooth", k=[1], levels=[4, 8, 16], method=["HDG1"], postprocess=True)
    (table,) = run_convergence(cfg)
    errs = [r[2] for r in table.rows]
    for i in (1, 2):
        assert table.rows[i][3] == pytest.approx(math.log2(errs[i - 1] / errs[i]), rel=1e-12)
        assert table.rows[i][5] == pytest.approx(2.0 + 1.0, abs=0.5)


def test_problem_without_exact_solution_rejected():
    with pytest.raises(ValueError, match="no exact solution"):
        run_convergence(RunConfig(problem="rotating", levels=[2]))


def test_conditioning_single_dof_and_trend():
    cfg = RunConfig(problem="smooth", epsilon=[1.0], k=[0], levels=[1], scaling="both")
    (table,) = run_conditioning(cfg)
    assert table.header == ["epsilon", "inv_h", "k", "kappa_unscaled", "accurate_unscaled",
                            "kappa_scaled", "accurate_scaled"]
    assert table.rows[0][3] == pytest.approx(1.0) and table.rows[0][5] == pytest.approx(1.0)
    cfg = RunConfig(problem="smooth", beta=[1.0, 2.0], epsilon=[1.0], k=[1], levels=[20, 40], scaling="scaled")
    (table,) = run_conditioning(cfg)
    ratio = table.rows[1][3] / table.rows[0][3]
    assert 3.2 <= ratio <= 4.8


def test_scaling_improves_small_eps_conditioning():
    cfg = RunConfig(problem="smooth", beta=[1.0, 1.0], epsilon=[1e-9], k=[1], levels=[10],
                    method=["HDG2"], scaling="both")
    (table,) = run_conditioning(cfg)
    assert table.rows[0][3] / table.rows[0][5] >= 1e3


@pytest.mark.parametrize("problem,eps,lo,hi", [
    ("rotating", 1e-6, -0.05, 1.05),
    ("interior_layer", 1e-9, -0.05, 1.05),
])
def test_piecewise_constant_fields_bounded(tmp_path, problem, eps, lo, hi):
    cfg = RunConfig(problem=problem, epsilon=[eps], k=[0], levels=[8], method=["HDG1"])
    (path,) = run_fields(cfg, tmp_path)
    vals = read_vtk_values(path, "u_h")
    assert np.all(np.isfinite(vals))
    assert vals.min() >= lo and vals.max() <= hi


def test_field_output_deterministic(tmp_path):
    cfg = RunConfig(problem="smooth", epsilon=[1e-3], k=[2], levels=[4], method=["HDG2"], postprocess=True)
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    (a,) = run_fields(cfg, tmp_path / "a")
    (b,) = run_fields(cfg, tmp_path / "b")
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("eps", [1.0, 1e-3, 1e-9])
def test_smooth_fields_bounded_on_resolved_meshes(tmp_path, eps):
    # coarse k=0 runs overshoot legitimately (the reference L2 error there exceeds |u|)
    cfg = RunConfig(problem="smooth", epsilon=[eps], k=[1, 2], levels=[20], method=["HDG1", "HDG2", "HDG3"],
                    postprocess=True)
    for path in run_fields(cfg, tmp_path):
        for name in ("u_h", "u_star"):
            assert np.abs(read_vtk_values(path, name)).max() <= 1.2


def test_csv_deterministic(tmp_path):
    cfg = RunConfig(problem="boundary_layer", epsilon=[1e-2], k=[1], levels=[10, 20], subdomain="reduced")
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    pa = run_convergence(cfg)[0].write(tmp_path / "a")
    pb = run_convergence(cfg)[0].write(tmp_path / "b")
    assert pa.read_bytes() == pb.read_bytes()


def test_table_artifact_formatting(tmp_path):
    t = TableArtifact("t", ["a", "b", "c", "d"], [[1, 0.5, float("nan"), True]])
    text = t.write(tmp_path).read_text()
    assert text == "a,b,c,d\n1,5.000000e-01,,true\n"


def test_checks_suite_passes():
    results = run_checks(2)
    failed = [r.name for r in results if not r.passed]
    assert not failed
    names = {r.name for r in results}
    assert {"mhdg_discriminates_pk", "tau_constant_zero_rejected", "mhdg_equivalence_rt_k1"} <= names


# --- command line ---------------------------------------------------------------

def test_cli_convergence_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["convergence", "--problem", "smooth", "--k", "1", "--levels", "2,4", "--out", str(out)])
    assert code == 0
    files = sorted(p.name for p in out.iterdir())
    assert files == ["convergence_smooth_HDG1_eps1.csv", "manifest.json"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "convergence"
    assert manifest["config"]["levels"] == [2, 4]
    assert set(manifest["versions"]) >= {"hdgcd", "numpy", "scipy", "python"}
    assert "convergence_smooth_HDG1_eps1" in capsys.readouterr().out


def test_cli_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"problem": "smooth", "epsilon": [1.0], "k": [0], "levels": [2],
                               "method": ["HDG3"], "out": str(tmp_path / "ignored")}))
    out = tmp_path / "out"
    assert main(["convergence", "--config", str(cfg), "--k", "1", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["k"] == [1] and manifest["config"]["method"] == ["HDG3"]
    assert not (tmp_path / "ignored").exists()


def test_cli_errors_exit_2(tmp_path, capsys):
    assert main(["convergence", "--method", "HDG9", "--out", str(tmp_path)]) == 2
    assert main(["convergence", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["conditioning", "--epsilon", "-1", "--out", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["nonsense"])


def test_cli_checks(tmp_path, capsys):
    assert main(["checks", "--n", "2", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "checks.json").read_text())
    assert all(r["passed"] for r in data)
    assert "PASS" in capsys.readouterr().out


def test_cli_mesh_generate_and_validate(tmp_path, capsys):
    path = tmp_path / "m.txt"
    assert main(["mesh", "generate", "--n", "4", "--refine", "1", "--out", str(path),
                 "--vtk", str(tmp_path / "m.vtk")]) == 0
    assert (tmp_path / "m.vtk").read_text().startswith("# vtk DataFile Version 2.0")
    assert main(["mesh", "validate", "--file", str(path), "--beta", "1,1", "--C", "1"]) == 0
    assert main(["mesh", "validate", "--file", str(path), "--beta", "1,2", "--C", "0"]) == 1
    sl = tmp_path / "s.txt"
    assert main(["mesh", "generate", "--streamline-h", "0.2", "--beta", "1,1", "--out", str(sl)]) == 0
    assert main(["mesh", "validate", "--file", str(sl), "--beta", "1,1"]) == 0
    out = capsys.readouterr().out
    assert "128 elements" in out and "special-mesh condition" in out


def test_cli_fields(tmp_path):
    out = tmp_path / "f"
    assert main(["fields", "--problem", "rotating", "--epsilon", "1e-6", "--k", "0", "--levels", "4",
                 "--out", str(out)]) == 0
    assert (out / "field_rotating_HDG1_eps1e-06_k0_n4.vtk").exists()
