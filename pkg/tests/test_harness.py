import csv
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from extsolve.cli import main
from extsolve.config import ConfigError, load_config
from extsolve.experiment import REPORT_COLUMNS, add_noise, thread_cap
from extsolve.kernels import OperatorSpec, laplace, pde_residual
from extsolve.manufactured import manufactured_solution

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

GOLDEN_HEADER = ("study,point,operator,problem,method,reduction,n_sources,n_nodes,inner_radius,"
                 "middle_radius,outer_radius,alpha,delta,seed,residual_norm,solution_norm,"
                 "condition_estimate,effective_rank,alpha_used,field_error,probe_errors,flags")

BASE = """\
[operator]
kind = Laplace2D

[shell.inner]
kind = circle
radii = 1
n_nodes = 32

[shell.outer]
kind = circle
radii = 3
n_nodes = 32

[problem]
kind = inner-dirichlet
method = mfs
n_sources = 32

[data]
source = manufactured
z0 = 5, 0
"""


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_report(out):
    with open(out / "report.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def floats(rows, key):
    return [float(r[key]) for r in rows]


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------
def test_base_config_parses(tmp_path):
    cfg = load_config(write(tmp_path, BASE))
    assert cfg.operator.kind == "Laplace2D"
    assert cfg.shells["inner"]["radii"] == (1.0,)
    assert cfg.z0 == (5.0, 0.0)
    assert cfg.reg.method == "tikhonov" and cfg.reg.alpha is None


@pytest.mark.parametrize("old,new,line,pattern", [
    ("n_nodes = 32\n\n[shell.outer]", "n_nodes = many\n\n[shell.outer]", 7, "expected int"),
    ("radii = 3", "radii = -3", 11, "out of range"),
    ("method = mfs", "method = boundary-elements", 16, "not one of"),
    ("z0 = 5, 0", "z0 = 5, 0, 0", 21, "expected 2 coordinates"),
    ("n_sources = 32", "n_sources = 32\nn_sources = 16", 18, "duplicate key"),
    ("kind = Laplace2D", "kind = Laplace2D\nwavenumber = 3", 3, "unknown key"),
    ("[problem]", "[solver]\nx = 1\n\n[problem]", 14, "unknown section"),
])
def test_config_errors_carry_line_numbers(tmp_path, old, new, line, pattern):
    path = write(tmp_path, BASE.replace(old, new, 1))
    with pytest.raises(ConfigError, match=pattern) as info:
        load_config(path)
    assert info.value.line == line
    assert str(info.value).startswith(f"{path}:{line}:")


def test_missing_section_and_key(tmp_path):
    with pytest.raises(ConfigError, match=r"missing section \[operator\]"):
        load_config(write(tmp_path, BASE.replace("[operator]\nkind = Laplace2D\n", "")))
    with pytest.raises(ConfigError, match="missing required key 'kind'") as info:
        load_config(write(tmp_path, BASE.replace("kind = inner-dirichlet\n", "")))
    assert info.value.line == 14


def test_mfs_without_outer_shell_rejected(tmp_path):
    text = BASE.replace("[shell.outer]\nkind = circle\nradii = 3\nn_nodes = 32\n\n", "")
    with pytest.raises(ConfigError, match="shell.outer"):
        load_config(write(tmp_path, text))


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.ini")


# ---------------------------------------------------------------------------
# CLI exit codes
# ---------------------------------------------------------------------------
def test_usage_errors_exit_2(tmp_path, capsys):
    assert main([]) == 2
    assert main(["transmogrify", "--config", "x", "--out", "y"]) == 2
    assert "unknown subcommand" in capsys.readouterr().err
    assert main(["solve", "--out", str(tmp_path)]) == 2
    assert main(["solve", "--config", str(tmp_path / "absent.ini"), "--out", str(tmp_path)]) == 2
    bad = write(tmp_path, BASE.replace("radii = 3", "radii = three"))
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert f"{bad}:11:" in capsys.readouterr().err


def test_study_without_sweep_exits_2(tmp_path):
    cfg = write(tmp_path, BASE)
    assert main(["study-noise", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_bad_thread_count_exits_2(tmp_path, monkeypatch):
    monkeypatch.setenv("EXT_SOLVER_THREADS", "zero")
    cfg = write(tmp_path, BASE)
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    monkeypatch.setenv("EXT_SOLVER_THREADS", "3")
    assert thread_cap() == 3


def test_solve_clean_run(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["solve", "--config", str(write(tmp_path, BASE)), "--out", str(out)]) == 0
    assert (out / "report.csv").read_text().splitlines()[0] == GOLDEN_HEADER
    assert GOLDEN_HEADER.split(",") == list(REPORT_COLUMNS)
    rows = read_report(out)
    assert len(rows) == 1 and rows[0]["flags"] == ""
    assert float(rows[0]["field_error"]) < 1e-6
    field = (out / "field.csv").read_text().splitlines()
    assert field[0] == "x,y,component,value"
    assert len(field) == 1 + 32
    assert "1 point(s), 0 flagged" in capsys.readouterr().out


def test_report_has_sixteen_significant_digits(tmp_path):
    out = tmp_path / "o"
    main(["solve", "--config", str(write(tmp_path, BASE)), "--out", str(out)])
    row = read_report(out)[0]
    mantissa = row["residual_norm"].split("e")[0].replace("-", "").replace(".", "")
    assert len(mantissa) >= 12


def test_flagged_run_exits_1(tmp_path):
    # a probe at r = 2 is outside the source circle once the sources move to r = 2
    text = (BASE + "\n[probe.far]\nkind = circle\nradii = 2\nn_nodes = 16\n"
            + "\n[study]\nsource_radii = 3, 2\n")
    out = tmp_path / "o"
    assert main(["study-conditioning", "--config", str(write(tmp_path, text)), "--out", str(out)]) == 1
    rows = read_report(out)
    assert rows[0]["flags"] == ""
    assert "probe far skipped" in rows[1]["flags"]


def test_zero_data_gives_zero_field(tmp_path):
    text = BASE.replace("source = manufactured\nz0 = 5, 0", "source = zero")
    out = tmp_path / "o"
    assert main(["solve", "--config", str(write(tmp_path, text)), "--out", str(out)]) == 0
    with open(out / "field.csv", newline="") as fh:
        values = [float(r["value"]) for r in csv.DictReader(fh)]
    assert values and all(v == 0.0 for v in values)


def test_file_data_source(tmp_path):
    t = 2 * np.pi * np.arange(32) / 32
    np.savetxt(tmp_path / "f.txt", np.cos(t))
    text = BASE.replace("source = manufactured\nz0 = 5, 0", "source = file\nfile = f.txt")
    out = tmp_path / "o"
    assert main(["solve", "--config", str(write(tmp_path, text)), "--out", str(out)]) == 0
    with open(out / "field.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    x = np.array([[float(r["x"]), float(r["y"])] for r in rows])
    assert np.allclose([float(r["value"]) for r in rows], x[:, 0], atol=1e-8)


def test_triangulated_inner_boundary(tmp_path, cube_file):
    text = f"""\
[operator]
kind = Laplace3D

[shell.inner]
kind = triangulated
path = {cube_file}

[shell.outer]
kind = sphere
radii = 4
n_nodes = 50

[problem]
kind = inner-dirichlet
method = mfs
n_sources = 12

[data]
source = manufactured
z0 = 8, 0, 0
"""
    out = tmp_path / "o"
    assert main(["solve", "--config", str(write(tmp_path, text)), "--out", str(out)]) == 0
    assert (out / "field.csv").read_text().startswith("x,y,z,component,value\n")
    row = read_report(out)[0]
    assert row["n_nodes"] == "12" and row["inner_radius"] == ""


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------
def test_convergence_study_error_decreases(tmp_path):
    out = tmp_path / "o"
    cfg = CONFIGS / "mfs_laplace2d.ini"
    assert main(["study-convergence", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_report(out)
    assert [int(r["n_sources"]) for r in rows] == [8, 16, 32, 64]
    errs = floats(rows, "field_error")
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-6
    assert floats(rows, "residual_norm")[-1] < 1e-10


def test_noise_study_error_nondecreasing(tmp_path):
    out = tmp_path / "o"
    cfg = CONFIGS / "cauchy_laplace2d.ini"
    assert main(["study-noise", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_report(out)
    deltas = floats(rows, "delta")
    assert np.allclose(deltas, [1e-6, 1e-4, 1e-2], rtol=0, atol=1e-12)
    errs = floats(rows, "field_error")
    assert errs[0] <= errs[1] <= errs[2]
    assert all(r["reduction"] == "probe" for r in rows)


def test_conditioning_study_increases(tmp_path):
    out = tmp_path / "o"
    cfg = CONFIGS / "mfs_laplace2d.ini"
    main(["study-conditioning", "--config", str(cfg), "--out", str(out)])
    rows = read_report(out)
    assert floats(rows, "outer_radius") == [2.0, 3.0, 4.0]
    conds = floats(rows, "condition_estimate")
    assert conds[0] < conds[1] <= conds[2]


def test_add_noise_exact_size():
    v = np.linspace(-1, 2, 40)
    for delta in (1e-6, 1e-3, 0.5):
        noisy, achieved = add_noise(v, delta, seed=3)
        assert abs(np.linalg.norm(noisy - v) / np.linalg.norm(v) - delta) <= 1e-12
        # rounding in noisy - v costs a few digits for tiny delta
        assert achieved == pytest.approx(delta, rel=1e-10)
    again, _ = add_noise(v, 1e-3, seed=3)
    assert np.array_equal(add_noise(v, 1e-3, seed=3)[0], again)
    assert np.array_equal(add_noise(v, 0.0, seed=3)[0], v)


# ---------------------------------------------------------------------------
# determinism
# ---------------------------------------------------------------------------
def test_outputs_bytewise_deterministic_across_thread_counts(tmp_path, monkeypatch):
    cfg = CONFIGS / "mfs_laplace2d.ini"
    outputs = []
    for threads in ("1", "4", "1"):
        monkeypatch.setenv("EXT_SOLVER_THREADS", threads)
        out = tmp_path / f"o{len(outputs)}"
        assert main(["study-convergence", "--config", str(cfg), "--out", str(out)]) == 0
        outputs.append(((out / "report.csv").read_bytes(), (out / "field.csv").read_bytes()))
    assert outputs[0] == outputs[1] == outputs[2]


def test_console_script_subprocess(tmp_path):
    out = tmp_path / "o"
    env = dict(os.environ, EXT_SOLVER_THREADS="2")
    proc = subprocess.run([sys.executable, "-m", "extsolve.cli", "solve", "--config",
                           str(write(tmp_path, BASE)), "--out", str(out)],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "extsolve.cli", "frobnicate"],
                          capture_output=True, text=True)
    assert proc.returncode == 2


# ---------------------------------------------------------------------------
# kernel check and worked examples
# ---------------------------------------------------------------------------
def test_check_kernels_all_pass(tmp_path, capsys):
    assert main(["check-kernels", "--out", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 4 and all(line.startswith("PASS") for line in lines)
    assert {line.split()[1] for line in lines} == {"Laplace2D", "Laplace3D", "Helmholtz3D", "Lame3D"}
    assert (tmp_path / "kernels.csv").read_text().count("pass") == 4


def test_check_kernels_with_config(tmp_path, capsys):
    cfg = CONFIGS / "lame3d_mfs.ini"
    assert main(["check-kernels", "--config", str(cfg)]) == 0
    assert capsys.readouterr().out.startswith("PASS Lame3D")


def test_manufactured_laplace3d_example():
    ms = manufactured_solution(laplace(3), (5.0, 0.0, 0.0))
    value = ms.field([[1.0, 0.0, 0.0]])[0, 0]
    assert abs(value - 1 / (16 * np.pi)) < 1e-15
    assert abs(value - 0.019894368) < 1e-9


def test_lame_manufactured_column_satisfies_pde():
    op = OperatorSpec("Lame3D")
    assert pde_residual(op, [4.0, 0.0, 0.0], [0.2, -0.1, 0.3], 1e-3) < 1e-4
