import csv
import subprocess
import sys

import numpy as np
import pytest

from biot_cgp.cli import (
    CSV_HEADER,
    RunConfig,
    config_from_args,
    main,
    read_config_file,
    read_vtk,
    run_convergence,
)


def test_defaults_match_benchmark_setup():
    cfg, _ = config_from_args([])
    assert (cfg.k, cfg.ell, cfg.m, cfg.tau0, cfg.T, cfg.samples) == (1, 1, 5, 0.1, 1.0, 100)
    assert cfg.slabs(0) == 10 and cfg.slabs(2) == 40


def test_flags_override_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# study\nk = 2\nell = 2\nlevels = 4\nparam.s0 = 0.5\ntau0 = 0.05  # finer\n")
    cfg, _ = config_from_args(["--config", str(path), "--levels", "2", "--param", "alpha=0.8"])
    assert (cfg.k, cfg.ell, cfg.levels, cfg.tau0) == (2, 2, 2, 0.05)
    assert cfg.params == {"s0": 0.5, "alpha": 0.8}
    prm = cfg.model_parameters()
    assert prm.s0 == 0.5 and prm.alpha == 0.8


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    with pytest.raises(ValueError):
        read_config_file(bad)
    bad.write_text("just words\n")
    with pytest.raises(ValueError):
        read_config_file(bad)


@pytest.mark.parametrize("changes", [
    {"k": 0}, {"ell": 3}, {"levels": 0}, {"tau0": 0.3}, {"export_times": (2.0,)}, {"params": {"E": 1.0}},
])
def test_invalid_configs_rejected(changes):
    cfg = RunConfig(**changes)
    with pytest.raises(ValueError):
        cfg.validate()


def test_single_level_study(tmp_path):
    out = tmp_path / "t.csv"
    table = tmp_path / "t.txt"
    rep = run_convergence(RunConfig(levels=1, csv=str(out), table=str(table), samples=10))
    rows = list(csv.reader(out.open()))
    assert tuple(rows[0]) == CSV_HEADER and len(rows) == 2
    assert rows[1][4] == "--" and rows[1][10] == "--"
    assert len(rep.rows) == 1
    assert "err_grad_u" in table.read_text()


def test_two_level_study_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert main(["--levels", "2", "-m", "2", "--samples", "5", "--csv", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.reader(a.open()))
    assert len(rows) == 3 and rows[2][4] != "--"


def test_parallel_levels_match_sequential(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["--levels", "2", "-m", "2", "--samples", "5"]
    assert main(base + ["--csv", str(a)]) == 0
    assert main(base + ["--csv", str(b), "--parallel-levels"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_vtk_export(tmp_path):
    cfg = RunConfig(levels=1, samples=5, export_dir=str(tmp_path / "vtk"), export_times=(0.0, 0.5, 1.0))
    run_convergence(cfg)
    files = sorted((tmp_path / "vtk").glob("*.vtk"))
    assert len(files) == 3
    first = read_vtk(files[0])
    assert not np.any(first["u"])
    # P1 pressure is reproduced by linear interpolation on the sub-triangles, so
    # the piecewise-linear integral of the samples is the discrete mean (zero)
    data = read_vtk(files[1])
    X, C, p = data["points"], data["cells"], data["p"]
    e1, e2 = X[C[:, 1]] - X[C[:, 0]], X[C[:, 2]] - X[C[:, 0]]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    mean = np.sum(area * p[C].mean(axis=1))
    assert abs(area.sum() - 1) < 1e-12
    assert abs(mean) <= 1e-8
    assert np.abs(p).max() > 1e-4


def test_unwritable_export_path_fails(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = main(["--levels", "1", "--samples", "2", "--export-dir", str(blocker / "sub"), "--export-times", "0.5"])
    assert code != 0


def test_bad_arguments_exit_nonzero(capsys):
    assert main(["-k", "7"]) != 0
    assert "k must be" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "biot_cgp", "--levels", "1", "-m", "2", "--samples", "3"],
        capture_output=True, text=True, check=False,
    )
    assert res.returncode == 0, res.stderr
    assert "err_grad_u" in res.stdout and "cGP(1)" in res.stdout
