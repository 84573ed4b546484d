import math
import subprocess
import sys

import numpy as np
import pytest

from cpalm import mri
from cpalm.cli import main
from cpalm.fileio import read_keyvalue, read_pgm
from cpalm.solver import read_trace_csv

NUMERIC_COLS = ("k", "F", "increment", "residual", "alpha", "beta")


def _numeric(path):
    return [[row[c] for c in NUMERIC_COLS] for row in read_trace_csv(path)]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "data"
    assert main(["synth", "--size", "64", "--coils", "4", "--mask", "poisson:0.3",
                 "--seed", "7", "--out", str(out)]) == 0
    return out


def _tree_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_synth_is_byte_identical(tmp_path, dataset, capsys):
    assert main(["synth", "--size", "64", "--coils", "4", "--mask", "poisson:0.3",
                 "--seed", "7", "--out", str(tmp_path / "again")]) == 0
    assert "ratio=0.300" in capsys.readouterr().out
    assert _tree_bytes(tmp_path / "again") == _tree_bytes(dataset)


def test_synth_radial_ratio_printed(tmp_path, capsys):
    assert main(["synth", "--size", "64", "--mask", "radial:0.34",
                 "--out", str(tmp_path / "r")]) == 0
    ratio = float(capsys.readouterr().out.strip().split("=")[1])
    assert 0.32 <= ratio <= 0.36


@pytest.mark.parametrize("argv", [["--size", "63"], ["--mask", "poisson"], ["--mask", "grid:0.3"],
                                  ["--mask", "poisson:abc"], ["--size", "8", "--mask", "radial:0.01"]])
def test_synth_parameter_errors(tmp_path, argv, capsys):
    assert main(["synth", "--out", str(tmp_path / "x")] + argv) == 2
    assert "error" in capsys.readouterr().err


def test_solve_logsum_outputs(tmp_path, dataset):
    out = tmp_path / "ls"
    assert main(["solve", "--data", str(dataset), "--out", str(out), "--maxiter", "60"]) == 0
    rows = read_trace_csv(out / "trace.csv")
    assert len(rows) == 60
    F = [r["F"] for r in rows]
    assert all(b <= a + 1e-10 * (1 + abs(a)) for a, b in zip(F, F[1:]))
    m = read_keyvalue(out / "metrics.txt")
    assert set(m) >= {"snr_db", "psnr_db", "relerr", "iters", "cpu_s"}
    assert m["iters"] == "60" and m["status"] == "max_iter"
    img, maxval = read_pgm(out / "recon.pgm")
    assert img.shape == (64, 64) and maxval == mri.PGM_MAX


def test_solve_maxiter_zero_is_zero_filled(tmp_path, dataset):
    out = tmp_path / "z"
    assert main(["solve", "--data", str(dataset), "--out", str(out), "--maxiter", "0"]) == 0
    assert (out / "trace.csv").read_text().splitlines() == \
        ["k,F,increment,residual,alpha,beta,wall_ms"]
    img, _ = read_pgm(out / "recon.pgm")
    expect = mri.to_pgm_scale(mri.load_dataset(dataset).zero_filled())
    np.testing.assert_array_equal(img, expect)


def test_solve_lp_metrics_keys(tmp_path, dataset):
    out = tmp_path / "lp"
    assert main(["solve", "--data", str(dataset), "--out", str(out), "--model", "lp:0.5",
                 "--maxiter", "20"]) == 0
    m = read_keyvalue(out / "metrics.txt")
    for key in ("snr_db", "psnr_db", "relerr", "iters", "cpu_s"):
        assert key in m


def test_eval_matches_metrics_and_identities(tmp_path, dataset, capsys):
    out = tmp_path / "ev"
    main(["solve", "--data", str(dataset), "--out", str(out), "--maxiter", "30"])
    capsys.readouterr()
    assert main(["eval", "--recon", str(out / "recon.pgm"), "--data", str(dataset)]) == 0
    printed = dict(line.split("=") for line in capsys.readouterr().out.split())
    m = read_keyvalue(out / "metrics.txt")
    for key in ("snr_db", "psnr_db", "relerr"):
        assert printed[key] == m[key]
        assert len(printed[key].split(".")[1]) == 4
    gap = float(printed["psnr_db"]) - float(printed["snr_db"])
    assert abs(gap - 10 * math.log10(64 * 64)) <= 1e-4 + 1e-12


def test_eval_ground_truth_against_itself(dataset, capsys):
    assert main(["eval", "--recon", str(dataset / "ground_truth.pgm"),
                 "--data", str(dataset)]) == 0
    out = capsys.readouterr().out
    assert "snr_db=inf" in out and "psnr_db=inf" in out and "relerr=0.0000" in out


def test_eval_shape_mismatch(tmp_path, dataset):
    small = tmp_path / "small"
    main(["synth", "--size", "16", "--out", str(small)])
    assert main(["eval", "--recon", str(small / "ground_truth.pgm"), "--data", str(dataset)]) == 2


def test_missing_dataset_is_io_error(tmp_path):
    assert main(["solve", "--data", str(tmp_path / "none"), "--out", str(tmp_path / "o")]) == 4
    assert main(["eval", "--recon", str(tmp_path / "r.pgm"), "--data", str(tmp_path)]) == 4


def test_delta_below_gram_bound_is_parameter_error(tmp_path, dataset, capsys):
    assert main(["solve", "--data", str(dataset), "--out", str(tmp_path / "d"),
                 "--delta", "1000"]) == 2
    assert "lam*rho_hat" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["--gamma1", "1.0"], ["--model", "tv"], ["--model", "lp:x"],
                                  ["--threads", "0"], ["--maxiter", "-3"], ["--lam", "0"]])
def test_solve_parameter_errors(tmp_path, dataset, argv):
    assert main(["solve", "--data", str(dataset), "--out", str(tmp_path / "p")] + argv) == 2


def test_descent_violation_exit_code(tmp_path, dataset):
    # an oversized fixed w-step is still a descent method; a tiny one is not
    out = tmp_path / "bad"
    code = main(["solve", "--data", str(dataset), "--out", str(out), "--beta", "1e-3",
                 "--maxiter", "50"])
    assert code == 3
    assert (out / "trace.csv").exists()
    assert read_keyvalue(out / "metrics.txt")["status"] == "DescentViolation"


def test_threads_do_not_change_trace(tmp_path, dataset):
    for n in ("1", "4"):
        assert main(["solve", "--data", str(dataset), "--out", str(tmp_path / n),
                     "--maxiter", "40", "--threads", n]) == 0
    assert _numeric(tmp_path / "1" / "trace.csv") == _numeric(tmp_path / "4" / "trace.csv")
    assert (tmp_path / "1" / "recon.pgm").read_bytes() == (tmp_path / "4" / "recon.pgm").read_bytes()


def test_dump_config(tmp_path, dataset, capsys):
    out = tmp_path / "cfg"
    assert main(["solve", "--data", str(dataset), "--out", str(out), "--maxiter", "0",
                 "--model", "lp:0.7", "--jacobi", "--dump-config"]) == 0
    conf = read_keyvalue(out / "config.txt")
    assert conf["model"] == "lp" and conf["p"] == "0.7" and conf["coupling"] == "jacobi"
    assert "lam=1000.0" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "cpalm", "synth", "--size", "8",
                          "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert res.stdout.startswith("ratio=")
