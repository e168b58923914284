import csv
import io
from fractions import Fraction

import pytest

from bfsplit import experiments as ex
from bfsplit.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_speedup_values(capsys):
    code, out, _ = run_cli(capsys, "speedup", "--densities", "6,8,16,32", "--schemes", "b3x6")
    assert code == 0
    rows = rows_of(out)
    got = {r["density"]: Fraction(r["projected_speedup_exact"]) for r in rows}
    assert got == {"6": 1, "8": Fraction(8, 6), "16": Fraction(16, 6), "32": Fraction(32, 6)}
    assert float(rows[1]["projected_speedup"]) == 8 / 6


def test_projected_speedup():
    assert ex.projected_speedup(8) == Fraction(4, 3)
    with pytest.raises(ValueError):
        ex.projected_speedup(0)


def test_determinism_and_out_file(tmp_path, capsys):
    args = ["gemm-accuracy", "--sizes", "8,12", "--trials", "3", "--seed", "5", "--dist", "uniform,wide"]
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(p1)]) == 0
    assert main(args + ["--out", str(p2)]) == 0
    assert p1.read_bytes() == p2.read_bytes()
    rows = rows_of(p1.read_text())
    assert len(rows) == 2 * 2 * 4
    assert {r["seed"] for r in rows} == {"5"} and len({r["config_hash"] for r in rows}) == 1
    assert main(["gemm-accuracy", "--sizes", "8,12", "--trials", "3", "--seed", "6", "--dist", "uniform,wide",
                 "--out", str(p2)]) == 0
    assert p1.read_bytes() != p2.read_bytes()


def test_float_format(capsys):
    _, out, _ = run_cli(capsys, "gemm-accuracy", "--sizes", "4", "--trials", "1", "--schemes", "sgemm")
    v = rows_of(out)[0]["mean_rel_err"]
    assert float(format(float(v), ".17g")) == float(v)


def test_identity_gemm_has_zero_error():
    import numpy as np
    from bfsplit.kernels import gemm_f64_reference, gemm_f32_reference, gemm_split, get_scheme
    from bfsplit.split import split_matrix
    I = np.eye(1, dtype=np.float32)
    for s in ("b2x3", "b3x6", "b3x6d"):
        sc = get_scheme(s)
        C = gemm_split(split_matrix(I, sc.x_splits), split_matrix(I, sc.y_splits), sc)
        assert ex._relerr(C, gemm_f64_reference(I, I)) == 0
    assert ex._relerr(gemm_f32_reference(I, I), gemm_f64_reference(I, I)) == 0


def test_getrf_size_one(capsys):
    code, out, _ = run_cli(capsys, "getrf-accuracy", "--sizes", "1", "--trials", "2")
    assert code == 0
    assert all(float(r["error_ratio"]) == 1.0 for r in rows_of(out))


def test_refine_and_gmres_rows(capsys):
    code, out, _ = run_cli(capsys, "refine", "--sizes", "10", "--trials", "2", "--dist", "cond:10",
                           "--schemes", "fp32")
    assert code == 0
    (row,) = rows_of(out)
    assert (row["precision"], row["cond"], row["pct_converged"]) == ("fp32", "10", "100")
    code, out, _ = run_cli(capsys, "gmres", "--sizes", "10", "--trials", "2", "--schemes", "none,bf16")
    assert code == 0 and len(rows_of(out)) == 2


def test_bound_audit_small(capsys):
    code, out, _ = run_cli(capsys, "bound-audit", "--sizes", "0,3,17", "--trials", "5")
    assert code == 0
    rows = rows_of(out)
    assert all(r["violations"] == "0" for r in rows)
    zero = [r for r in rows if r["n"] == "0"]
    assert zero and all(float(r["max_error"]) == 0 for r in zero)
    assert any(r["bound_kind"] == "bf16_z2_exact_case" for r in rows)


def test_bound_violation_exit_code(capsys, monkeypatch):
    import numpy as np
    real = ex.check_bound_batch

    def broken(kind, X, Y, computed):
        ok, slack = real(kind, X, Y, computed)
        return np.zeros_like(ok), slack

    monkeypatch.setattr(ex, "check_bound_batch", broken)
    code, out, err = run_cli(capsys, "bound-audit", "--sizes", "2", "--trials", "2")
    assert code == 2 and "violation" in err
    assert rows_of(out)


@pytest.mark.parametrize("argv", [
    [],
    ["nope"],
    ["gemm-accuracy", "--trials", "0"],
    ["gemm-accuracy", "--sizes", "a,b"],
    ["gemm-accuracy", "--schemes", "b9x9"],
    ["refine", "--schemes", "b3x6"],
    ["gemm-accuracy", "--dist", "cauchy"],
    ["speedup", "--densities", "-1"],
    ["speedup", "--densities", "x"],
    ["getrf-accuracy", "--sizes", "0"],
])
def test_usage_errors(argv, capsys):
    code, _, err = run_cli(capsys, *argv)
    assert code == 1 and "error" in err


def test_io_error(tmp_path, capsys):
    code, _, err = run_cli(capsys, "speedup", "--out", str(tmp_path / "missing" / "x.csv"))
    assert code == 3 and "cannot write" in err


def test_config_hash_ignores_out():
    a = ex.ExperimentConfig("speedup", out="a.csv").resolved()
    b = ex.ExperimentConfig("speedup", out="b.csv").resolved()
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != ex.ExperimentConfig("speedup", seed=1).resolved().config_hash()


def test_paper_scale_trials():
    assert ex.ExperimentConfig("gemm-accuracy").resolved().trials == 100
    assert ex.ExperimentConfig("gemm-accuracy", paper_scale=True).resolved().trials == 1000
    assert ex.ExperimentConfig("refine", paper_scale=True).resolved().trials == 100
